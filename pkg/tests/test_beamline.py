import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from talbotdecoh import beamline as bl
from talbotdecoh.collisions import decoherence_pressure, sigma_eff, visibility_vs_pressure
from talbotdecoh.core_model import GAS_TABLE, ThermalGasState
from talbotdecoh.errors import DomainError, EmptyDistributionError
from talbotdecoh.rng import RngStream

import oracles

CH4 = GAS_TABLE["CH4"]
CFG = bl.BeamlineConfig()


def state(p):
    return ThermalGasState(CH4, 300.0, p)


# --- configuration ----------------------------------------------------------

def test_config_validation():
    with pytest.raises(DomainError):
        bl.BeamlineConfig(mid_z=1.0)
    with pytest.raises(DomainError):
        bl.BeamlineConfig(source_height=-1e-6)
    with pytest.raises(DomainError):
        bl.BeamlineConfig(band_factors=(1.1, 1.3))
    with pytest.raises(DomainError):
        bl.CollisionKickModel(CH4, 300.0, "sticky")
    with pytest.raises(DomainError):
        bl.CollisionKickModel(CH4, 300.0, "forward_peaked", 1.0)


def test_calibrated_defaults_reproduce():
    h, mid_y = bl.calibrate_apertures()
    assert h == pytest.approx(bl.DEFAULT_APERTURE_HEIGHT, rel=1e-8)
    assert mid_y == pytest.approx(bl.DEFAULT_MID_OFFSET, rel=1e-8)


def test_doubling_gravity_scales_selected_speed():
    doubled = replace(CFG, gravity=2 * CFG.gravity)
    assert doubled.selected_speed == pytest.approx(math.sqrt(2) * CFG.selected_speed, rel=1e-14)


def test_doubling_gravity_and_oven_scale_whole_distribution():
    # with the oven speed scaled too, every trajectory is the same curve flown sqrt(2) faster
    scaled = replace(CFG, gravity=2 * CFG.gravity, oven_temperature=2 * CFG.oven_temperature)
    a = bl.detected_velocity_distribution(CFG, None, 50_000, RngStream(4))
    b = bl.detected_velocity_distribution(scaled, None, 50_000, RngStream(4))
    assert b.mean / a.mean == pytest.approx(math.sqrt(2), rel=1e-9)
    assert b.transmission == pytest.approx(a.transmission, rel=1e-9)


# --- source -----------------------------------------------------------------

def test_effusive_mean_speed():
    cfg = replace(CFG, band_factors=None)
    res = bl.trace(cfg, None, 1_000_000, RngStream(1), ignore_apertures=True)
    assert res.launch_speed.mean() == pytest.approx(bl.effusive_mean_speed(cfg.v_w), rel=5e-3)
    assert bl.effusive_mean_speed(cfg.v_w) == pytest.approx(oracles.effusive_mean(cfg.v_w), rel=1e-10)


def test_sample_source_matches_batch_launch():
    res = bl.trace(CFG, None, 20, RngStream(5), chunk_size=20)
    for i in range(20):
        s = bl.sample_source(CFG, RngStream(5, i))
        assert s.launch_speed == pytest.approx(res.launch_speed[i], rel=1e-12)
        assert s.weight == pytest.approx(res.launch_weight[i], rel=1e-12)
        assert abs(s.launch_height) <= CFG.source_height / 2
        out = bl.propagate_and_select(s, CFG)
        assert out.survived == (res.w_free[i] > 0)
        if out.survived:
            assert out.detected_speed == pytest.approx(res.speed_free[i], rel=1e-12)


def test_zero_apertures_transmit_nothing():
    closed = CFG.with_apertures(0.0)
    res = bl.trace(closed, None, 10_000, RngStream(0))
    assert res.transmission == 0.0
    with pytest.raises(EmptyDistributionError):
        bl.detected_velocity_distribution(closed, None, 10_000, RngStream(0))
    mid_closed = replace(CFG, mid_height=0.0)
    assert bl.trace(mid_closed, None, 10_000, RngStream(0)).transmission == 0.0


def test_no_gravity_no_selection():
    flat = replace(CFG, gravity=0.0, mid_y=0.0, band_factors=None)
    res = bl.trace(flat, None, 200_000, RngStream(2))
    speeds, _ = res.detected()
    assert speeds.size > 0
    # detected speeds are an unbiased subsample of the source speeds
    assert stats.ks_2samp(speeds, res.launch_speed).pvalue > 1e-3
    assert speeds.mean() == pytest.approx(bl.effusive_mean_speed(flat.v_w), rel=0.01)


# --- selection ----------------------------------------------------------------

def _aimed(speed, slope, y0=0.0):
    vz = speed / math.sqrt(1 + slope * slope)
    return bl.TrajectorySample(0, 0, (0.0, slope * vz, vz), y0)


def test_constructed_pass_and_fail():
    v = CFG.selected_speed
    slope = 2 * CFG.mid_y / CFG.mid_z
    out = bl.propagate_and_select(_aimed(v, slope), CFG)
    assert out.survived
    assert out.detected_speed == pytest.approx(v, rel=1e-9)
    assert not bl.propagate_and_select(_aimed(v, 0.0), CFG).survived
    assert not bl.propagate_and_select(_aimed(1.5 * v, slope), CFG).survived
    assert not bl.propagate_and_select(_aimed(v, slope, y0=CFG.source_height), CFG).survived


def test_calibration_target_met():
    dist = bl.detected_velocity_distribution(CFG, None, 1_000_000, RngStream(1))
    assert dist.mean == pytest.approx(117.0, rel=0.02)
    assert dist.fwhm_ratio == pytest.approx(0.08, abs=0.01)
    assert dist.weights.sum() == pytest.approx(dist.transmission, rel=1e-12)
    assert 0 < dist.transmission <= 1
    assert np.all(dist.weights >= 0)


# --- collisions ---------------------------------------------------------------

def test_zero_pressure_means_no_collisions():
    res = bl.trace(CFG, state(0.0), 20_000, RngStream(3))
    assert np.all(res.n_coll == 0) and np.all(res.w_coll == 0)
    s = bl.sample_source(CFG, RngStream(3))
    assert bl.apply_collisions(s, CFG, state(0.0)) is s


def test_mean_collision_count_matches_poisson_mean():
    p = 2.5e-4
    gs = state(p)
    kick = bl.CollisionKickModel(CH4, 300.0, "none")
    res = bl.trace(CFG, gs, 200_000, RngStream(8), kick, ignore_apertures=True)
    sig = np.array([sigma_eff(CH4, v, 300.0).value for v in res.launch_speed])
    w = res.launch_weight
    # path length is the source-detector distance to well below 1e-6
    expected = gs.number_density * CFG.detector_z * np.sum(w * sig) / np.sum(w)
    assert res.mean_collisions == pytest.approx(expected, rel=0.02)


def test_scalar_collisions_are_poisson():
    gs = state(1e-4)
    kick = bl.CollisionKickModel(CH4, 300.0, "none")
    cfg = CFG.with_apertures(1.0)  # wide open: count collisions only
    counts, means = [], []
    for i in range(3000):
        s = bl.sample_source(CFG, RngStream(12, i))
        counts.append(bl.apply_collisions(s, cfg, gs, kick).collision_count)
        v = s.launch_speed
        means.append(gs.number_density * sigma_eff(CH4, v, 300.0).value * v * cfg.detector_z
                     / s.launch_velocity[2])
    counts, means = np.array(counts), np.array(means)
    # each trajectory has its own Poisson mean; pooled counts are over-dispersed
    assert counts.mean() == pytest.approx(means.mean(), rel=0.03)
    assert np.mean((counts - means) ** 2 / means) == pytest.approx(1.0, abs=0.08)


def test_transmission_monotone_in_pressure():
    pressures = [0.0, 5e-5, 1e-4, 1.5e-4, 2.5e-4]
    trans = [bl.trace(CFG, state(p), 100_000, RngStream(6)).transmission for p in pressures]
    assert all(b <= a for a, b in zip(trans, trans[1:]))
    assert trans[-1] < 0.5 * trans[0]


def test_pressure_broadens_distribution():
    d0 = bl.detected_velocity_distribution(CFG, state(0.0), 200_000, RngStream(7))
    d1 = bl.detected_velocity_distribution(CFG, state(2.5e-4), 200_000, RngStream(7))
    assert d1.variance > 2 * d0.variance
    assert d1.mean_collisions > 1


def test_kick_gas_mismatch():
    with pytest.raises(DomainError):
        bl.trace(CFG, state(1e-4), 100, RngStream(0), bl.CollisionKickModel(GAS_TABLE["N2"], 300.0))


# --- determinism and statistics ------------------------------------------------

@pytest.mark.parametrize("law", ["none", "isotropic", "diffractive", "forward_peaked"])
def test_thread_and_chunk_independence(law):
    kick = bl.CollisionKickModel(CH4, 300.0, law, 0.5 if law == "forward_peaked" else 0.0)
    a = bl.trace(CFG, state(2e-4), 30_000, RngStream(9, 2), kick, threads=1)
    b = bl.trace(CFG, state(2e-4), 30_000, RngStream(9, 2), kick, threads=4, chunk_size=4096)
    for name in ("launch_speed", "w_free", "speed_free", "w_coll", "alive_coll", "speed_coll", "n_coll"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_python_backend_matches_compiled_batch():
    a = bl.trace(CFG, state(2e-4), 3000, RngStream(1), backend="python")
    b = bl.trace(CFG, state(2e-4), 3000, RngStream(1))
    assert np.array_equal(a.w_coll, b.w_coll) and np.array_equal(a.speed_coll, b.speed_coll)


def test_transmission_standard_error_scaling():
    def spread(n):
        return np.std([bl.trace(CFG, None, n, RngStream(100 + s)).transmission for s in range(40)], ddof=1)

    ratio = spread(10_000) / spread(160_000)
    assert 2.8 < ratio < 5.7


def test_fwhm_of_gaussian_sample():
    x = np.random.default_rng(0).normal(100.0, 3.0, 400_000)
    assert bl.fwhm(x, np.ones_like(x)) == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 3.0, rel=0.02)


def test_minimum_sample_count():
    with pytest.raises(DomainError):
        bl.detected_velocity_distribution(CFG, None, 9_999, RngStream(0))


# --- visibility correction ------------------------------------------------------

def test_corrected_visibility_at_zero_pressure_is_weighted_mean():
    dist = bl.detected_velocity_distribution(CFG, state(0.0), 50_000, RngStream(0), bins=50)
    v0 = lambda v: 0.3 + 1e-3 * (v - 117.0)
    got = bl.corrected_visibility(CFG, state(0.0), v0, 50_000, RngStream(0), distribution=dist)
    ref = np.sum(dist.weights * np.array([v0(v) for v in dist.centers])) / dist.weights.sum()
    assert got == pytest.approx(ref, rel=1e-12)


def test_single_bin_reduces_to_exponential():
    v = 117.0
    dist = bl.DetectedDistribution(np.array([v - 0.5, v + 0.5]), np.array([0.01]), 0.01, 5e-5, 10_000,
                                   np.array([v]), np.array([1.0]))
    got = bl.corrected_visibility(CFG, state(5e-5), lambda s: 0.41, 10_000, RngStream(0), distribution=dist)
    p0 = decoherence_pressure(CH4, v, 300.0, 0.22)
    assert got == visibility_vs_pressure(0.41, p0, 5e-5)


def test_corrected_decay_shifts_p0_moderately():
    pressures = np.linspace(0.0, 2.5e-4, 6)
    vis = [bl.corrected_visibility(CFG, state(p), lambda v: 0.41, 200_000, RngStream(11))
           for p in pressures]
    slope = np.polyfit(pressures, np.log(vis), 1)[0]
    shift = (-1.0 / slope) / decoherence_pressure(CH4, 117.0, 300.0, 0.22)
    assert 0.7 < shift < 1.3
    # gas attenuation favours fast molecules, whose p0 is larger: the decay is slower
    assert shift == pytest.approx(1.0584, abs=0.005)
