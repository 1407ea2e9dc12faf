import math
import warnings

import numpy as np
import pytest
from scipy import stats

from talbotdecoh import beamline as bl
from talbotdecoh.collisions import decoherence_pressure, visibility_vs_pressure
from talbotdecoh.core_model import GAS_TABLE, mbar_to_pa, pa_to_mbar
from talbotdecoh.errors import DomainError, FitError, NoSignalError
from talbotdecoh.experiment import (
    ExperimentConditions,
    NoiseModel,
    PressureScan,
    SampledFringe,
    default_pressures,
    extract_visibility,
    extrapolate_vacuum_requirement,
    extrapolation_constant,
    fit_exponential,
    gas_survey,
    simulate_fringe,
    simulate_pressure_scan,
    vacuum_spectrum,
)
from talbotdecoh.rng import RngStream
from talbotdecoh.talbot_lau import FourierSpectrum, visibility

import oracles

CH4 = GAS_TABLE["CH4"]
D = 991e-9
P0_CH4 = decoherence_pressure(CH4, 117.0, 300.0, 0.22)
PINNED = ExperimentConditions(v0=0.41)


# --- fringes ----------------------------------------------------------------

def test_noiseless_fringe_is_exact_curve():
    spec = FourierSpectrum.from_nonnegative([1.0, 0.2], D)
    fr = simulate_fringe(spec, 16, math.inf)
    x = np.arange(16) / 16
    assert np.allclose(fr.counts, 1 + 0.4 * np.cos(2 * np.pi * x), atol=1e-14)
    vis, _ = extract_visibility(fr)
    assert vis == pytest.approx(0.4, abs=1e-12)


def test_flat_spectrum_gives_constant_counts():
    fr = simulate_fringe(FourierSpectrum.from_nonnegative([0.3, 0.0], D), 12, 1000.0)
    assert np.allclose(fr.expected, 1000.0)


def test_poisson_realisations_average_to_expectation():
    spec = FourierSpectrum.from_nonnegative([1.0, 0.15, 0.02], D)
    counts = np.array([simulate_fringe(spec, 16, 200.0, RngStream(3).substream(i)).counts
                       for i in range(1000)])
    expected = simulate_fringe(spec, 16, 200.0).expected
    z = (counts.mean(axis=0) - expected) / np.sqrt(expected / 1000)
    assert np.sum(np.abs(z) > 3) <= 1
    assert stats.chi2.sf(np.sum(z * z), len(z)) > 1e-3


def test_high_count_visibility_estimate():
    spec = vacuum_spectrum(ExperimentConditions())
    fr = simulate_fringe(spec, 16, 1e6, RngStream(1))
    vis, err = extract_visibility(fr)
    assert abs(vis - visibility(spec)) < 2 * err
    assert err < 2e-3


def test_visibility_error_estimate_is_calibrated():
    spec = FourierSpectrum.from_nonnegative([1.0, 0.2], D)
    draws = [extract_visibility(simulate_fringe(spec, 16, 1000.0, RngStream(5).substream(i)))
             for i in range(2000)]
    v = np.array([d[0] for d in draws])
    e = np.array([d[1] for d in draws])
    assert np.std(v) == pytest.approx(np.mean(e), rel=0.1)


def test_aliasing_guard_and_no_signal():
    spec = FourierSpectrum.from_nonnegative([1.0, 0.2, 0.1, 0.05, 0.02, 0.01], D)
    fr = simulate_fringe(spec, 8, 1e4)
    with pytest.raises(DomainError, match="alias"):
        extract_visibility(fr)
    extract_visibility(simulate_fringe(spec, 12, 1e4))
    empty = SampledFringe(np.zeros(8), np.zeros(8), np.zeros(8), D, 1)
    with pytest.raises(NoSignalError):
        extract_visibility(empty)
    with pytest.raises(DomainError):
        simulate_fringe(spec, 6, 1e4)


# --- scans and fits -----------------------------------------------------------

def test_default_pressure_grid():
    p = default_pressures()
    assert p[0] == 0.0 and len(p) == 9
    assert pa_to_mbar(p[1]) == pytest.approx(5e-8) and pa_to_mbar(p[-1]) == pytest.approx(2.5e-6)
    assert np.allclose(np.diff(np.log(p[1:])), np.log(50) / 7)


def test_noiseless_scan_lies_on_exponential_and_fits_exactly():
    scan = simulate_pressure_scan(CH4, PINNED, noise=NoiseModel.noiseless())
    assert np.allclose(scan.visibilities, visibility_vs_pressure(0.41, P0_CH4, scan.pressures),
                       rtol=1e-13, atol=0)
    fit = fit_exponential(scan)
    assert fit.v0_fit == pytest.approx(0.41, rel=1e-10)
    assert fit.p0_fit == pytest.approx(P0_CH4, rel=1e-10)


def test_default_scan_shape():
    scan = simulate_pressure_scan(CH4, PINNED, rng=RngStream(2))
    assert scan.visibilities[0] == pytest.approx(0.41, abs=0.01)
    assert scan.visibilities[-1] < 0.05
    assert scan.metadata["seed"] == 2


def test_calibrated_geometry_scan_fits_close_to_prediction():
    scan = simulate_pressure_scan(CH4, ExperimentConditions(), rng=RngStream(0))
    fit = fit_exponential(scan)
    assert fit.v0_fit == pytest.approx(0.41, abs=0.01)
    assert fit.p0_fit == pytest.approx(P0_CH4, rel=0.05)


def test_contrast_floor_scales_visibility_not_p0():
    full = simulate_pressure_scan(CH4, PINNED, noise=NoiseModel.noiseless())
    half = simulate_pressure_scan(CH4, PINNED, noise=NoiseModel.noiseless(0.5))
    assert np.allclose(half.visibilities, 0.5 * full.visibilities, rtol=1e-14)
    assert fit_exponential(half).p0_fit == pytest.approx(fit_exponential(full).p0_fit, rel=1e-12)


def test_exact_synthetic_fit():
    p = np.linspace(0, 3e-4, 6)
    v = 0.41 * np.exp(-p / 9.5e-5)
    fit = fit_exponential(PressureScan(CH4, p, v, np.zeros(6)))
    assert fit.v0_fit == pytest.approx(0.41, rel=1e-10)
    assert fit.p0_fit == pytest.approx(9.5e-5, rel=1e-10)


def test_fit_rejects_degenerate_input():
    with pytest.raises(FitError):
        fit_exponential(PressureScan(CH4, np.array([0.0, 1e-4]), np.array([0.4, 0.2]), np.zeros(2)))
    with pytest.raises(FitError):
        fit_exponential(PressureScan(CH4, np.array([0.0, 1e-4, 2e-4]), np.array([0.2, 0.3, 0.4]),
                                     np.zeros(3)))


def test_fit_drops_zero_and_weak_points():
    p = np.linspace(0, 2e-4, 5)
    v = np.array([0.4, 0.3, 0.2, 0.1, 0.0])
    e = np.array([0.01, 0.01, 0.01, 0.05, 0.01])
    with pytest.warns(UserWarning):
        fit = fit_exponential(PressureScan(CH4, p, v, e))
    assert fit.n_used == 3


def test_scan_validation():
    with pytest.raises(DomainError):
        PressureScan(CH4, np.array([0.0, 0.0]), np.array([0.4, 0.3]), np.zeros(2))
    with pytest.raises(DomainError):
        PressureScan(CH4, np.array([0.0, 1.0]), np.array([0.4, 1.3]), np.zeros(2))
    with pytest.raises(DomainError):
        ExperimentConditions(mode="magic")
    with pytest.raises(DomainError):
        NoiseModel(contrast_floor=0.0)


def test_high_pressure_warning():
    with pytest.warns(UserWarning, match="outside"):
        simulate_pressure_scan(CH4, PINNED, [0.0, mbar_to_pa(1e-5)], NoiseModel.noiseless())


def test_noisy_fit_is_unbiased():
    p = np.linspace(0, mbar_to_pa(2.5e-6), 10)
    noise = NoiseModel(shot_noise=False, relative_noise=0.05)
    fits = [fit_exponential(simulate_pressure_scan(CH4, PINNED, p, noise, RngStream(s))) for s in range(100)]
    p0 = np.array([f.p0_fit for f in fits])
    assert abs(p0.mean() / P0_CH4 - 1) < 0.01


def test_scans_are_reproducible():
    a = simulate_pressure_scan(CH4, PINNED, rng=RngStream(4))
    b = simulate_pressure_scan(CH4, PINNED, rng=RngStream(4))
    c = simulate_pressure_scan(CH4, PINNED, rng=RngStream(5))
    assert np.array_equal(a.visibilities, b.visibilities)
    assert not np.array_equal(a.visibilities, c.visibilities)


def test_beamline_mode_scan():
    cond = ExperimentConditions(v0=0.41, mode="beamline", beamline_samples=50_000)
    scan = simulate_pressure_scan(CH4, cond, noise=NoiseModel.noiseless(), rng=RngStream(0))
    fit = fit_exponential(scan)
    assert scan.visibilities[0] == pytest.approx(0.41, rel=1e-12)
    assert 0.7 < fit.p0_fit / P0_CH4 < 1.3


# --- survey -------------------------------------------------------------------

def test_survey_consistency_with_two_percent_noise():
    noise = NoiseModel(shot_noise=False, relative_noise=0.02)
    rows = gas_survey(conditions=PINNED, noise=noise, rng=RngStream(1))
    assert [r.gas for r in rows] == list(GAS_TABLE)
    for r in rows:
        assert 0.8 <= r.ratio <= 1.2
        assert r.p0_predicted == pytest.approx(decoherence_pressure(GAS_TABLE[r.gas], 117.0, 300.0, 0.22))


def test_survey_single_gas():
    rows = gas_survey(["N2"], PINNED, noise=NoiseModel.noiseless())
    assert len(rows) == 1
    assert rows[0].p0_fitted == pytest.approx(decoherence_pressure(GAS_TABLE["N2"], 117.0, 300.0, 0.22),
                                              rel=1e-10)
    with pytest.raises(DomainError):
        gas_survey([], PINNED)


def test_survey_gas_order_sets_streams():
    noise = NoiseModel(shot_noise=False, relative_noise=0.05)
    a = gas_survey(["N2", "Ar"], PINNED, noise=noise, rng=RngStream(3))
    b = gas_survey(["N2", "Kr"], PINNED, noise=noise, rng=RngStream(3))
    assert a[0] == b[0]


# --- extrapolation ------------------------------------------------------------

def test_virus_extrapolation():
    p0 = pa_to_mbar(extrapolate_vacuum_requirement(5e7, 10.0, 1.0))
    assert p0 == pytest.approx(2.7e-10, rel=0.15)
    assert p0 == pytest.approx(2.7665009906245695e-10, rel=1e-12)
    assert extrapolation_constant(5e7) == pytest.approx(2.7e-11, rel=0.15)
    ref = oracles.decoherence_pressure_hand(28.014, 3.5e-3 * 5e7, 10.0, 300.0, 1.0)
    assert extrapolate_vacuum_requirement(5e7, 10.0, 1.0) == pytest.approx(ref, rel=1e-12)


def test_extrapolation_scalings():
    base = extrapolate_vacuum_requirement(5e7, 10.0, 1.0)
    assert extrapolate_vacuum_requirement(5e7, 10.0, 2.0) == pytest.approx(base / 2, rel=1e-15)
    assert extrapolate_vacuum_requirement(32 * 5e7, 10.0, 1.0) == pytest.approx(base / 4, rel=1e-13)
    # linear in v_m up to the small (v_m / v_gas)**2 term of the cross section
    assert extrapolate_vacuum_requirement(5e7, 20.0, 1.0) == pytest.approx(2 * base, rel=1e-3)
    with pytest.raises(DomainError):
        extrapolate_vacuum_requirement(5e7, 10.0, 0.0)
