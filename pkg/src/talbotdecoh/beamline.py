"""Classical Monte Carlo of the molecular beam: gravity, apertures, collisions.

The beam leaves an effusive source (speed density ``v**3 exp(-v**2/v_w**2)``),
flies on parabolas through a horizontal slit half-way along the beamline and
into the detection region.  Since source, slit and detector heights are
small, only a narrow band of speeds whose gravitational sag matches the
slit offset reaches the detector.

Collisions with the background gas are sampled along the whole path.  Each
trajectory is split in two weighted branches: the uncollided one (weight
``exp(-tau)``) and one with a collision forced before the end of the free
flight (weight ``1 - exp(-tau)``), which keeps the variance low at small
pressures.  Every random number is a pure function of
``(seed, stream, counter)``, so results do not depend on chunking or threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from . import _pykernels, kernels
from .collisions import SIGMA_COEFF_0, SIGMA_COEFF_2, visibility_vs_pressure
from .core_model import (
    C70,
    CONSTANTS,
    GasSpecies,
    MoleculeSpecies,
    ThermalGasState,
    most_probable_speed,
)
from .errors import DomainError, EmptyDistributionError
from .rng import RngStream, stream_key
from .talbot_lau import InterferometerGeometry, standard_geometry

__all__ = [
    "BeamlineConfig",
    "CollisionKickModel",
    "TrajectorySample",
    "TraceResult",
    "DetectedDistribution",
    "KICK_LAWS",
    "effusive_mean_speed",
    "oven_speed_scale",
    "calibrate_apertures",
    "analytic_speed_density",
    "sample_source",
    "propagate_and_select",
    "apply_collisions",
    "trace",
    "detected_velocity_distribution",
    "corrected_visibility",
    "distribution_visibility",
    "fwhm",
]

KICK_LAWS = {"none": 0, "isotropic": 1, "diffractive": 2, "forward_peaked": 3}

DEFAULT_CHUNK = 1 << 15
# streams of one RngStream are (stream << STREAM_SHIFT) + trajectory index
STREAM_SHIFT = 32

# Calibrated for a 117 m/s mean and 8 % FWHM with a 900 K oven and the
# 2.38 m beamline (see calibrate_apertures).
DEFAULT_TARGET_SPEED = 117.0
DEFAULT_FWHM_RATIO = 0.08
DEFAULT_OVEN_TEMPERATURE = 900.0
DEFAULT_APERTURE_HEIGHT = 8.178979318361244e-05
DEFAULT_MID_OFFSET = 5.121349325818179e-04


def oven_speed_scale(temperature, molecule: MoleculeSpecies = C70) -> float:
    """``v_w = sqrt(2 k_B T / M)`` of the effusive source."""
    if not temperature > 0:
        raise DomainError(f"oven temperature must be positive, got {temperature!r}")
    return math.sqrt(2.0 * CONSTANTS.boltzmann_kB * temperature / molecule.mass_kg)


def effusive_mean_speed(v_w) -> float:
    """Mean of the density ``2 v**3 / v_w**4 exp(-v**2 / v_w**2)``."""
    return 0.75 * math.sqrt(math.pi) * v_w


@dataclass(frozen=True)
class BeamlineConfig:
    """Vertical beamline geometry, SI units; z along the beam, y up.

    The source sits at ``z = 0``.  Aperture heights may be zero, which
    closes the aperture.  ``band_factors`` restricts launch speeds to
    ``[lo, hi]`` times the speed selected by the slit offset, with the
    source density carried as a weight; ``None`` samples the full source
    distribution.
    """

    source_height: float = DEFAULT_APERTURE_HEIGHT
    source_y: float = 0.0
    oven_temperature: float = DEFAULT_OVEN_TEMPERATURE
    mid_z: float = 1.19
    mid_height: float = DEFAULT_APERTURE_HEIGHT
    mid_y: float = DEFAULT_MID_OFFSET
    detector_z: float = 2.38
    detector_height: float = DEFAULT_APERTURE_HEIGHT
    detector_y: float = 0.0
    interferometer: InterferometerGeometry = field(default_factory=standard_geometry)
    gravity: float = CONSTANTS.gravity_g
    band_factors: tuple | None = (0.8, 1.25)
    window_factor: float = 1.5
    target_speed: float = DEFAULT_TARGET_SPEED
    molecule: MoleculeSpecies = C70

    def __post_init__(self):
        if not 0.0 < self.mid_z < self.detector_z:
            raise DomainError("positions must increase: 0 < mid_z < detector_z")
        if abs(self.mid_z - 0.5 * self.detector_z) > 1e-9 * self.detector_z:
            raise DomainError("the mid slit must sit half-way between source and detector")
        for name in ("source_height", "mid_height", "detector_height"):
            if not getattr(self, name) >= 0.0:
                raise DomainError(f"{name} must be non-negative")
        if not self.oven_temperature > 0:
            raise DomainError("oven temperature must be positive")
        if not self.gravity >= 0:
            raise DomainError("gravity must be non-negative")
        if not self.window_factor >= 1.0:
            raise DomainError("window_factor must be >= 1")
        if 2.0 * self.interferometer.spacing >= self.detector_z:
            raise DomainError("interferometer does not fit between source and detector")
        if self.band_factors is not None:
            lo, hi = self.band_factors
            if not 0.0 < lo < 1.0 < hi:
                raise DomainError("band_factors must satisfy 0 < lo < 1 < hi")

    @property
    def v_w(self) -> float:
        return oven_speed_scale(self.oven_temperature, self.molecule)

    @property
    def selected_speed(self) -> float:
        """Speed whose sag centres the beam on all three apertures (0 if none)."""
        sag = self.mid_y - 0.5 * (self.source_y + self.detector_y)
        if sag <= 0.0 or self.gravity == 0.0:
            return 0.0
        return math.sqrt(self.gravity * self.mid_z ** 2 / (2.0 * sag))

    @property
    def speed_band(self) -> tuple:
        vc = self.selected_speed
        if self.band_factors is None or vc == 0.0:
            return (0.0, 0.0)
        return (self.band_factors[0] * vc, self.band_factors[1] * vc)

    @property
    def grating_positions(self) -> tuple:
        L = self.interferometer.spacing
        return (self.mid_z - L, self.mid_z, self.mid_z + L)

    def with_apertures(self, height) -> "BeamlineConfig":
        return replace(self, source_height=height, mid_height=height, detector_height=height)


@dataclass(frozen=True)
class CollisionKickModel:
    """How a collision changes the molecule velocity.

    The gas partner velocity is Maxwell-Boltzmann; the relative velocity is
    rotated elastically in the centre-of-mass frame by a polar angle drawn
    from ``law``:

    ``"diffractive"``
        Momentum transfer Rayleigh-distributed with scale ``hbar / rho``,
        ``pi rho**2`` matching half the effective cross section at the
        current speed (default).
    ``"isotropic"``
        Uniform in the centre-of-mass frame.
    ``"forward_peaked"``
        Henyey-Greenstein with asymmetry ``param``.
    ``"none"``
        Count collisions without deflection.
    """

    gas: GasSpecies
    temperature: float = 300.0
    law: str = "diffractive"
    param: float = 0.0

    def __post_init__(self):
        if self.law not in KICK_LAWS:
            raise DomainError(f"unknown kick law {self.law!r}; use one of {sorted(KICK_LAWS)}")
        if self.law == "forward_peaked" and not 0.0 <= self.param < 1.0:
            raise DomainError("forward-peaked asymmetry must lie in [0, 1)")
        if not self.temperature > 0:
            raise DomainError("temperature must be positive")


@dataclass(frozen=True)
class TrajectorySample:
    """One molecule; ``stream`` identifies its random numbers."""

    seed: int
    stream: int
    launch_velocity: tuple
    launch_height: float
    weight: float = 1.0
    collision_count: int = 0
    survived: bool = True
    detected_speed: float = 0.0

    @property
    def launch_speed(self) -> float:
        return math.sqrt(sum(c * c for c in self.launch_velocity))


@dataclass(frozen=True, eq=False)
class TraceResult:
    """Raw branch data of a batch of trajectories (see the module docstring)."""

    n_samples: int
    pressure: float
    launch_speed: np.ndarray
    launch_weight: np.ndarray
    w_free: np.ndarray
    speed_free: np.ndarray
    w_coll: np.ndarray
    alive_coll: np.ndarray
    speed_coll: np.ndarray
    n_coll: np.ndarray

    def detected(self):
        """Speeds and weights of all detected branches, free ones first."""
        keep_f = self.w_free > 0.0
        keep_c = self.alive_coll & (self.w_coll > 0.0)
        speeds = np.concatenate([self.speed_free[keep_f], self.speed_coll[keep_c]])
        weights = np.concatenate([self.w_free[keep_f], self.w_coll[keep_c]])
        return speeds, weights

    @property
    def transmission(self) -> float:
        _, w = self.detected()
        return float(w.sum() / self.n_samples)

    @property
    def mean_collisions(self) -> float:
        """Expected number of collisions per launched molecule."""
        total = self.launch_weight.sum()
        return float((self.w_coll * self.n_coll).sum() / total) if total > 0 else 0.0


@dataclass(frozen=True, eq=False)
class DetectedDistribution:
    """Histogram of detected speeds normalised to the launched number.

    ``weights.sum()`` is the transmission fraction.  The unbinned detected
    speeds and weights are kept for moments and the width estimate.
    """

    edges: np.ndarray
    weights: np.ndarray
    transmission: float
    pressure: float
    n_samples: int
    speeds: np.ndarray
    sample_weights: np.ndarray
    mean_collisions: float = 0.0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mean(self) -> float:
        return float(np.average(self.speeds, weights=self.sample_weights))

    @property
    def variance(self) -> float:
        m = self.mean
        return float(np.average((self.speeds - m) ** 2, weights=self.sample_weights))

    def fwhm(self, n_bins: int = 80) -> float:
        return fwhm(self.speeds, self.sample_weights, n_bins)

    @property
    def fwhm_ratio(self) -> float:
        return self.fwhm() / self.mean


# ---------------------------------------------------------------------------
# analytic selection and calibration
# ---------------------------------------------------------------------------


def _strip_acceptance(c):
    """Fraction of the (source height, slit height) square reaching the detector.

    For equal aperture heights and a slit half-way along the beam, the
    detector height is ``2 y_mid - y_src - 2 sag`` with ``c`` the sag offset
    in units of half the aperture height; the acceptance is trapezoidal.
    """
    c = np.abs(np.asarray(c, dtype=float))
    return np.where(c <= 1.0, 0.5 - 0.25 * c * c, np.where(c < 2.0, 0.25 * (2.0 - c) ** 2, 0.0))


def analytic_speed_density(v, v_c, ratio, v_w):
    """Unnormalised detected-speed density for equal aperture heights.

    ``v_c`` is the centred speed, ``ratio = h / (2 y_mid)`` with ``h`` the
    aperture height, ``v_w`` the oven speed scale.
    """
    v = np.asarray(v, dtype=float)
    c = (1.0 - (v_c / v) ** 2) / ratio
    x = v / v_w
    return x ** 3 * np.exp(-x * x) * _strip_acceptance(c)


def _density_moments(v_c, ratio, v_w):
    lo = v_c / math.sqrt(1.0 + 2.0 * ratio)
    hi = v_c / math.sqrt(max(1.0 - 2.0 * ratio, 1e-12))
    v = np.linspace(lo, hi, 20001)
    p = analytic_speed_density(v, v_c, ratio, v_w)
    mean = integrate.trapezoid(p * v, v) / integrate.trapezoid(p, v)

    def dens(s):
        return float(analytic_speed_density(s, v_c, ratio, v_w))

    peak = optimize.minimize_scalar(lambda s: -dens(s), bounds=(v[np.argmax(p)] - (v[1] - v[0]) * 4,
                                                                  v[np.argmax(p)] + (v[1] - v[0]) * 4),
                                    method="bounded", options={"xatol": 1e-10})
    v_pk, p_pk = peak.x, -peak.fun
    left = optimize.brentq(lambda s: dens(s) - 0.5 * p_pk, lo, v_pk, xtol=1e-12)
    right = optimize.brentq(lambda s: dens(s) - 0.5 * p_pk, v_pk, hi, xtol=1e-12)
    return mean, right - left


def calibrate_apertures(target_speed: float = DEFAULT_TARGET_SPEED,
                        fwhm_ratio: float = DEFAULT_FWHM_RATIO,
                        oven_temperature: float = DEFAULT_OVEN_TEMPERATURE,
                        mid_z: float = 1.19, gravity: float = CONSTANTS.gravity_g,
                        molecule: MoleculeSpecies = C70) -> tuple:
    """Aperture height and slit offset giving the requested mean and width.

    All three apertures get the same height; source and detector are
    centred at ``y = 0``.  Solves the analytic detected-speed density for
    ``(height, mid_y)``.
    """
    if not (target_speed > 0 and 0 < fwhm_ratio < 0.5):
        raise DomainError("need target_speed > 0 and 0 < fwhm_ratio < 0.5")
    v_w = oven_speed_scale(oven_temperature, molecule)

    def residual(x):
        v_c, ratio = target_speed * x[0], fwhm_ratio * x[1]
        mean, width = _density_moments(v_c, ratio, v_w)
        return [mean / target_speed - 1.0, width / mean / fwhm_ratio - 1.0]

    sol = optimize.root(residual, [1.0, 1.0], method="hybr", options={"xtol": 1e-12})
    if not sol.success:
        raise DomainError(f"aperture calibration failed: {sol.message}")
    v_c, ratio = target_speed * sol.x[0], fwhm_ratio * sol.x[1]
    mid_y = gravity * mid_z ** 2 / (2.0 * v_c ** 2)
    return 2.0 * ratio * mid_y, mid_y


# ---------------------------------------------------------------------------
# kernel parameters
# ---------------------------------------------------------------------------


def _kernel_params(config: BeamlineConfig, gas_state: ThermalGasState | None,
                   kick: CollisionKickModel | None, ignore_apertures=False, max_collisions=1000):
    lo, hi = config.speed_band
    p = {
        "z_mid": config.mid_z,
        "z_det": config.detector_z,
        "y_src": config.source_y,
        "y_mid": config.mid_y,
        "y_det": config.detector_y,
        "h_src": config.source_height,
        "h_mid": config.mid_height,
        "h_det": config.detector_height,
        "window": config.window_factor * config.mid_height,
        "gravity": config.gravity,
        "v_w": config.v_w,
        "band_lo": lo,
        "band_hi": hi,
        "hbar": CONSTANTS.hbar,
        "ignore_apertures": bool(ignore_apertures),
        "max_collisions": int(max_collisions),
    }
    if gas_state is None or gas_state.pressure == 0.0:
        p.update(n_density=0.0, c6_factor=0.0, v_gas=1.0, v_gas06=1.0, sigma_gas=0.0,
                 mass_ratio=0.0, mu_kg=1.0, kick_law=0, kick_param=0.0)
        return p
    gas = gas_state.species
    if kick is None:
        kick = CollisionKickModel(gas, gas_state.temperature)
    if kick.gas != gas or kick.temperature != gas_state.temperature:
        raise DomainError("kick model and gas state describe different gases")
    m_gas = gas.mass_kg
    m_mol = config.molecule.mass_kg
    vg = most_probable_speed(gas, gas_state.temperature)
    p.update(
        n_density=gas_state.number_density,
        c6_factor=(gas.c6_si / CONSTANTS.hbar) ** 0.4,
        v_gas=vg,
        v_gas06=vg ** 0.6,
        sigma_gas=math.sqrt(CONSTANTS.boltzmann_kB * gas_state.temperature / m_gas),
        mass_ratio=m_gas / (m_mol + m_gas),
        mu_kg=m_gas * m_mol / (m_mol + m_gas),
        kick_law=KICK_LAWS[kick.law],
        kick_param=float(kick.param),
    )
    return p


# ---------------------------------------------------------------------------
# single-trajectory operations (reference kernels)
# ---------------------------------------------------------------------------


def _python_params(config, gas_state=None, kick=None):
    p = _kernel_params(config, gas_state, kick)
    p["planes"] = _pykernels.plane_table(p)
    return p


def sample_source(config: BeamlineConfig, rng: RngStream) -> TrajectorySample:
    """Draw the launch state of the molecule identified by ``rng``.

    Speeds follow the effusive density (or the configured band with the
    density as weight); the direction is uniform in slope over the cone
    that reaches the mid-slit window, corrected for the gravitational sag.
    """
    p = _python_params(config)
    speed, weight, y0, vy0, vz0 = _pykernels.launch(stream_key(rng.seed, rng.stream), p)
    return TrajectorySample(rng.seed, rng.stream, (0.0, vy0, vz0), y0, weight)


def propagate_and_select(sample: TrajectorySample, config: BeamlineConfig) -> TrajectorySample:
    """Collision-free parabolic flight; ``survived`` if all apertures are cleared."""
    p = _python_params(config)
    _, vy0, vz0 = sample.launch_velocity
    ok, _, speed_end = _pykernels.free_flight(sample.launch_height, vy0, vz0, p)
    return replace(sample, survived=bool(ok), detected_speed=speed_end if ok else 0.0,
                   collision_count=0)


def apply_collisions(sample: TrajectorySample, config: BeamlineConfig, gas_state: ThermalGasState,
                     kick: CollisionKickModel | None = None) -> TrajectorySample:
    """Re-fly ``sample`` with analogue collisions along the whole path.

    The number of collisions is Poisson with mean ``n sigma_eff(v) v t``
    along the actual, piecewise parabolic path; survival is re-evaluated
    at every aperture after the first collision.
    """
    if gas_state.pressure == 0.0:
        return sample
    p = _python_params(config, gas_state, kick)
    key = stream_key(sample.seed, sample.stream)
    _, vy0, vz0 = sample.launch_velocity
    rate0 = _pykernels.collision_rate(math.hypot(vy0, vz0), p)
    t_first = -math.log(_pykernels.uniform_from_key(key, 4)) / rate0
    alive, speed, k = _pykernels.collided_flight(key, sample.launch_height, vy0, vz0, t_first, p)
    return replace(sample, survived=bool(alive), detected_speed=speed, collision_count=int(k))


# ---------------------------------------------------------------------------
# batch driver
# ---------------------------------------------------------------------------


def _launch_weight(launch_speed, config: BeamlineConfig):
    lo, hi = config.speed_band
    if not hi > lo:
        return np.ones_like(launch_speed)
    x = launch_speed / config.v_w
    return 2.0 * x ** 3 / config.v_w * np.exp(-x * x) * (hi - lo)


def trace(config: BeamlineConfig, gas_state: ThermalGasState | None, n_samples: int,
          rng: RngStream, kick: CollisionKickModel | None = None, threads: int = 1,
          chunk_size: int = DEFAULT_CHUNK, ignore_apertures: bool = False,
          max_collisions: int = 1000, backend: str | None = None) -> TraceResult:
    """Trace ``n_samples`` molecules; trajectory ``i`` uses stream
    ``(rng.stream << 32) + i`` so results are independent of ``threads``."""
    if n_samples < 1:
        raise DomainError("n_samples must be positive")
    if rng.stream >= 1 << 31:
        raise DomainError("batch stream ids must be below 2**31")
    params = _kernel_params(config, gas_state, kick, ignore_apertures, max_collisions)
    base = rng.stream << STREAM_SHIFT
    starts = list(range(0, n_samples, chunk_size))
    impl = kernels.get_backend(backend)

    def run(start):
        return impl.trace_batch(rng.seed, base + start, min(chunk_size, n_samples - start), params)

    threads = max(1, int(threads or 1))
    if threads == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, os.cpu_count() or threads)) as pool:
            parts = list(pool.map(run, starts))
    cat = {k: np.concatenate([part[k] for part in parts]) for k in parts[0]}
    return TraceResult(
        n_samples=n_samples,
        pressure=0.0 if gas_state is None else gas_state.pressure,
        launch_weight=_launch_weight(cat["launch_speed"], config),
        **cat,
    )


def _default_edges(config: BeamlineConfig, n_bins: int = 200):
    lo, hi = config.speed_band
    if hi > lo:
        return np.linspace(lo, hi, n_bins + 1)
    return np.linspace(0.0, 4.0 * config.v_w, 2 * n_bins + 1)


def detected_velocity_distribution(config: BeamlineConfig, gas_state: ThermalGasState | None,
                                   n_samples: int, rng: RngStream,
                                   kick: CollisionKickModel | None = None, bins=None,
                                   threads: int = 1, detection_efficiency=None,
                                   chunk_size: int = DEFAULT_CHUNK,
                                   backend: str | None = None) -> DetectedDistribution:
    """Histogram of the speeds of molecules reaching the detector.

    ``detection_efficiency``, if given, maps an array of speeds to relative
    efficiencies and multiplies the weights.
    """
    if n_samples < 10_000:
        raise DomainError(f"need at least 10000 samples, got {n_samples}")
    res = trace(config, gas_state, n_samples, rng, kick, threads, chunk_size, backend=backend)
    speeds, weights = res.detected()
    if detection_efficiency is not None:
        weights = weights * np.asarray(detection_efficiency(speeds), dtype=float)
    if speeds.size == 0 or not weights.sum() > 0.0:
        raise EmptyDistributionError("no trajectory reached the detector")
    if bins is None:
        edges = _default_edges(config)
    elif np.ndim(bins) == 0:
        edges = _default_edges(config, int(bins))
    else:
        edges = np.asarray(bins, dtype=float)
    hist, _ = np.histogram(speeds, bins=edges, weights=weights)
    return DetectedDistribution(
        edges=edges,
        weights=hist / n_samples,
        transmission=float(weights.sum() / n_samples),
        pressure=res.pressure,
        n_samples=n_samples,
        speeds=speeds,
        sample_weights=weights,
        mean_collisions=res.mean_collisions,
    )


def fwhm(speeds, weights, n_bins: int = 80) -> float:
    """Full width at half maximum of a weighted sample.

    The peak height comes from a quadratic fit to the histogram bins above
    60 % of the maximum, so bin noise does not inflate it; the half-maximum
    crossings are interpolated linearly.
    """
    speeds = np.asarray(speeds, dtype=float)
    weights = np.asarray(weights, dtype=float)
    lo, hi = np.quantile(speeds, [0.0005, 0.9995])
    pad = 0.1 * (hi - lo)
    hist, edges = np.histogram(speeds, bins=n_bins, range=(lo - pad, hi + pad), weights=weights)
    x = 0.5 * (edges[1:] + edges[:-1])
    top = hist >= 0.6 * hist.max()
    if top.sum() >= 3:
        coef = np.polyfit(x[top], hist[top], 2)
        peak = np.polyval(coef, np.clip(-coef[1] / (2 * coef[0]), x[top].min(), x[top].max())) \
            if coef[0] < 0 else hist.max()
    else:
        peak = hist.max()
    half = 0.5 * peak
    i_max = int(np.argmax(hist))
    left = i_max
    while left > 0 and hist[left - 1] >= half:
        left -= 1
    right = i_max
    while right < len(hist) - 1 and hist[right + 1] >= half:
        right += 1
    if left == 0 or right == len(hist) - 1:
        raise DomainError("distribution does not fall to half maximum inside the histogram")

    def cross(i_in, i_out):
        y0, y1 = hist[i_out], hist[i_in]
        return x[i_out] + (half - y0) / (y1 - y0) * (x[i_in] - x[i_out])

    return float(cross(right, right + 1) - cross(left, left - 1))


# ---------------------------------------------------------------------------
# velocity-averaged visibility
# ---------------------------------------------------------------------------


def _p0_of_speed(gas: GasSpecies, temperature, L, v):
    vg = most_probable_speed(gas, temperature)
    sig = (gas.c6_si / CONSTANTS.hbar) ** 0.4 * vg ** 0.6 / v * (
        SIGMA_COEFF_0 + SIGMA_COEFF_2 * (v / vg) ** 2
    )
    return CONSTANTS.boltzmann_kB * temperature / (2.0 * L * sig)


def distribution_visibility(dist: DetectedDistribution, gas_state: ThermalGasState, v0_of_v,
                            L: float) -> float:
    """``sum_bins w V0(v) exp(-p / p0(v)) / sum_bins w`` over occupied bins."""
    w = dist.weights
    keep = w > 0.0
    if not keep.any():
        raise EmptyDistributionError("distribution has no weight")
    v = dist.centers[keep]
    w = w[keep]
    v0 = np.asarray([v0_of_v(float(s)) for s in v], dtype=float)
    if gas_state.pressure == 0.0:
        decay = np.ones_like(v)
    else:
        decay = np.exp(-gas_state.pressure / _p0_of_speed(gas_state.species, gas_state.temperature, L, v))
    if v.size == 1:
        p0 = _p0_of_speed(gas_state.species, gas_state.temperature, L, float(v[0]))
        return visibility_vs_pressure(float(v0[0]), p0, gas_state.pressure)
    return float(np.sum(w * v0 * decay) / np.sum(w))


def corrected_visibility(config: BeamlineConfig, gas_state: ThermalGasState, v0_of_v,
                         n_samples: int, rng: RngStream, kick: CollisionKickModel | None = None,
                         threads: int = 1, distribution: DetectedDistribution | None = None,
                         detection_efficiency=None) -> float:
    """Exponential decay averaged over the detected velocity classes.

    The detected distribution at the given pressure (so including collided
    molecules that still reach the detector) weights
    ``V0(v) exp(-p / p0(v))``.
    """
    if distribution is None:
        distribution = detected_velocity_distribution(
            config, gas_state, n_samples, rng, kick, threads=threads,
            detection_efficiency=detection_efficiency,
        )
    return distribution_visibility(distribution, gas_state, v0_of_v, config.interferometer.spacing)
