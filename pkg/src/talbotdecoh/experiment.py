"""Simulated decoherence experiments: fringe scans, pressure scans, fits.

A pressure scan records, for each background pressure, the fringe
visibility estimated from a sampled fringe (or the exact value when noise
is off).  The decoherence pressure is recovered by a weighted straight-line
fit of ``ln V`` against ``p``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import beamline as bl
from .collisions import (
    COMPLETE_DECOHERENCE,
    ScatteringModel,
    decoherence_pressure,
    decohered_spectrum,
    slater_kirkwood_c6,
)
from .core_model import (
    C70,
    GAS_TABLE,
    GasSpecies,
    MoleculeSpecies,
    ThermalGasState,
    de_broglie_wavelength,
    mbar_to_pa,
    pa_to_mbar,
)
from .errors import DomainError, FitError, NoSignalError
from .rng import RngStream
from .talbot_lau import (
    CALIBRATED_PHASE_PARAMETER,
    FourierSpectrum,
    InterferometerGeometry,
    first_harmonic_visibility,
    standard_geometry,
    talbot_lau_spectrum,
    transmission_curve,
    visibility,
)

__all__ = [
    "NoiseModel",
    "ExperimentConditions",
    "SampledFringe",
    "PressureScan",
    "FitResult",
    "GasSurveyRow",
    "default_pressures",
    "simulate_fringe",
    "extract_visibility",
    "vacuum_spectrum",
    "simulate_pressure_scan",
    "fit_exponential",
    "gas_survey",
    "extrapolate_vacuum_requirement",
    "extrapolation_constant",
    "NITROGEN_MASS",
]

NITROGEN_MASS = 28.014
SOFT_MAX_PRESSURE = mbar_to_pa(2.5e-6)


@dataclass(frozen=True)
class NoiseModel:
    """Measurement imperfections.

    Parameters
    ----------
    shot_noise : bool
        Sample Poisson counts on a fringe of ``n_positions`` points and
        estimate the visibility from them.
    counts_per_position : float
        Expected counts per fringe position at mean transmission.
    contrast_floor : float
        Pressure-independent factor in (0, 1] multiplying every visibility,
        e.g. vibrations.
    relative_noise : float
        Gaussian scatter of the recorded visibility, as a fraction of the
        noiseless value; that fraction times the noiseless value is
        reported as the standard error.
    n_positions : int
        Fringe sampling points per period.
    """

    shot_noise: bool = True
    counts_per_position: float = 5e4
    contrast_floor: float = 1.0
    relative_noise: float = 0.0
    n_positions: int = 16

    def __post_init__(self):
        if not 0.0 < self.contrast_floor <= 1.0:
            raise DomainError("contrast_floor must lie in (0, 1]")
        if not self.counts_per_position > 0:
            raise DomainError("counts_per_position must be positive")
        if not self.relative_noise >= 0.0:
            raise DomainError("relative_noise must be non-negative")
        if self.n_positions < 8:
            raise DomainError("need at least 8 fringe positions")

    @classmethod
    def noiseless(cls, contrast_floor: float = 1.0) -> "NoiseModel":
        return cls(shot_noise=False, contrast_floor=contrast_floor)


@dataclass(frozen=True)
class ExperimentConditions:
    """What is held fixed along a pressure scan.

    ``v0`` pins the vacuum visibility; when ``None`` it follows from the
    interferometer geometry at ``v_m``.  ``mode`` is ``"analytic"`` (signal
    spectrum damped by the decoherence exponents) or ``"beamline"`` (decay
    averaged over the Monte Carlo detected-velocity distribution).
    """

    v_m: float = 117.0
    temperature: float = 300.0
    geometry: InterferometerGeometry = field(
        default_factory=lambda: standard_geometry(CALIBRATED_PHASE_PARAMETER)
    )
    molecule: MoleculeSpecies = C70
    v0: float | None = None
    l_max: int = 5
    model: ScatteringModel = COMPLETE_DECOHERENCE
    mode: str = "analytic"
    beamline: bl.BeamlineConfig | None = None
    beamline_samples: int = 200_000
    kick_law: str = "diffractive"
    threads: int = 1

    def __post_init__(self):
        if not self.v_m > 0:
            raise DomainError("v_m must be positive")
        if not self.temperature > 0:
            raise DomainError("temperature must be positive")
        if self.v0 is not None and not 0.0 <= self.v0 <= 1.0:
            raise DomainError("v0 must lie in [0, 1]")
        if self.mode not in ("analytic", "beamline"):
            raise DomainError(f"mode must be 'analytic' or 'beamline', got {self.mode!r}")
        if self.l_max < 1:
            raise DomainError("l_max must be >= 1")


@dataclass(frozen=True, eq=False)
class SampledFringe:
    """Counts at ``n`` equally spaced shifts over exactly one period."""

    positions: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    period: float
    l_max: int


@dataclass(frozen=True, eq=False)
class PressureScan:
    """Visibility against pressure (Pa) with standard errors."""

    gas: GasSpecies
    pressures: np.ndarray
    visibilities: np.ndarray
    errors: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.pressures, dtype=float)
        v = np.asarray(self.visibilities, dtype=float)
        e = np.asarray(self.errors, dtype=float)
        if not (p.shape == v.shape == e.shape and p.ndim == 1):
            raise DomainError("pressures, visibilities and errors must be 1-D of equal length")
        if np.any(p < 0) or np.any(np.diff(p) <= 0):
            raise DomainError("pressures must be non-negative and strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise DomainError("visibilities must lie in [0, 1]")
        if np.any(e < 0):
            raise DomainError("standard errors must be non-negative")
        for name, arr in (("pressures", p), ("visibilities", v), ("errors", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def points(self):
        return list(zip(self.pressures.tolist(), self.visibilities.tolist(), self.errors.tolist()))


@dataclass(frozen=True)
class FitResult:
    v0_fit: float
    p0_fit: float
    v0_err: float
    p0_err: float
    residual_norm: float
    n_used: int


@dataclass(frozen=True)
class GasSurveyRow:
    gas: str
    p0_predicted: float
    p0_fitted: float

    @property
    def ratio(self) -> float:
        return self.p0_fitted / self.p0_predicted


def default_pressures() -> np.ndarray:
    """Vacuum plus 8 log-spaced points in [5e-8, 2.5e-6] mbar, in Pa."""
    return np.concatenate([[0.0], mbar_to_pa(np.geomspace(5e-8, 2.5e-6, 8))])


# ---------------------------------------------------------------------------
# fringes
# ---------------------------------------------------------------------------


def simulate_fringe(spectrum: FourierSpectrum, n_positions: int, counts_per_position: float,
                    rng: RngStream | None = None) -> SampledFringe:
    """Poisson counts proportional to the transmission at ``n_positions`` shifts.

    ``counts_per_position`` is the expected count at mean transmission.  With
    ``rng=None`` or infinite counts the expectation itself is returned.
    """
    if n_positions < 8:
        raise DomainError(f"need at least 8 positions, got {n_positions}")
    if not counts_per_position > 0:
        raise DomainError("counts_per_position must be positive")
    t0 = spectrum[0].real
    if not t0 > 0:
        raise DomainError("spectrum has no mean transmission")
    samples = max(n_positions, 4 * spectrum.l_max)
    if samples % n_positions:
        samples = n_positions * math.ceil(samples / n_positions)
    curve = transmission_curve(spectrum, samples)
    stride = samples // n_positions
    signal = np.clip(curve.signal[::stride], 0.0, None)
    positions = curve.positions[::stride]
    if math.isinf(counts_per_position):
        expected = signal / t0
        counts = expected.copy()
    else:
        expected = counts_per_position * signal / t0
        if rng is None:
            counts = expected.copy()
        else:
            counts = rng.generator().poisson(expected).astype(float)
    return SampledFringe(positions, counts, expected, spectrum.period, spectrum.l_max)


def extract_visibility(fringe: SampledFringe) -> tuple:
    """First-harmonic visibility ``2 |c1| / c0`` and its Poisson standard error."""
    n = len(fringe.counts)
    if n < 8:
        raise DomainError(f"need at least 8 positions, got {n}")
    if n < 2 * fringe.l_max + 2:
        raise DomainError(
            f"{n} positions alias harmonics up to order {fringe.l_max}; need {2 * fringe.l_max + 2}"
        )
    counts = np.asarray(fringe.counts, dtype=float)
    c0 = counts.mean()
    if not c0 > 0:
        raise NoSignalError("fringe has no counts")
    theta = 2.0 * math.pi * np.arange(n) / n
    a = np.mean(counts * np.cos(theta))
    b = -np.mean(counts * np.sin(theta))
    r = math.hypot(a, b)
    vis = 2.0 * r / c0
    if r > 0:
        grad = (2.0 / c0) * (a * np.cos(theta) - b * np.sin(theta)) / (r * n) - 2.0 * r / (c0 * c0 * n)
        err = math.sqrt(float(np.sum(grad * grad * counts)))
    else:
        err = 2.0 * math.sqrt(c0 / (2.0 * n)) / c0
    return float(vis), err


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def vacuum_spectrum(conditions: ExperimentConditions) -> FourierSpectrum:
    """Vacuum signal spectrum; a pure first harmonic if ``v0`` is pinned."""
    if conditions.v0 is not None:
        return FourierSpectrum.from_nonnegative([1.0, 0.5 * conditions.v0], conditions.geometry.period)
    lam = de_broglie_wavelength(conditions.molecule.mass_kg, conditions.v_m)
    return talbot_lau_spectrum(conditions.geometry, lam, conditions.l_max)


def _v0_of_speed(conditions: ExperimentConditions, band):
    if conditions.v0 is not None:
        return lambda v: conditions.v0
    grid = np.linspace(band[0], band[1], 25)
    vals = [
        first_harmonic_visibility(
            conditions.geometry, de_broglie_wavelength(conditions.molecule.mass_kg, float(v))
        )
        for v in grid
    ]
    return lambda v: float(np.interp(v, grid, vals))


def _observe(spectrum: FourierSpectrum, noise: NoiseModel, rng: RngStream):
    """Apply contrast floor and noise to a (decohered) spectrum."""
    floor = noise.contrast_floor
    if floor != 1.0:
        factors = np.full(len(spectrum.coefficients), floor)
        factors[spectrum.l_max] = 1.0
        spectrum = spectrum.scaled(factors)
    exact = visibility(spectrum)
    if noise.shot_noise:
        fringe = simulate_fringe(spectrum, noise.n_positions, noise.counts_per_position, rng)
        vis, err = extract_visibility(fringe)
    else:
        vis, err = exact, 0.0
    if noise.relative_noise > 0.0:
        gen = RngStream(rng.seed, rng.stream).substream(1).generator()
        rel = noise.relative_noise
        vis = vis * (1.0 + rel * gen.standard_normal())
        err = math.hypot(err, rel * exact)
    return min(max(vis, 0.0), 1.0), err


def simulate_pressure_scan(gas: GasSpecies, conditions: ExperimentConditions | None = None,
                           pressures=None, noise: NoiseModel | None = None,
                           rng: RngStream | None = None,
                           spectrum: FourierSpectrum | None = None) -> PressureScan:
    """Visibility at each pressure (Pa) for background gas ``gas``.

    Point ``i`` draws its noise from ``rng.substream(i)``.  Pressures above
    2.5e-6 mbar trigger a warning.  ``spectrum`` may pass a precomputed
    vacuum spectrum.
    """
    conditions = conditions or ExperimentConditions()
    noise = noise or NoiseModel()
    rng = rng or RngStream(0)
    p = default_pressures() if pressures is None else np.asarray(pressures, dtype=float)
    if np.any(p > SOFT_MAX_PRESSURE * (1 + 1e-12)):
        warnings.warn("pressures above 2.5e-6 mbar are outside the simulated range", stacklevel=2)
    vac = spectrum if spectrum is not None else vacuum_spectrum(conditions)
    vis = np.empty(len(p))
    err = np.empty(len(p))
    if conditions.mode == "beamline":
        cfg = conditions.beamline or bl.BeamlineConfig(target_speed=conditions.v_m)
        lo, hi = cfg.speed_band if cfg.speed_band[1] > 0 else (0.5 * conditions.v_m, 1.5 * conditions.v_m)
        v0_of_v = _v0_of_speed(conditions, (lo, hi))
        v0_ref = visibility(vac)
    for i, pressure in enumerate(p):
        state = ThermalGasState(gas, conditions.temperature, float(pressure))
        point_rng = rng.substream(i)
        if conditions.mode == "analytic":
            damped = decohered_spectrum(vac, state, conditions.v_m, conditions.geometry,
                                        conditions.model, conditions.molecule)
        else:
            kick = bl.CollisionKickModel(gas, conditions.temperature, conditions.kick_law)
            v_corr = bl.corrected_visibility(cfg, state, v0_of_v, conditions.beamline_samples,
                                             RngStream(rng.seed, i), kick, threads=conditions.threads)
            # keep the harmonic structure, rescale the first harmonic
            factor = v_corr / v0_ref if v0_ref > 0 else 0.0
            factors = np.full(len(vac.coefficients), factor)
            factors[vac.l_max] = 1.0
            damped = vac.scaled(factors)
        vis[i], err[i] = _observe(damped, noise, point_rng)
    meta = {
        "v_m_mps": conditions.v_m,
        "temperature_K": conditions.temperature,
        "mode": conditions.mode,
        "model": conditions.model.label(),
        "seed": rng.seed,
    }
    return PressureScan(gas, p, vis, err, meta)


def fit_exponential(scan: PressureScan) -> FitResult:
    """Weighted least squares of ``ln V`` against ``p``.

    Weights are ``(V / sigma_V)**2``; points with ``V <= 0`` or
    ``V < 3 sigma_V`` are dropped with a warning.  Without standard errors
    the fit is unweighted and the parameter errors come from the scatter.
    """
    p = scan.pressures
    v = scan.visibilities
    e = scan.errors
    keep = v > 0
    if np.any(~keep):
        warnings.warn(f"dropping {int(np.sum(~keep))} points with V <= 0", stacklevel=2)
    weak = keep & (e > 0) & (v < 3.0 * e)
    if np.any(weak):
        warnings.warn(f"dropping {int(np.sum(weak))} points with V < 3 sigma_V", stacklevel=2)
        keep &= ~weak
    if keep.sum() < 3:
        raise FitError(f"need at least 3 usable points, got {int(keep.sum())}")
    p, v, e = p[keep], v[keep], e[keep]
    weighted = bool(np.all(e > 0))
    scale = p.max() if p.max() > 0 else 1.0
    x = p / scale
    y = np.log(v)
    w = (v / e) ** 2 if weighted else np.ones_like(y)
    design = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    resid = (y - design @ coef) * sw
    rss = float(resid @ resid)
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    if not weighted:
        dof = len(y) - 2
        cov = cov * (rss / dof if dof > 0 else 0.0)
    intercept, slope = coef[0], coef[1] / scale
    if not slope < 0:
        raise FitError(f"visibility does not decay with pressure (slope {slope:g} /Pa)")
    slope_err = math.sqrt(max(cov[1, 1], 0.0)) / scale
    v0 = math.exp(intercept)
    return FitResult(
        v0_fit=v0,
        p0_fit=-1.0 / slope,
        v0_err=v0 * math.sqrt(max(cov[0, 0], 0.0)),
        p0_err=slope_err / (slope * slope),
        residual_norm=math.sqrt(rss),
        n_used=int(keep.sum()),
    )


def gas_survey(gases=None, conditions: ExperimentConditions | None = None, pressures=None,
               noise: NoiseModel | None = None, rng: RngStream | None = None) -> list:
    """Predicted and fitted decoherence pressure for each gas.

    Gas ``k`` (in the given order) uses random stream ``rng.substream(k)``.
    """
    conditions = conditions or ExperimentConditions()
    rng = rng or RngStream(0)
    gases = list(GAS_TABLE.values()) if gases is None else [
        GAS_TABLE[g] if isinstance(g, str) else g for g in gases
    ]
    if not gases:
        raise DomainError("no gases given")
    vac = vacuum_spectrum(conditions)
    rows = []
    for k, gas in enumerate(gases):
        predicted = decoherence_pressure(gas, conditions.v_m, conditions.temperature,
                                         conditions.geometry.spacing)
        scan = simulate_pressure_scan(gas, conditions, pressures, noise, rng.substream(k), vac)
        rows.append(GasSurveyRow(gas.name, predicted, fit_exponential(scan).p0_fit))
    return rows


# ---------------------------------------------------------------------------
# heavy particles
# ---------------------------------------------------------------------------


def extrapolate_vacuum_requirement(mass: float, v_m: float, L: float,
                                   temperature: float = 300.0) -> float:
    """Decoherence pressure (Pa) in N2 for a particle of ``mass`` amu.

    C6 follows the Slater-Kirkwood mass scaling, so the pressure is
    ``k_B T / (2 L sigma_eff)``.
    """
    for name, val in (("mass", mass), ("v_m", v_m), ("L", L)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val!r}")
    gas = GasSpecies("N2", NITROGEN_MASS, slater_kirkwood_c6(mass))
    return decoherence_pressure(gas, v_m, temperature, L)


def extrapolation_constant(mass: float, v_m: float = 10.0, temperature: float = 300.0) -> float:
    """``p0 L / v_m`` in mbar s/m, the prefactor of the scaling law in v_m / L."""
    return pa_to_mbar(extrapolate_vacuum_requirement(mass, v_m, 1.0, temperature)) / v_m
