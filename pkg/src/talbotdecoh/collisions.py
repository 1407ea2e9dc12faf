"""Collisional decoherence by a thermal background gas.

A single collision multiplies the off-diagonal density-matrix elements at
separation ``dr`` by

    eta(dr) = int dv g(v) int dOmega p(cos th) sinc(2 m_g v dr sin(th/2) / hbar)

with ``g`` the Maxwell-Boltzmann speed density of the gas and ``p`` the
normalised angular density of the scattering (``|f|**2 / sigma``).  Along
the interferometer the paths of order ``l`` are separated by
``l z lambda / d``, so each signal coefficient picks up

    T_l -> T_l exp(-D_l),   D_l = 2 n sigma_eff int_0^L [1 - eta(l z lambda / d)] dz.

In the experimental regime ``eta`` is essentially zero beyond a few
picometres and ``D_l = 2 n sigma_eff L``: the visibility decays as
``exp(-p / p0)`` with ``p0 = k_B T / (2 L sigma_eff)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .core_model import (
    C70,
    CONSTANTS,
    GasSpecies,
    MoleculeSpecies,
    ThermalGasState,
    de_broglie_wavelength,
    maxwell_boltzmann_pdf,
    most_probable_speed,
)
from .errors import AccuracyError, DomainError, ValidityDomainError, ValidityWarning
from .talbot_lau import FourierSpectrum, InterferometerGeometry

__all__ = [
    "ScatteringModel",
    "COMPLETE_DECOHERENCE",
    "ISOTROPIC",
    "QuadratureSpec",
    "EffectiveCrossSection",
    "DecoherenceExponent",
    "sigma_eff",
    "eta",
    "decoherence_exponents",
    "decohered_spectrum",
    "visibility_vs_pressure",
    "decoherence_pressure",
    "slater_kirkwood_c6",
    "SIGMA_COEFF_0",
    "SIGMA_COEFF_2",
    "SLATER_KIRKWOOD_SLOPE",
]

# Asymptotic expansion of the thermally averaged van der Waals cross section.
SIGMA_COEFF_0 = 8.4946
SIGMA_COEFF_2 = 1.6989
SLATER_KIRKWOOD_SLOPE = 3.5e-3  # meV nm^6 per amu, particle vs N2

_VARIANTS = ("complete", "isotropic", "forward_peaked")


@dataclass(frozen=True)
class ScatteringModel:
    """Normalised angular density of a single collision.

    Use the constructors :meth:`complete`, :meth:`isotropic` and
    :meth:`forward_peaked`.  ``complete`` skips the angular description and
    sets ``eta = 0`` for every nonzero separation.
    """

    variant: str = "isotropic"
    g: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise DomainError(f"unknown scattering model {self.variant!r}; use one of {_VARIANTS}")
        if self.variant == "forward_peaked" and not 0.0 <= self.g < 1.0:
            raise DomainError(f"forward-peaked width parameter must lie in [0, 1), got {self.g!r}")
        if self.variant != "forward_peaked" and self.g != 0.0:
            raise DomainError("width parameter only applies to the forward-peaked model")

    @classmethod
    def complete(cls) -> "ScatteringModel":
        return cls("complete")

    @classmethod
    def isotropic(cls) -> "ScatteringModel":
        return cls("isotropic")

    @classmethod
    def forward_peaked(cls, g: float) -> "ScatteringModel":
        return cls("forward_peaked", float(g))

    @property
    def is_complete(self) -> bool:
        return self.variant == "complete"

    def angular_density(self, cos_theta):
        """Density per steradian; integrates to one over the sphere."""
        if self.is_complete:
            raise DomainError("complete decoherence has no angular density")
        mu = np.asarray(cos_theta, dtype=float)
        if self.variant == "isotropic":
            out = np.full_like(mu, 1.0 / (4.0 * math.pi))
        else:
            g = self.g
            out = (1.0 - g * g) / (4.0 * math.pi * (1.0 + g * g - 2.0 * g * mu) ** 1.5)
        return float(out) if out.ndim == 0 else out

    def label(self) -> str:
        if self.variant == "forward_peaked":
            return f"forward_peaked(g={self.g!r})"
        return self.variant


COMPLETE_DECOHERENCE = ScatteringModel.complete()
ISOTROPIC = ScatteringModel.isotropic()


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy settings for the decoherence integrals.

    ``method="closed-form"`` uses the exact Maxwell-Boltzmann velocity
    average ``<sinc(c v)> = exp(-c**2 vp**2 / 4)`` and integrates the
    angle only; ``method="nested"`` integrates the speed numerically up to
    ``v_cutoff * vp`` as well.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-13
    v_cutoff: float = 20.0
    method: str = "closed-form"
    limit: int = 500

    def __post_init__(self):
        if self.method not in ("closed-form", "nested"):
            raise DomainError(f"unknown quadrature method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol >= 0 and self.v_cutoff > 0):
            raise DomainError("quadrature tolerances and cutoff must be positive")


@dataclass(frozen=True)
class EffectiveCrossSection:
    value: float
    gas: GasSpecies
    v_m: float
    temperature: float

    def __float__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class DecoherenceExponent:
    """``D_l`` for ``l = 0 .. l_max`` (``values[l]``)."""

    values: np.ndarray
    n_sigma_L: float = field(default=0.0)

    def __getitem__(self, ell):
        return float(self.values[abs(ell)])

    @property
    def l_max(self) -> int:
        return len(self.values) - 1


def _sigma_value(gas: GasSpecies, v_m, temperature):
    vg = most_probable_speed(gas, temperature)
    c6_term = (gas.c6_si / CONSTANTS.hbar) ** 0.4
    return c6_term * vg ** 0.6 / v_m * (SIGMA_COEFF_0 + SIGMA_COEFF_2 * (v_m / vg) ** 2), v_m / vg


def sigma_eff(gas: GasSpecies, v_m: float, temperature: float) -> EffectiveCrossSection:
    """Thermally averaged cross section for the -C6/r**6 interaction.

    Valid for ``v_m`` small against the most probable gas speed; a
    :class:`ValidityWarning` is issued above a ratio of 0.5 and a
    :class:`ValidityDomainError` raised above 1.
    """
    if not v_m > 0:
        raise DomainError(f"v_m must be positive, got {v_m!r}")
    value, ratio = _sigma_value(gas, v_m, temperature)
    if ratio > 1.0:
        raise ValidityDomainError(
            f"v_m / v_gas = {ratio:.3g} > 1 for {gas.name}: cross-section expansion not valid"
        )
    if ratio > 0.5:
        warnings.warn(
            f"v_m / v_gas = {ratio:.3g} > 0.5 for {gas.name}: expansion near its validity limit",
            ValidityWarning,
            stacklevel=2,
        )
    return EffectiveCrossSection(value, gas, float(v_m), float(temperature))


def _quad(func, a, b, spec: QuadratureSpec, what, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                func, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.limit, **kw
            )
        except integrate.IntegrationWarning as exc:
            raise AccuracyError(f"{what}: quadrature did not converge ({exc})") from None
    return value, err


def _velocity_average_nested(c, gas, temperature, spec: QuadratureSpec):
    """``int_0^vmax g(v) sin(c v) / (c v) dv`` by quadrature."""
    vp = most_probable_speed(gas, temperature)
    vmax = spec.v_cutoff * vp
    if c * vmax < 40.0:
        def f(v):
            return maxwell_boltzmann_pdf(gas, temperature, v) * np.sinc(c * v / math.pi)

        return _quad(f, 0.0, vmax, spec, "velocity average", points=[vp, 3 * vp])[0]

    def h(v):
        # g(v) / (c v), regular at v = 0
        x = v / vp
        return 4.0 / math.sqrt(math.pi) * x * math.exp(-x * x) / (vp * vp * c)

    return _quad(h, 0.0, vmax, spec, "velocity average", weight="sin", wvar=c)[0]


def eta(delta_r: float, gas: GasSpecies, temperature: float,
        model: ScatteringModel = ISOTROPIC, quadrature: QuadratureSpec | None = None) -> float:
    """Single-collision coherence factor at separation ``delta_r`` (m).

    The azimuth is integrated analytically and the polar angle is
    parametrised by ``s = sin(theta / 2)``, for which
    ``dOmega = 8 pi s ds``.
    """
    if not delta_r >= 0:
        raise DomainError(f"delta_r must be non-negative, got {delta_r!r}")
    if delta_r == 0.0:
        return 1.0
    if model.is_complete:
        return 0.0
    spec = quadrature or QuadratureSpec()
    vp = most_probable_speed(gas, temperature)
    a = gas.mass_kg * delta_r / CONSTANTS.hbar  # sinc argument is 2 a v s

    def weight(s):
        return 8.0 * math.pi * s * model.angular_density(1.0 - 2.0 * s * s)

    scale = 1.0 / (a * vp)  # s at which the kernel decorrelates
    if spec.method == "closed-form":
        upper = min(1.0, 40.0 * scale)

        def f(s):
            return weight(s) * math.exp(-(a * vp * s) ** 2)
    else:
        upper = 1.0

        def f(s):
            return weight(s) * _velocity_average_nested(2.0 * a * s, gas, temperature, spec)

    points = [k * scale for k in (0.5, 1.0, 2.0, 5.0, 10.0, 20.0) if k * scale < upper]
    value, _ = _quad(f, 0.0, upper, spec, f"eta({delta_r:g} m)", points=points or None)
    return float(min(1.0, max(-1.0, value)))


def _eta_integral(ell, lam, geometry: InterferometerGeometry, gas, temperature, model, spec):
    """``int_0^L eta(|l| z lambda / d) dz``."""
    L = geometry.spacing
    slope = abs(ell) * lam / geometry.period
    z_star = CONSTANTS.hbar / (gas.mass_kg * most_probable_speed(gas, temperature)) / slope
    z_lo = min(L, 1e-4 * z_star)

    def eta_z(z):
        return eta(slope * z, gas, temperature, model, spec)

    head = _quad(eta_z, 0.0, z_lo, spec, "decoherence z-integral")[0]
    if z_lo >= L:
        return head
    tail_spec = QuadratureSpec(spec.rel_tol, spec.rel_tol * 1e-3 * L, spec.v_cutoff, spec.method, spec.limit)
    tail = _quad(lambda u: eta_z(math.exp(u)) * math.exp(u), math.log(z_lo), math.log(L),
                 tail_spec, "decoherence z-integral")[0]
    return head + tail


def decoherence_exponents(gas_state: ThermalGasState, v_m: float, geometry: InterferometerGeometry,
                          model: ScatteringModel = COMPLETE_DECOHERENCE, l_max: int = 5,
                          molecule: MoleculeSpecies = C70,
                          quadrature: QuadratureSpec | None = None) -> DecoherenceExponent:
    """Damping exponents ``D_0 .. D_lmax`` of the signal coefficients."""
    n = gas_state.number_density
    if n == 0.0:
        return DecoherenceExponent(np.zeros(l_max + 1), 0.0)
    sig = sigma_eff(gas_state.species, v_m, gas_state.temperature).value
    L = geometry.spacing
    full = 2.0 * n * sig * L
    values = np.zeros(l_max + 1)
    if model.is_complete:
        values[1:] = full
        return DecoherenceExponent(values, full)
    spec = quadrature or QuadratureSpec()
    lam = de_broglie_wavelength(molecule.mass_kg, v_m)
    for ell in range(1, l_max + 1):
        coherent = _eta_integral(ell, lam, geometry, gas_state.species, gas_state.temperature, model, spec)
        values[ell] = min(full, max(0.0, 2.0 * n * sig * (L - coherent)))
    return DecoherenceExponent(values, full)


def decohered_spectrum(spectrum: FourierSpectrum, gas_state: ThermalGasState, v_m: float,
                       geometry: InterferometerGeometry,
                       model: ScatteringModel = COMPLETE_DECOHERENCE,
                       molecule: MoleculeSpecies = C70,
                       quadrature: QuadratureSpec | None = None) -> FourierSpectrum:
    """Multiply each ``T_l`` by ``exp(-D_l)``; ``T_0`` is never touched."""
    if gas_state.pressure == 0.0:
        return spectrum
    d = decoherence_exponents(gas_state, v_m, geometry, model, spectrum.l_max, molecule, quadrature)
    factors = np.exp(-d.values[np.abs(spectrum.orders)])
    factors[spectrum.l_max] = 1.0
    return spectrum.scaled(factors)


def visibility_vs_pressure(v0, p0, p):
    """``V0 exp(-p / p0)``; accepts scalar or array pressures (Pa)."""
    if not 0.0 <= v0 <= 1.0:
        raise DomainError(f"v0 must lie in [0, 1], got {v0!r}")
    if not p0 > 0:
        raise DomainError(f"p0 must be positive, got {p0!r}")
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0):
        raise DomainError("pressure must be non-negative")
    out = v0 * np.exp(-p_arr / p0)
    return float(out) if out.ndim == 0 else out


def decoherence_pressure(gas: GasSpecies, v_m: float, temperature: float, L: float) -> float:
    """Pressure (Pa) at which the visibility drops by 1/e: ``k_B T / (2 L sigma_eff)``."""
    if not L > 0:
        raise DomainError(f"interferometer length must be positive, got {L!r}")
    sig = sigma_eff(gas, v_m, temperature).value
    return CONSTANTS.boltzmann_kB * temperature / (2.0 * L * sig)


def slater_kirkwood_c6(mass: float) -> float:
    """C6 (meV nm^6) of a large hydrocarbon of ``mass`` amu against N2."""
    if not mass > 0:
        raise DomainError(f"mass must be positive, got {mass!r}")
    return SLATER_KIRKWOOD_SLOPE * mass
