"""Fourier spectrum of the three-grating Talbot-Lau signal.

The detected transmission as a function of the lateral shift ``x_s`` of the
third grating is ``T(x_s) = sum_l T_l exp(2 pi i l x_s / d)`` with

    T_l = a1_{-l} * B_{2l}(l L / L_lambda) * a3_{-l}

``a1``, ``a3`` are Fourier coefficients of the intensity transmission of the
first and third grating (incoherent source and detection mask) and

    B_m(xi) = sum_j b_j conj(b_{j-m}) exp(i pi xi (m - 2 j))

is the Talbot coefficient built from the amplitude coefficients ``b_j`` of
the middle grating.  The factor 2 in the index reflects the magnification-2
self-image of the symmetric setup; it is checked against a brute-force
Fresnel propagation in the test suite.

Slit interactions are represented by a phase profile
``phi(xi) = phi0 * [(1 - 2 xi)**-4 + (1 + 2 xi)**-4]`` across the open slit
(``xi`` in (-1/2, 1/2)), hard-clipped at ``|phi| <= 20`` rad near the walls.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import kernels
from .core_model import talbot_length
from .errors import AccuracyError, DegenerateSpectrumError, DomainError

__all__ = [
    "PHASE_CLIP",
    "CALIBRATED_PHASE_PARAMETER",
    "GratingSpec",
    "InterferometerGeometry",
    "FourierSpectrum",
    "FringePattern",
    "standard_geometry",
    "grating_amplitude_coeffs",
    "intensity_coeffs",
    "talbot_coefficient",
    "talbot_lau_spectrum",
    "classical_spectrum",
    "transmission_curve",
    "visibility",
    "first_harmonic_visibility",
    "calibrate_phase_parameter",
]

PHASE_CLIP = 20.0
# calibrate_phase_parameter(standard_geometry(), lambda(117 m/s), 0.41)
CALIBRATED_PHASE_PARAMETER = 2.6257925853205044e-03
DEFAULT_TAIL_TOL = 1e-8
DEFAULT_J_MAX = 200_000_000
FFT_POINTS = 1 << 20


@dataclass(frozen=True)
class GratingSpec:
    """One grating: period and slit width in metres, slit phase strength."""

    period: float
    slit_width: float
    phase_parameter: float = 0.0

    def __post_init__(self):
        if not (0 < self.slit_width < self.period):
            raise DomainError(
                f"need 0 < slit_width < period, got {self.slit_width!r} and {self.period!r}"
            )
        if not math.isfinite(self.phase_parameter):
            raise DomainError("phase_parameter must be finite")

    @property
    def open_fraction(self) -> float:
        return self.slit_width / self.period


@dataclass(frozen=True)
class InterferometerGeometry:
    """Three gratings separated by equal distances ``spacing``."""

    gratings: tuple
    spacing: float

    def __post_init__(self):
        if len(self.gratings) != 3:
            raise DomainError("a Talbot-Lau interferometer needs exactly three gratings")
        if not self.spacing > 0:
            raise DomainError(f"grating spacing must be positive, got {self.spacing!r}")
        periods = {g.period for g in self.gratings}
        if len(periods) != 1:
            raise DomainError(f"all grating periods must be equal, got {sorted(periods)}")

    @classmethod
    def symmetric(cls, grating: GratingSpec, spacing: float) -> "InterferometerGeometry":
        return cls((grating, grating, grating), spacing)

    @property
    def period(self) -> float:
        return self.gratings[0].period

    def with_phase_parameter(self, phase_parameter: float) -> "InterferometerGeometry":
        gs = tuple(
            GratingSpec(g.period, g.slit_width, phase_parameter) for g in self.gratings
        )
        return InterferometerGeometry(gs, self.spacing)


def standard_geometry(phase_parameter: float = 0.0) -> InterferometerGeometry:
    """Gold gratings with d = 991 nm, 475 nm slits, 0.22 m apart."""
    return InterferometerGeometry.symmetric(GratingSpec(991e-9, 475e-9, phase_parameter), 0.22)


@dataclass(frozen=True, eq=False)
class FourierSpectrum:
    """Coefficients ``T_l`` for ``l = -l_max .. l_max`` of a d-periodic signal."""

    coefficients: np.ndarray
    period: float

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or len(c) % 2 != 1:
            raise DomainError("coefficients must be a 1-D array of odd length")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def from_nonnegative(cls, values, period) -> "FourierSpectrum":
        """Build a Hermitian spectrum from ``T_0 .. T_lmax``."""
        v = np.asarray(values, dtype=complex)
        return cls(np.concatenate([np.conj(v[:0:-1]), v]), period)

    @property
    def l_max(self) -> int:
        return (len(self.coefficients) - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.l_max, self.l_max + 1)

    def __getitem__(self, ell: int) -> complex:
        if abs(ell) > self.l_max:
            return 0j
        return complex(self.coefficients[ell + self.l_max])

    def as_dict(self) -> dict:
        return {int(k): complex(v) for k, v in zip(self.orders, self.coefficients)}

    def scaled(self, factors) -> "FourierSpectrum":
        """Multiply every coefficient by ``factors`` (array over orders)."""
        return FourierSpectrum(self.coefficients * np.asarray(factors), self.period)


@dataclass(frozen=True, eq=False)
class FringePattern:
    positions: np.ndarray
    signal: np.ndarray
    period: float = field(default=0.0)


# ---------------------------------------------------------------------------
# grating coefficients
# ---------------------------------------------------------------------------


def _phase_profile(xi, phi0):
    u = (1.0 - 2.0 * xi) ** -4 + (1.0 + 2.0 * xi) ** -4
    return np.sign(phi0) * np.minimum(abs(phi0) * u, PHASE_CLIP)


def _clip_point(phi0) -> float:
    """Fractional slit position beyond which the phase is clipped."""
    a = abs(phi0)
    if a * 2.0 >= PHASE_CLIP:
        return 0.0

    def excess(xi):
        return a * ((1.0 - 2.0 * xi) ** -4 + (1.0 + 2.0 * xi) ** -4) - PHASE_CLIP

    hi = 0.5 - 0.5 * (a / (2.0 * PHASE_CLIP)) ** 0.25
    while excess(hi) < 0:
        hi = 0.5 - (0.5 - hi) / 2.0
    return optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def grating_amplitude_coeffs(grating: GratingSpec, order: int) -> complex:
    """n-th Fourier coefficient of the amplitude transmission of one grating.

    Binary gratings give ``f sinc(n f)``.  With a slit phase the interior,
    unclipped part is integrated by adaptive oscillatory quadrature
    (relative tolerance 1e-9); the clipped wall zones are integrated
    analytically.
    """
    f = grating.open_fraction
    phi0 = grating.phase_parameter
    if phi0 == 0.0:
        return complex(f * np.sinc(order * f))
    omega = 2.0 * math.pi * order * f
    xc = _clip_point(phi0)
    clip = math.copysign(PHASE_CLIP, phi0)
    if omega == 0.0:
        outer = 2.0 * (0.5 - xc)
    else:
        outer = 2.0 * (math.sin(omega / 2.0) - math.sin(omega * xc)) / omega
    total = complex(math.cos(clip), math.sin(clip)) * outer
    if xc > 0.0:
        opts = dict(epsrel=1e-9, epsabs=1e-13, limit=2000)
        if omega == 0.0:
            re = integrate.quad(lambda x: math.cos(_phase_profile(x, phi0)), 0.0, xc, **opts)[0]
            im = integrate.quad(lambda x: math.sin(_phase_profile(x, phi0)), 0.0, xc, **opts)[0]
        else:
            re = integrate.quad(
                lambda x: math.cos(_phase_profile(x, phi0)), 0.0, xc, weight="cos", wvar=omega, **opts
            )[0]
            im = integrate.quad(
                lambda x: math.sin(_phase_profile(x, phi0)), 0.0, xc, weight="cos", wvar=omega, **opts
            )[0]
        total += 2.0 * complex(re, im)
    return complex(f * total)


def intensity_coeffs(grating: GratingSpec, order: int) -> complex:
    """Fourier coefficient of ``|t(x)|**2``; the slit phase drops out."""
    f = grating.open_fraction
    return complex(f * np.sinc(order * f))


@functools.lru_cache(maxsize=64)
def _correction_table(f: float, phi0: float, tol: float):
    """Coefficients of ``t - exp(i phi_clip) * slit`` by dense FFT.

    The difference is continuous and vanishes in the clipped wall zones, so
    its coefficients decay fast and a short table (returned centred,
    ``len == 2 N + 1``) carries everything the binary part does not.
    """
    if phi0 == 0.0:
        return 1.0 + 0j, np.zeros(1, dtype=complex)
    clip = math.copysign(PHASE_CLIP, phi0)
    clip_phasor = complex(math.cos(clip), math.sin(clip))
    m = FFT_POINTS
    x = np.arange(m) / m - 0.5
    xi = x / f
    corr = np.zeros(m, dtype=complex)
    inside = np.abs(xi) < 0.5
    corr[inside] = np.exp(1j * _phase_profile(xi[inside], phi0)) - clip_phasor
    spec = np.fft.fft(corr) / m
    n_max = m // 8
    n = np.arange(-n_max, n_max + 1)
    coeffs = spec[n % m] * np.where(n % 2 == 0, 1.0, -1.0)
    energy = float(np.mean(np.abs(corr) ** 2))
    by_order = np.abs(coeffs[n_max:]) ** 2
    by_order[1:] += np.abs(coeffs[n_max - 1 :: -1]) ** 2
    partial = np.cumsum(by_order)
    enough = np.nonzero(energy - partial < 1e-2 * tol)[0]
    n_keep = int(enough[0]) if enough.size else n_max
    table = coeffs[n_max - n_keep : n_max + n_keep + 1].copy()
    return clip_phasor, table


def talbot_coefficient(grating: GratingSpec, shift: int, xi: float,
                       tail_tol: float = DEFAULT_TAIL_TOL, j_max: int = DEFAULT_J_MAX) -> complex:
    """``B_shift(xi)`` for the given middle grating, ``shift >= 0``."""
    if shift < 0:
        raise DomainError("shift must be non-negative; use B_{-m}(xi) = conj(B_m(-xi))")
    f = grating.open_fraction
    clip, table = _correction_table(f, float(grating.phase_parameter), float(tail_tol))
    value, j_used = kernels.coherence_sum(shift, float(xi), f, clip, table, float(tail_tol), int(j_max))
    if j_used < 0:
        raise AccuracyError(
            f"Talbot sum did not reach tail tolerance {tail_tol:g} within |j| <= {j_max}"
        )
    return value


def _spectrum(geometry: InterferometerGeometry, xi_of_l, l_max, tail_tol, j_max):
    if l_max < 1:
        raise DomainError(f"l_max must be >= 1, got {l_max}")
    g1, g2, g3 = geometry.gratings
    values = [g1.open_fraction * g2.open_fraction * g3.open_fraction]
    for ell in range(1, l_max + 1):
        b = talbot_coefficient(g2, 2 * ell, xi_of_l(ell), tail_tol, j_max)
        values.append(intensity_coeffs(g1, -ell) * b * intensity_coeffs(g3, -ell))
    return FourierSpectrum.from_nonnegative(values, geometry.period)


def talbot_lau_spectrum(geometry: InterferometerGeometry, wavelength: float, l_max: int = 5,
                        tail_tol: float = DEFAULT_TAIL_TOL, j_max: int = DEFAULT_J_MAX) -> FourierSpectrum:
    """Vacuum signal spectrum for de Broglie wavelength ``wavelength`` (m).

    ``T_0`` is the product of open fractions (Parseval); the other orders
    come from the truncated Talbot sum, whose window grows until the
    neglected coefficient power of the middle grating is below ``tail_tol``.
    """
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength!r}")
    ratio = geometry.spacing / talbot_length(geometry.period, wavelength)
    return _spectrum(geometry, lambda ell: ell * ratio, l_max, tail_tol, j_max)


def classical_spectrum(geometry: InterferometerGeometry, l_max: int = 5,
                       tail_tol: float = DEFAULT_TAIL_TOL, j_max: int = DEFAULT_J_MAX) -> FourierSpectrum:
    """The moire (ray-optics) limit, wavelength -> 0."""
    return _spectrum(geometry, lambda ell: 0.0, l_max, tail_tol, j_max)


def transmission_curve(spectrum: FourierSpectrum, samples: int = 128) -> FringePattern:
    """Sample ``T(x_s)`` uniformly over one period."""
    if samples < 4 * spectrum.l_max:
        raise DomainError(f"need at least {4 * spectrum.l_max} samples, got {samples}")
    d = spectrum.period
    x = np.arange(samples) * (d / samples)
    phase = np.exp(2j * math.pi * np.outer(x / d, spectrum.orders))
    signal = phase @ spectrum.coefficients
    scale = max(float(np.max(np.abs(signal))), np.finfo(float).tiny)
    if float(np.max(np.abs(signal.imag))) > 1e-12 * scale:
        raise DomainError("spectrum is not Hermitian: transmission has an imaginary part")
    return FringePattern(x, signal.real.copy(), d)


def visibility(spectrum: FourierSpectrum) -> float:
    """First-harmonic fringe visibility ``2 |T_1| / T_0``."""
    t0 = spectrum[0].real
    if t0 == 0.0:
        raise DegenerateSpectrumError("T_0 is zero; visibility undefined")
    return 2.0 * abs(spectrum[1]) / t0


def first_harmonic_visibility(geometry: InterferometerGeometry, wavelength: float,
                              tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """``visibility(talbot_lau_spectrum(geometry, wavelength, 1))`` without higher orders."""
    return visibility(talbot_lau_spectrum(geometry, wavelength, 1, tail_tol))


def calibrate_phase_parameter(geometry: InterferometerGeometry, wavelength: float,
                              target_visibility: float, tail_tol: float = DEFAULT_TAIL_TOL,
                              phi_max: float = 1.0) -> float:
    """Smallest slit-phase strength giving the requested vacuum visibility.

    Scans a logarithmic grid of strengths for the first crossing of the
    target and refines it with Brent's method.
    """

    def vis(phi0):
        return first_harmonic_visibility(geometry.with_phase_parameter(phi0), wavelength, tail_tol)

    v_prev = vis(0.0)
    if abs(v_prev - target_visibility) < 1e-12:
        return 0.0
    sign = 1.0 if target_visibility > v_prev else -1.0
    prev = 0.0
    for phi in np.geomspace(1e-6, phi_max, 31):
        v = vis(float(phi))
        if sign * (v - target_visibility) >= 0:
            return optimize.brentq(lambda p: vis(p) - target_visibility, prev, float(phi), xtol=1e-12)
        prev = float(phi)
    raise DomainError(
        f"no slit phase up to {phi_max} reaches visibility {target_visibility}"
    )
