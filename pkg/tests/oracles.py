"""Independent reference calculations used by the tests.

Nothing here imports the package: constants are restated and every
quantity is computed by a different route from the production code.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import fresnel

H = 6.62607015e-34
HBAR = H / (2 * math.pi)
KB = 1.380649e-23
AMU = 1.66053906660e-27
MEV_NM6 = 1.602176634e-22 * 1e-54


def fresnel_visibility(wavelength, period, slit, spacing, n_src=40, periods=6, per_period=400,
                       n_slits=201, n_shift=32):
    """Visibility of the three-grating signal by direct Fresnel propagation.

    Point sources spread over one slit of the first grating are summed
    incoherently (the first grating is periodic, so one slit suffices for
    the periodic signal).  Each source illuminates ``2 n_slits + 1`` slits
    of the middle grating; the field behind them at distance ``spacing`` is
    a sum of Fresnel integrals.  The intensity is masked by the third
    grating at ``n_shift`` lateral shifts and the first harmonic of the
    resulting signal is returned as ``2 |c1| / c0``.
    """
    xp = (np.arange(periods * per_period) + 0.5) / per_period * period - periods * period / 2
    intensity = np.zeros_like(xp)
    slits = np.arange(-n_slits, n_slits + 1) * period
    # exp(i pi/(lam L) [(x-x0)^2 + (x'-x)^2]) = const * exp(2 i pi/(lam L) (x - (x0+x')/2)^2)
    scale = math.sqrt(4.0 / (wavelength * spacing))
    for x0 in (np.arange(n_src) + 0.5) / n_src * slit - slit / 2:
        centre = (x0 + xp[:, None]) / 2
        s1, c1 = fresnel((slits[None, :] + slit / 2 - centre) * scale)
        s0, c0 = fresnel((slits[None, :] - slit / 2 - centre) * scale)
        amp = ((c1 - c0) + 1j * (s1 - s0)).sum(axis=1)
        intensity += np.abs(amp) ** 2
    shifts = np.arange(n_shift) / n_shift * period
    signal = np.array([
        intensity[np.abs(((xp - s) + period / 2) % period - period / 2) < slit / 2].sum()
        for s in shifts
    ])
    c = np.fft.fft(signal) / n_shift
    return 2 * abs(c[1]) / c[0].real


def phase_grating_coefficients(f, phi0, n_max=4000, m=1 << 20, clip=20.0):
    """Amplitude Fourier coefficients ``b_-n_max .. b_n_max`` by plain FFT of ``t(x)``."""
    x = np.arange(m) / m - 0.5
    s = x / f
    t = np.zeros(m, complex)
    inside = np.abs(s) < 0.5
    u = (1 - 2 * s[inside]) ** -4 + (1 + 2 * s[inside]) ** -4
    t[inside] = np.exp(1j * np.sign(phi0) * np.minimum(abs(phi0) * u, clip))
    c = np.fft.fft(np.fft.ifftshift(t)) / m
    n = np.arange(-n_max, n_max + 1)
    return n, c[n % m]


def real_space_b(f, phi0, shift, xi, m=1 << 20, clip=20.0):
    """``B_shift(xi) = int_0^1 t(x - xi/2) conj(t(x + xi/2)) exp(-2 pi i shift x) dx``.

    Midpoint rule on ``m`` points of one period (``x`` in units of ``d``).
    """
    x = (np.arange(m) + 0.5) / m

    def t(y):
        s = (np.mod(y + 0.5, 1.0) - 0.5) / f
        out = np.zeros(m, complex)
        inside = np.abs(s) < 0.5
        if phi0 == 0.0:
            out[inside] = 1.0
        else:
            u = (1 - 2 * s[inside]) ** -4 + (1 + 2 * s[inside]) ** -4
            out[inside] = np.exp(1j * np.sign(phi0) * np.minimum(abs(phi0) * u, clip))
        return out

    return np.mean(t(x - xi / 2) * np.conj(t(x + xi / 2)) * np.exp(-2j * np.pi * shift * x))


def talbot_sum(b, n, shift, xi):
    """``sum_j b_j conj(b_{j-shift}) exp(i pi xi (shift - 2 j))`` over a finite table."""
    lagged = np.zeros_like(b)
    lagged[shift:] = b[:-shift] if shift else b
    return np.sum(b * np.conj(lagged) * np.exp(1j * np.pi * xi * (shift - 2 * n)))


def first_order_visibility_phase(wavelength, period, slit, spacing, phi0, n_max=4000):
    """``2 |T_1| / T_0`` with coefficients from :func:`phase_grating_coefficients`."""
    f = slit / period
    n, b = phase_grating_coefficients(f, phi0, n_max)
    xi = spacing * wavelength / period ** 2
    a1 = f * np.sinc(f)
    return 2 * a1 * a1 * abs(talbot_sum(b, n, 2, xi)) / f ** 3


def sigma_eff_hand(mass_amu, c6_mev_nm6, v_m, temperature):
    """Effective cross section, written out term by term."""
    m = mass_amu * AMU
    vg = math.sqrt(2 * KB * temperature / m)
    c6 = c6_mev_nm6 * MEV_NM6
    prefactor = (c6 / HBAR) ** (2.0 / 5.0)
    return prefactor * vg ** (3.0 / 5.0) / v_m * (8.4946 + 1.6989 * v_m ** 2 / vg ** 2)


def decoherence_pressure_hand(mass_amu, c6_mev_nm6, v_m, temperature, length):
    return KB * temperature / (2 * length * sigma_eff_hand(mass_amu, c6_mev_nm6, v_m, temperature))


def eta_isotropic_exact(delta_r, mass_amu, temperature):
    """Closed form for isotropic scattering in a Maxwell-Boltzmann gas.

    The thermal average of ``sinc(k v)`` is ``exp(-k**2 vp**2 / 4)`` and
    the remaining angular integral is elementary:
    ``eta = (1 - exp(-a**2)) / a**2``, ``a = m vp dr / hbar``.
    """
    m = mass_amu * AMU
    vp = math.sqrt(2 * KB * temperature / m)
    a = m * vp * delta_r / HBAR
    if a == 0:
        return 1.0
    if a < 1e-4:
        return 1.0 - a * a / 2
    return -math.expm1(-a * a) / (a * a)


def mb_moment(vp, k):
    """``int_0^inf v**k g(v) dv`` for the 3-D Maxwell-Boltzmann speed density."""
    def g(v):
        return 4 / math.sqrt(math.pi) * v ** 2 / vp ** 3 * math.exp(-(v / vp) ** 2)

    return integrate.quad(lambda v: v ** k * g(v), 0, 30 * vp, epsabs=0, epsrel=1e-12, limit=200)[0]


def effusive_mean(v_w):
    """Mean of ``v**3 exp(-v**2/v_w**2)`` by quadrature."""
    num = integrate.quad(lambda v: v ** 4 * math.exp(-(v / v_w) ** 2), 0, 30 * v_w)[0]
    den = integrate.quad(lambda v: v ** 3 * math.exp(-(v / v_w) ** 2), 0, 30 * v_w)[0]
    return num / den
