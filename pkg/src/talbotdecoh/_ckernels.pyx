# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_pykernels``.

The trajectory tracer repeats the reference arithmetic operation by operation
(same order, same libm calls) so results match the Python backend bit for
bit.  The coherence sum replaces per-term sin/exp calls by rotor recurrences
that are reseeded exactly every ``RESEED`` steps; it agrees with the Python
backend to rounding accuracy, not bitwise.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, log, expm1, log1p, sin, cos, fabs, floor, fmod, M_PI
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "compiled"

cdef double SIGMA_A = 8.4946
cdef double SIGMA_B = 1.6989

cdef int KICK_NONE = 0
cdef int KICK_ISOTROPIC = 1
cdef int KICK_DIFFRACTIVE = 2
cdef int KICK_HENYEY_GREENSTEIN = 3

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef uint64_t SEED_SALT = 0x5851F42D4C957F2DULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
cdef int RESEED = 512


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t stream) nogil:
    return mix64(mix64(seed ^ SEED_SALT) + GAMMA * stream)


cdef inline double unif(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t bits = mix64(key + GAMMA * (counter + 1))
    return (<double>(bits >> 11) + 0.5) * TWO_M53


def uniform(uint64_t seed, uint64_t stream, uint64_t counter):
    return unif(stream_key(seed, stream), counter)


# ---------------------------------------------------------------------------
# Talbot coherence sum
# ---------------------------------------------------------------------------

cdef inline double sinc_pi(double x) nogil:
    # sin(pi x) / (pi x) with the argument reduced modulo 2
    if x == 0.0:
        return 1.0
    return sin(M_PI * fmod(x, 2.0)) / (M_PI * x)


def coherence_sum(int shift, double xi, double f, clip, g, double tail_tol,
                  long long j_max):
    cdef const double complex[:] gv = np.ascontiguousarray(g, dtype=np.complex128)
    cdef Py_ssize_t n_g = (gv.shape[0] - 1) // 2
    cdef double complex cl = clip
    cdef double xi_frac = xi - floor(xi)
    cdef double complex head = cos(M_PI * xi * shift) + 1j * sin(M_PI * xi * shift)
    cdef double complex tail_head = cos(-2.0 * M_PI * shift * xi_frac) + 1j * sin(-2.0 * M_PI * shift * xi_frac)
    cdef long long j0 = n_g
    cdef long long j, big, stop_exact
    cdef double norm = 0.0, norm_c = 0.0, y, t
    cdef double complex total = 0.0, total_c = 0.0, term, yz, tz
    cdef double complex bj, bl, ph
    cdef double ang, s1, s2, ff = f * f, clip2
    cdef double complex rot_f, step_f, rot_q, step_q, lag_f

    if shift > j0:
        j0 = shift

    # exact window |j| <= j0
    for j in range(-j0, j0 + 1):
        bj = _coeff(j, f, cl, gv, n_g)
        y = (bj.real * bj.real + bj.imag * bj.imag) - norm_c
        t = norm + y
        norm_c = (t - norm) - y
        norm = t
    for j in range(-j0 + shift, j0 + 1):
        term = _coeff(j, f, cl, gv, n_g) * _coeff(j - shift, f, cl, gv, n_g).conjugate() * _phase(j, head, xi_frac)
        yz = term - total_c
        tz = total + yz
        total_c = (tz - total) - yz
        total = tz
    if f - norm < tail_tol:
        return complex(total), int(j0)

    # indices whose partners may still carry correction coefficients
    stop_exact = n_g + shift
    big = j0 + 1
    while big <= stop_exact and big <= j_max:
        term = _coeff(big, f, cl, gv, n_g) * _coeff(big - shift, f, cl, gv, n_g).conjugate() * _phase(big, head, xi_frac)
        if shift != 0:
            term = term + _coeff(shift - big, f, cl, gv, n_g) * _coeff(-big, f, cl, gv, n_g).conjugate() * _phase(shift - big, head, xi_frac)
        else:
            bj = _coeff(-big, f, cl, gv, n_g)
            term = term + bj * bj.conjugate() * _phase(-big, head, xi_frac)
        bj = _coeff(big, f, cl, gv, n_g)
        bl = _coeff(-big, f, cl, gv, n_g)
        y = (bj.real * bj.real + bj.imag * bj.imag + bl.real * bl.real + bl.imag * bl.imag) - norm_c
        t = norm + y
        norm_c = (t - norm) - y
        norm = t
        yz = term - total_c
        tz = total + yz
        total_c = (tz - total) - yz
        total = tz
        if f - norm < tail_tol:
            return complex(total), int(big)
        big += 1

    # pure binary tail: rotor recurrences
    clip2 = cl.real * cl.real + cl.imag * cl.imag
    step_f = cos(M_PI * f) + 1j * sin(M_PI * f)
    step_q = cos(-2.0 * M_PI * xi_frac) + 1j * sin(-2.0 * M_PI * xi_frac)
    lag_f = cos(-M_PI * f * shift) + 1j * sin(-M_PI * f * shift)
    with nogil:
        while big <= j_max:
            if (big - (j0 + 1)) % RESEED == 0 or big == stop_exact + 1:
                ang = M_PI * fmod(f * big, 2.0)
                rot_f = cos(ang) + 1j * sin(ang)
                ang = -2.0 * M_PI * fmod(big * xi_frac, 1.0)
                rot_q = cos(ang) + 1j * sin(ang)
            s1 = rot_f.imag / (M_PI * f * big)
            if big == shift:
                s2 = 1.0
            else:
                s2 = (rot_f * lag_f).imag / (M_PI * f * (big - shift))
            ph = head * rot_q
            if shift != 0:
                term = clip2 * ff * s1 * s2 * (ph + head * tail_head * rot_q.conjugate())
            else:
                term = clip2 * ff * s1 * s1 * (ph + head * rot_q.conjugate())
            y = 2.0 * clip2 * ff * s1 * s1 - norm_c
            t = norm + y
            norm_c = (t - norm) - y
            norm = t
            yz = term - total_c
            tz = total + yz
            total_c = (tz - total) - yz
            total = tz
            if f - norm < tail_tol:
                break
            rot_f = rot_f * step_f
            rot_q = rot_q * step_q
            big += 1
    if big > j_max:
        return complex(total), -1
    return complex(total), int(big)


cdef inline double complex _coeff(long long j, double f, double complex cl,
                                  const double complex[:] gv, Py_ssize_t n_g) nogil:
    cdef double complex out = cl * (f * sinc_pi(j * f))
    if -n_g <= j <= n_g:
        out = out + gv[j + n_g]
    return out


cdef inline double complex _phase(long long j, double complex head, double xi_frac) nogil:
    cdef double frac = fmod(j * xi_frac, 1.0)
    if frac < 0.0:
        frac = frac + 1.0
    cdef double ang = -2.0 * M_PI * frac
    return head * (cos(ang) + 1j * sin(ang))


# ---------------------------------------------------------------------------
# Beamline trajectories
# ---------------------------------------------------------------------------

cdef struct Params:
    double z_mid, z_det, y_src, y_mid, y_det, h_src, h_mid, h_det
    double window, gravity, v_w, band_lo, band_hi, n_density
    double c6_factor, v_gas, v_gas06, sigma_gas, mass_ratio, mu_kg, hbar
    int kick_law
    double kick_param
    int ignore_apertures
    long long max_collisions


cdef inline double sigma_eff_formula(double c6_factor, double vg, double vg06, double v) nogil:
    return c6_factor * vg06 / v * (SIGMA_A + SIGMA_B * (v * v) / (vg * vg))


cdef inline double scatter_cosine(Params* p, double a5, double gm, double spd) nogil:
    cdef double s, c, sig, rho, q, x, g = p.kick_param
    if p.kick_law == KICK_ISOTROPIC:
        return 2.0 * a5 - 1.0
    if p.kick_law == KICK_HENYEY_GREENSTEIN:
        if g == 0.0:
            return 2.0 * a5 - 1.0
        s = (1.0 - g * g) / (1.0 - g + 2.0 * g * a5)
        c = (1.0 + g * g - s * s) / (2.0 * g)
        if c > 1.0:
            c = 1.0
        if c < -1.0:
            c = -1.0
        return c
    sig = sigma_eff_formula(p.c6_factor, p.v_gas, p.v_gas06, spd)
    rho = sqrt(sig / (2.0 * M_PI))
    q = p.hbar / rho * sqrt(-2.0 * log(a5))
    x = q / (2.0 * p.mu_kg * gm)
    if x > 1.0:
        x = 1.0
    return 1.0 - 2.0 * x * x


cdef inline void elastic_kick(double* vx, double* vy, double* vz,
                              double ugx, double ugy, double ugz,
                              double mass_ratio, double cos_t, double phi) nogil:
    cdef double gx = vx[0] - ugx
    cdef double gy = vy[0] - ugy
    cdef double gz = vz[0] - ugz
    cdef double gm = sqrt(gx * gx + gy * gy + gz * gz)
    cdef double cx, cy, cz, hx, hy, hz, ex, ey, ez, en, fx, fy, fz
    cdef double sin_t, cp, sp, nx, ny, nz, tmp
    if gm == 0.0:
        return
    cx = vx[0] - mass_ratio * gx
    cy = vy[0] - mass_ratio * gy
    cz = vz[0] - mass_ratio * gz
    hx = gx / gm
    hy = gy / gm
    hz = gz / gm
    if fabs(hx) < 0.9:
        ex = 0.0
        ey = hz
        ez = -hy
    else:
        ex = -hz
        ey = 0.0
        ez = hx
    en = sqrt(ex * ex + ey * ey + ez * ez)
    ex = ex / en
    ey = ey / en
    ez = ez / en
    fx = hy * ez - hz * ey
    fy = hz * ex - hx * ez
    fz = hx * ey - hy * ex
    tmp = 1.0 - cos_t * cos_t
    if tmp < 0.0:
        tmp = 0.0
    sin_t = sqrt(tmp)
    cp = cos(phi)
    sp = sin(phi)
    nx = cos_t * hx + sin_t * (cp * ex + sp * fx)
    ny = cos_t * hy + sin_t * (cp * ey + sp * fy)
    nz = cos_t * hz + sin_t * (cp * ez + sp * fz)
    vx[0] = cx + mass_ratio * gm * nx
    vy[0] = cy + mass_ratio * gm * ny
    vz[0] = cz + mass_ratio * gm * nz


cdef void trace_one(uint64_t seed, uint64_t stream, Params* p,
                    double* out_launch, double* out_wf, double* out_sf,
                    double* out_wc, cnp.npy_bool* out_alive, double* out_sc,
                    int64_t* out_n) nogil:
    cdef uint64_t key = stream_key(seed, stream)
    cdef double u0 = unif(key, 0)
    cdef double u1 = unif(key, 1)
    cdef double speed, x, weight, y0, yt, slope, vz0, vy0
    cdef double z, y, vy, vx, vz, t_end, dt, spd0, rate0, tau_end
    cdef double w_free, speed_free, p_coll, w_coll, tau_c, t_left
    cdef double t_plane, zp, yc, hh, spd, rate
    cdef double a1, a2, a3, a4, a5, a6, r1, r2, ugx, ugy, ugz, gx, gy, gz, gm, cos_t
    cdef int free_ok, i, plane
    cdef long long k, c
    cdef double pz[2]
    cdef double py[2]
    cdef double ph[2]
    pz[0] = p.z_mid
    pz[1] = p.z_det
    py[0] = p.y_mid
    py[1] = p.y_det
    ph[0] = p.h_mid
    ph[1] = p.h_det

    if p.band_hi > p.band_lo:
        speed = p.band_lo + u0 * (p.band_hi - p.band_lo)
        x = speed / p.v_w
        weight = 2.0 * x * x * x / p.v_w * exp(-x * x) * (p.band_hi - p.band_lo)
    else:
        speed = p.v_w * sqrt(-log(u0) - log(u1))
        weight = 1.0
    y0 = p.y_src + (unif(key, 2) - 0.5) * p.h_src
    yt = p.y_mid + (unif(key, 3) - 0.5) * p.window
    slope = (yt - y0) / p.z_mid + p.gravity * p.z_mid / (2.0 * speed * speed)
    vz0 = speed / sqrt(1.0 + slope * slope)
    vy0 = slope * vz0

    z = 0.0
    y = y0
    vy = vy0
    t_end = 0.0
    free_ok = 1
    for i in range(2):
        dt = (pz[i] - z) / vz0
        y = y + vy * dt - 0.5 * p.gravity * dt * dt
        vy = vy - p.gravity * dt
        z = pz[i]
        t_end = t_end + dt
        if not p.ignore_apertures and not fabs(y - py[i]) < 0.5 * ph[i]:
            free_ok = 0
            break
    if p.n_density > 0.0:
        spd0 = sqrt(vy0 * vy0 + vz0 * vz0)
        rate0 = p.n_density * sigma_eff_formula(p.c6_factor, p.v_gas, p.v_gas06, spd0) * spd0
        tau_end = rate0 * t_end
    else:
        rate0 = 0.0
        tau_end = 0.0
    w_free = 0.0
    speed_free = 0.0
    if free_ok:
        w_free = weight * exp(-tau_end)
        speed_free = sqrt(vy * vy + vz0 * vz0)

    out_launch[0] = speed
    out_wf[0] = w_free
    out_sf[0] = speed_free
    out_wc[0] = 0.0
    out_alive[0] = 0
    out_sc[0] = 0.0
    out_n[0] = 0
    if not tau_end > 0.0:
        return

    p_coll = -expm1(-tau_end)
    w_coll = weight * p_coll
    out_wc[0] = w_coll
    tau_c = -log1p(-unif(key, 4) * p_coll)
    t_left = tau_c / rate0

    z = 0.0
    y = y0
    vx = 0.0
    vy = vy0
    vz = vz0
    k = 0
    plane = 0
    while True:
        if not vz > 0.0:
            out_n[0] = k
            return
        zp = pz[plane]
        yc = py[plane]
        hh = ph[plane]
        t_plane = (zp - z) / vz
        if t_plane <= t_left:
            y = y + vy * t_plane - 0.5 * p.gravity * t_plane * t_plane
            vy = vy - p.gravity * t_plane
            z = zp
            t_left = t_left - t_plane
            if not p.ignore_apertures and not fabs(y - yc) < 0.5 * hh:
                out_n[0] = k
                return
            plane += 1
            if plane == 2:
                out_alive[0] = 1
                out_sc[0] = sqrt(vx * vx + vy * vy + vz * vz)
                out_n[0] = k
                return
            continue
        y = y + vy * t_left - 0.5 * p.gravity * t_left * t_left
        vy = vy - p.gravity * t_left
        z = z + vz * t_left
        c = 5 + 7 * k
        k += 1
        if p.kick_law != KICK_NONE:
            a1 = unif(key, c)
            a2 = unif(key, c + 1)
            a3 = unif(key, c + 2)
            a4 = unif(key, c + 3)
            a5 = unif(key, c + 4)
            a6 = unif(key, c + 5)
            r1 = sqrt(-2.0 * log(a1))
            r2 = sqrt(-2.0 * log(a3))
            ugx = p.sigma_gas * r1 * cos(2.0 * M_PI * a2)
            ugy = p.sigma_gas * r1 * sin(2.0 * M_PI * a2)
            ugz = p.sigma_gas * r2 * cos(2.0 * M_PI * a4)
            gx = vx - ugx
            gy = vy - ugy
            gz = vz - ugz
            gm = sqrt(gx * gx + gy * gy + gz * gz)
            spd = sqrt(vx * vx + vy * vy + vz * vz)
            cos_t = scatter_cosine(p, a5, gm, spd)
            elastic_kick(&vx, &vy, &vz, ugx, ugy, ugz, p.mass_ratio, cos_t, 2.0 * M_PI * a6)
        if k >= p.max_collisions:
            out_n[0] = k
            return
        spd = sqrt(vx * vx + vy * vy + vz * vz)
        rate = p.n_density * sigma_eff_formula(p.c6_factor, p.v_gas, p.v_gas06, spd) * spd
        t_left = -log(unif(key, 4 + 7 * k)) / rate


def trace_batch(seed, first_stream, Py_ssize_t n, params):
    cdef Params p
    p.z_mid = params["z_mid"]
    p.z_det = params["z_det"]
    p.y_src = params["y_src"]
    p.y_mid = params["y_mid"]
    p.y_det = params["y_det"]
    p.h_src = params["h_src"]
    p.h_mid = params["h_mid"]
    p.h_det = params["h_det"]
    p.window = params["window"]
    p.gravity = params["gravity"]
    p.v_w = params["v_w"]
    p.band_lo = params["band_lo"]
    p.band_hi = params["band_hi"]
    p.n_density = params["n_density"]
    p.c6_factor = params["c6_factor"]
    p.v_gas = params["v_gas"]
    p.v_gas06 = params["v_gas06"]
    p.sigma_gas = params["sigma_gas"]
    p.mass_ratio = params["mass_ratio"]
    p.mu_kg = params["mu_kg"]
    p.hbar = params["hbar"]
    p.kick_law = params["kick_law"]
    p.kick_param = params["kick_param"]
    p.ignore_apertures = 1 if params["ignore_apertures"] else 0
    p.max_collisions = params["max_collisions"]

    launch = np.empty(n)
    w_free = np.empty(n)
    s_free = np.empty(n)
    w_coll = np.empty(n)
    alive = np.zeros(n, dtype=bool)
    s_coll = np.empty(n)
    n_coll = np.empty(n, dtype=np.int64)
    cdef double[::1] l_v = launch
    cdef double[::1] wf_v = w_free
    cdef double[::1] sf_v = s_free
    cdef double[::1] wc_v = w_coll
    cdef cnp.npy_bool[::1] a_v = alive.view(np.uint8)
    cdef double[::1] sc_v = s_coll
    cdef int64_t[::1] n_v = n_coll
    cdef uint64_t s0 = seed
    cdef uint64_t f0 = first_stream
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            trace_one(s0, f0 + i, &p, &l_v[i], &wf_v[i], &sf_v[i], &wc_v[i],
                      &a_v[i], &sc_v[i], &n_v[i])
    return {
        "launch_speed": launch,
        "w_free": w_free,
        "speed_free": s_free,
        "w_coll": w_coll,
        "alive_coll": alive,
        "speed_coll": s_coll,
        "n_coll": n_coll,
    }
