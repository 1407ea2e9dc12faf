"""Pure-Python/numpy implementations of the hot kernels.

These define the reference semantics.  ``_ckernels.pyx`` mirrors them
operation for operation; the trajectory tracer in particular performs the
same floating-point operations in the same order, so both backends return
bit-identical trajectories on IEEE hardware with a conforming libm.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import stream_key, uniform_from_key

SIGMA_A = 8.4946
SIGMA_B = 1.6989

KICK_NONE = 0
KICK_ISOTROPIC = 1
KICK_DIFFRACTIVE = 2
KICK_HENYEY_GREENSTEIN = 3

BACKEND = "python"


# ---------------------------------------------------------------------------
# Talbot coherence sum
# ---------------------------------------------------------------------------


def coherence_sum(shift, xi, f, clip, g, tail_tol, j_max, block=1 << 18):
    """Truncated sum ``sum_j b_j conj(b_{j-shift}) exp(i pi xi (shift - 2 j))``.

    ``b_j = clip * f * sinc(j f) + g_j`` where ``g`` holds the correction
    coefficients for ``|j| <= N`` (``len(g) == 2 N + 1``).  The window
    ``|j| <= J`` grows until ``f - sum_{|j|<=J} |b_j|**2 < tail_tol``.

    Returns ``(value, J)``; ``J == -1`` signals that ``j_max`` was reached.
    """
    g = np.asarray(g, dtype=complex)
    n_g = (len(g) - 1) // 2
    clip = complex(clip)
    xi_frac = xi - math.floor(xi)
    head = np.exp(1j * math.pi * xi * shift)

    def coeff(j):
        out = clip * f * np.sinc(j * f)
        inside = np.abs(j) <= n_g
        if n_g >= 0 and np.any(inside):
            out = out + np.where(inside, g[np.clip(j + n_g, 0, 2 * n_g)], 0.0)
        return out

    def phase(j):
        return head * np.exp(-2j * math.pi * np.mod(j * xi_frac, 1.0))

    j0 = max(n_g, shift, 0)
    j = np.arange(-j0, j0 + 1, dtype=np.int64)
    b = coeff(j)
    norm = float(np.sum(np.abs(b) ** 2))
    jj = np.arange(-j0 + shift, j0 + 1, dtype=np.int64)
    total = complex(np.sum(coeff(jj) * np.conj(coeff(jj - shift)) * phase(jj)))
    if f - norm < tail_tol:
        return total, j0

    start = j0 + 1
    while start <= j_max:
        stop = min(start + block, j_max + 1)
        big = np.arange(start, stop, dtype=np.int64)
        b_pos = coeff(big)
        b_neg = coeff(-big)
        b_lag = coeff(big - shift)
        b_lead = coeff(shift - big)
        incr = np.abs(b_pos) ** 2 + np.abs(b_neg) ** 2
        cum = norm + np.cumsum(incr)
        terms = b_pos * np.conj(b_lag) * phase(big)
        if shift != 0:
            terms = terms + b_lead * np.conj(b_neg) * phase(shift - big)
        else:
            terms = terms + b_neg * np.conj(b_neg) * phase(-big)
        done = np.nonzero(f - cum < tail_tol)[0]
        if done.size:
            k = int(done[0])
            total += complex(np.sum(terms[: k + 1]))
            return total, int(big[k])
        total += complex(np.sum(terms))
        norm = float(cum[-1])
        start = stop
    return total, -1


# ---------------------------------------------------------------------------
# Beamline trajectories
# ---------------------------------------------------------------------------


def sigma_eff_formula(c6_factor, vg, vg06, v):
    return c6_factor * vg06 / v * (SIGMA_A + SIGMA_B * (v * v) / (vg * vg))


def elastic_kick(vx, vy, vz, ugx, ugy, ugz, mass_ratio, cos_t, phi):
    """Rotate the relative velocity by (theta, phi) in the centre-of-mass frame.

    ``mass_ratio`` is m_gas / (M + m_gas).  Returns the new molecule velocity.
    """
    gx = vx - ugx
    gy = vy - ugy
    gz = vz - ugz
    gm = math.sqrt(gx * gx + gy * gy + gz * gz)
    if gm == 0.0:
        return vx, vy, vz
    cx = vx - mass_ratio * gx
    cy = vy - mass_ratio * gy
    cz = vz - mass_ratio * gz
    hx = gx / gm
    hy = gy / gm
    hz = gz / gm
    if abs(hx) < 0.9:
        # e1 = h x (1, 0, 0)
        ex = 0.0
        ey = hz
        ez = -hy
    else:
        # e1 = h x (0, 1, 0)
        ex = -hz
        ey = 0.0
        ez = hx
    en = math.sqrt(ex * ex + ey * ey + ez * ez)
    ex = ex / en
    ey = ey / en
    ez = ez / en
    fx = hy * ez - hz * ey
    fy = hz * ex - hx * ez
    fz = hx * ey - hy * ex
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    cp = math.cos(phi)
    sp = math.sin(phi)
    nx = cos_t * hx + sin_t * (cp * ex + sp * fx)
    ny = cos_t * hy + sin_t * (cp * ey + sp * fy)
    nz = cos_t * hz + sin_t * (cp * ez + sp * fz)
    return (
        cx + mass_ratio * gm * nx,
        cy + mass_ratio * gm * ny,
        cz + mass_ratio * gm * nz,
    )


def _scatter_cosine(law, param, a5, gm, spd, p):
    if law == KICK_ISOTROPIC:
        return 2.0 * a5 - 1.0
    if law == KICK_HENYEY_GREENSTEIN:
        if param == 0.0:
            return 2.0 * a5 - 1.0
        s = (1.0 - param * param) / (1.0 - param + 2.0 * param * a5)
        c = (1.0 + param * param - s * s) / (2.0 * param)
        return min(1.0, max(-1.0, c))
    # diffractive: Rayleigh-distributed momentum transfer of scale hbar / rho
    sig = sigma_eff_formula(p["c6_factor"], p["v_gas"], p["v_gas06"], spd)
    rho = math.sqrt(sig / (2.0 * math.pi))
    q = p["hbar"] / rho * math.sqrt(-2.0 * math.log(a5))
    x = q / (2.0 * p["mu_kg"] * gm)
    if x > 1.0:
        x = 1.0
    return 1.0 - 2.0 * x * x


def launch(key, p):
    """Draw the launch state; returns ``(speed, weight, y0, vy0, vz0)``."""
    u0 = uniform_from_key(key, 0)
    u1 = uniform_from_key(key, 1)
    v_w = p["v_w"]
    lo = p["band_lo"]
    hi = p["band_hi"]
    if hi > lo:
        speed = lo + u0 * (hi - lo)
        x = speed / v_w
        weight = 2.0 * x * x * x / v_w * math.exp(-x * x) * (hi - lo)
    else:
        speed = v_w * math.sqrt(-math.log(u0) - math.log(u1))
        weight = 1.0
    gravity = p["gravity"]
    z_mid = p["z_mid"]
    y0 = p["y_src"] + (uniform_from_key(key, 2) - 0.5) * p["h_src"]
    yt = p["y_mid"] + (uniform_from_key(key, 3) - 0.5) * p["window"]
    slope = (yt - y0) / z_mid + gravity * z_mid / (2.0 * speed * speed)
    vz0 = speed / math.sqrt(1.0 + slope * slope)
    return speed, weight, y0, slope * vz0, vz0


def free_flight(y0, vy0, vz0, p):
    """Collision-free parabola through all planes.

    Returns ``(passed, t_end, speed_end)``.  Flight stops at the first
    blocking aperture, so ``t_end`` is the time during which a collision can
    still change the outcome.
    """
    gravity = p["gravity"]
    ignore = p["ignore_apertures"]
    z = 0.0
    y = y0
    vy = vy0
    t_end = 0.0
    ok = True
    for zp, yc, hh in p["planes"]:
        dt = (zp - z) / vz0
        y = y + vy * dt - 0.5 * gravity * dt * dt
        vy = vy - gravity * dt
        z = zp
        t_end = t_end + dt
        if not ignore and not abs(y - yc) < 0.5 * hh:
            ok = False
            break
    return ok, t_end, math.sqrt(vy * vy + vz0 * vz0)


def collision_rate(speed, p):
    return p["n_density"] * sigma_eff_formula(p["c6_factor"], p["v_gas"], p["v_gas06"], speed) * speed


def collided_flight(key, y0, vy0, vz0, t_left, p):
    """Flight from the source with the first collision after ``t_left``.

    Later free paths are drawn analogue.  Returns ``(alive, speed, n_coll)``.
    """
    gravity = p["gravity"]
    ignore = p["ignore_apertures"]
    planes = p["planes"]
    n_planes = len(planes)
    law = p["kick_law"]
    param = p["kick_param"]
    sigma_gas = p["sigma_gas"]
    mass_ratio = p["mass_ratio"]
    max_coll = p["max_collisions"]
    z = 0.0
    y = y0
    vx = 0.0
    vy = vy0
    vz = vz0
    k = 0
    plane = 0
    while True:
        if not vz > 0.0:
            return False, 0.0, k
        zp, yc, hh = planes[plane]
        t_plane = (zp - z) / vz
        if t_plane <= t_left:
            y = y + vy * t_plane - 0.5 * gravity * t_plane * t_plane
            vy = vy - gravity * t_plane
            z = zp
            t_left = t_left - t_plane
            if not ignore and not abs(y - yc) < 0.5 * hh:
                return False, 0.0, k
            plane += 1
            if plane == n_planes:
                return True, math.sqrt(vx * vx + vy * vy + vz * vz), k
            continue
        # collision
        y = y + vy * t_left - 0.5 * gravity * t_left * t_left
        vy = vy - gravity * t_left
        z = z + vz * t_left
        c = 5 + 7 * k
        k += 1
        if law != KICK_NONE:
            a1 = uniform_from_key(key, c)
            a2 = uniform_from_key(key, c + 1)
            a3 = uniform_from_key(key, c + 2)
            a4 = uniform_from_key(key, c + 3)
            a5 = uniform_from_key(key, c + 4)
            a6 = uniform_from_key(key, c + 5)
            r1 = math.sqrt(-2.0 * math.log(a1))
            r2 = math.sqrt(-2.0 * math.log(a3))
            ugx = sigma_gas * r1 * math.cos(2.0 * math.pi * a2)
            ugy = sigma_gas * r1 * math.sin(2.0 * math.pi * a2)
            ugz = sigma_gas * r2 * math.cos(2.0 * math.pi * a4)
            gx = vx - ugx
            gy = vy - ugy
            gz = vz - ugz
            gm = math.sqrt(gx * gx + gy * gy + gz * gz)
            spd = math.sqrt(vx * vx + vy * vy + vz * vz)
            cos_t = _scatter_cosine(law, param, a5, gm, spd, p)
            vx, vy, vz = elastic_kick(vx, vy, vz, ugx, ugy, ugz, mass_ratio, cos_t, 2.0 * math.pi * a6)
        if k >= max_coll:
            return False, 0.0, k
        spd = math.sqrt(vx * vx + vy * vy + vz * vz)
        t_left = -math.log(uniform_from_key(key, 4 + 7 * k)) / collision_rate(spd, p)


def trace_one(seed, stream, p):
    """Trace one trajectory with a forced first collision.

    The uncollided branch carries weight ``w exp(-tau)`` and the collided
    branch ``w (1 - exp(-tau))``, ``tau`` being the optical depth of the
    straight flight.  Returns ``(launch_speed, w_free, speed_free, w_coll,
    alive_coll, speed_coll, n_coll)``.
    """
    key = stream_key(seed, stream)
    speed, weight, y0, vy0, vz0 = launch(key, p)
    free_ok, t_end, speed_end = free_flight(y0, vy0, vz0, p)
    if p["n_density"] > 0.0:
        rate0 = collision_rate(math.sqrt(vy0 * vy0 + vz0 * vz0), p)
        tau_end = rate0 * t_end
    else:
        rate0 = 0.0
        tau_end = 0.0
    w_free = weight * math.exp(-tau_end) if free_ok else 0.0
    speed_free = speed_end if free_ok else 0.0
    if not tau_end > 0.0:
        return speed, w_free, speed_free, 0.0, False, 0.0, 0
    p_coll = -math.expm1(-tau_end)
    tau_c = -math.log1p(-uniform_from_key(key, 4) * p_coll)
    alive, spd, k = collided_flight(key, y0, vy0, vz0, tau_c / rate0, p)
    return speed, w_free, speed_free, weight * p_coll, alive, spd, k


def plane_table(p):
    return (
        (p["z_mid"], p["y_mid"], p["h_mid"]),
        (p["z_det"], p["y_det"], p["h_det"]),
    )


def trace_batch(seed, first_stream, n, params):
    """Trace ``n`` trajectories on streams ``first_stream .. first_stream + n - 1``."""
    p = dict(params)
    p["planes"] = plane_table(p)
    launch = np.empty(n)
    w_free = np.empty(n)
    s_free = np.empty(n)
    w_coll = np.empty(n)
    alive = np.empty(n, dtype=bool)
    s_coll = np.empty(n)
    n_coll = np.empty(n, dtype=np.int64)
    for i in range(n):
        (launch[i], w_free[i], s_free[i], w_coll[i], alive[i], s_coll[i], n_coll[i]) = trace_one(
            seed, first_stream + i, p
        )
    return {
        "launch_speed": launch,
        "w_free": w_free,
        "speed_free": s_free,
        "w_coll": w_coll,
        "alive_coll": alive,
        "speed_coll": s_coll,
        "n_coll": n_coll,
    }
