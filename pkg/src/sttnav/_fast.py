"""Compiled inner loops (numba) for the tube step and builtin plants.

Everything here is an optimization of the plain numpy implementations in
tube.py and plant.py; the math and branch structure are mirrored exactly
and the equivalence is covered by tests. If numba is unavailable the
package falls back to the numpy paths.

Motion parameter packing (one row per obstacle):
  kinds: 0 static/live-rest, 1 linear, 2 bounce, 3 sinusoid, 4 waypoints
  prm[:, 0:3]  A  static: position, linear/bounce: start (bounce: minus lo),
               sinusoid: center
  prm[:, 3:6]  B  linear/bounce: velocity
  prm[:, 6:9]  C  bounce: box lo
  prm[:, 9:12] D  bounce: box span
  prm[:, 12:16]   sinusoid: axis, amplitude, omega, phase
Waypoint rows index into the concatenated (wp_t, wp_p) arrays via wp_off.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep of the fast path only
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _eval_obstacles(t, kinds, prm, wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad,
                    cen, rr):
    n_o, n = cen.shape
    for j in range(n_o):
        if ovr_mask[j]:
            for i in range(n):
                cen[j, i] = ovr_pos[j, i]
        else:
            k = kinds[j]
            if k == 0:
                for i in range(n):
                    cen[j, i] = prm[j, i]
            elif k == 1:
                for i in range(n):
                    cen[j, i] = prm[j, i] + t * prm[j, 3 + i]
            elif k == 2:
                for i in range(n):
                    span = prm[j, 9 + i]
                    u = (prm[j, i] + t * prm[j, 3 + i]) % (2.0 * span)
                    if u > span:
                        u = 2.0 * span - u
                    cen[j, i] = prm[j, 6 + i] + u
            elif k == 3:
                for i in range(n):
                    cen[j, i] = prm[j, i]
                ax = int(prm[j, 12])
                cen[j, ax] += prm[j, 13] * np.sin(prm[j, 14] * t + prm[j, 15])
            else:
                a = wp_off[j]
                b = wp_off[j + 1]
                if t <= wp_t[a]:
                    for i in range(n):
                        cen[j, i] = wp_p[a, i]
                elif t >= wp_t[b - 1]:
                    for i in range(n):
                        cen[j, i] = wp_p[b - 1, i]
                else:
                    kk = a
                    while wp_t[kk + 1] < t:
                        kk += 1
                    w = (t - wp_t[kk]) / (wp_t[kk + 1] - wp_t[kk])
                    for i in range(n):
                        cen[j, i] = wp_p[kk, i] + w * (wp_p[kk + 1, i] - wp_p[kk, i])
        if rad[j, 1] != 0.0:
            rr[j] = rad[j, 0] + rad[j, 1] * np.sin(rad[j, 2] * t + rad[j, 3])
        else:
            rr[j] = rad[j, 0]


@njit(cache=True)
def _deriv(t, sg, eta, k1, t_c, t_guard_start, rho_min, rho_max, inv_rmax,
           eps_sing, kinds, prm, wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad,
           k2, k3, cen, rr, out, want_rate):
    n = sg.shape[0]
    tt = t if t <= t_guard_start else t_guard_start
    attr = k1 * t_c / (t_c - tt)
    for i in range(n):
        out[i] = attr * (eta[i] - sg[i])
    rate = attr if want_rate else 0.0
    ns = 0
    min_gap = np.inf
    n_o = kinds.shape[0]
    if n_o == 0:
        return rate, ns, min_gap
    _eval_obstacles(t, kinds, prm, wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad, cen, rr)
    for j in range(n_o):
        d2 = 0.0
        for i in range(n):
            dd = sg[i] - cen[j, i]
            d2 += dd * dd
        dist = np.sqrt(d2)
        gap = dist - rr[j]
        if gap < min_gap:
            min_gap = gap
        if gap > rho_max:
            continue
        g = gap
        if g < eps_sing:
            g = eps_sing
            ns += 1
        theta = 1.0 / g - inv_rmax
        den = dist - rr[j] - rho_min
        if den < eps_sing:
            den = eps_sing
            ns += 1
        den3 = den * den * den
        if n == 2:
            mhx = (sg[0] - cen[j, 0]) / dist
            mhy = (sg[1] - cen[j, 1]) / dist
            vx = -mhy
            vy = mhx
            if vx * (eta[0] - sg[0]) + vy * (eta[1] - sg[1]) < 0.0:
                vx = -vx
                vy = -vy
            out[0] += theta * (k2[j] * (sg[0] - cen[j, 0]) / den3 + k3[j] * vx)
            out[1] += theta * (k2[j] * (sg[1] - cen[j, 1]) / den3 + k3[j] * vy)
        else:
            m0 = (sg[0] - cen[j, 0]) / dist
            m1 = (sg[1] - cen[j, 1]) / dist
            m2_ = (sg[2] - cen[j, 2]) / dist
            g0 = eta[0] - sg[0]
            g1 = eta[1] - sg[1]
            g2 = eta[2] - sg[2]
            dotg = g0 * m0 + g1 * m1 + g2 * m2_
            p0 = g0 - dotg * m0
            p1 = g1 - dotg * m1
            p2 = g2 - dotg * m2_
            pn = np.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
            if pn < 1e-9:
                a0 = abs(m0)
                a1 = abs(m1)
                a2 = abs(m2_)
                if a0 <= a1 and a0 <= a2:
                    p0, p1, p2 = 0.0, m2_, -m1
                elif a1 <= a2:
                    p0, p1, p2 = -m2_, 0.0, m0
                else:
                    p0, p1, p2 = m1, -m0, 0.0
                pn = np.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
            p0 /= pn
            p1 /= pn
            p2 /= pn
            out[0] += theta * (k2[j] * (sg[0] - cen[j, 0]) / den3 + k3[j] * p0)
            out[1] += theta * (k2[j] * (sg[1] - cen[j, 1]) / den3 + k3[j] * p1)
            out[2] += theta * (k2[j] * (sg[2] - cen[j, 2]) / den3 + k3[j] * p2)
        if want_rate:
            invg2 = 1.0 / (g * g)
            rate += k2[j] * (dist / den3 * invg2
                             + theta * (1.0 / den3 + 3.0 * dist / (den3 * den))) \
                + k3[j] * (invg2 + 3.0 * theta / den)
    return rate, ns, min_gap


@njit(cache=True)
def step_kernel(t, t_end, sigma, eta, k1, t_c, t_guard_start, rho_min, rho_max,
                nu, eps_sing, sensing, budget, max_sub, max_disp,
                kinds, prm, wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad, k2, k3,
                out_sigma, out_centers, out_radii, out_gaps):
    """One tube tick: substepped RK4 on the center, then the closed-form
    radius at (t_end, new center). Fills the out_* arrays and returns
    (rho, d, min_sensed_gap, min_gap, argmin_gap, nsub, near_sing, capped,
    entry_breach, blowup). An entry-state margin breach skips integration
    (the center was overrun since the previous tick; guarantees are void)."""
    n = sigma.shape[0]
    n_o = kinds.shape[0]
    inv_rmax = 1.0 / rho_max
    sg = out_sigma
    for i in range(n):
        sg[i] = sigma[i]
    d0 = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    d3 = np.empty(n)
    tmp = np.empty(n)
    cen = out_centers
    rr = out_radii

    tiny = 1e-15 * (t_end if t_end > 1.0 else 1.0)
    nsub = 0
    near_sing = 0
    capped = 0
    entry_breach = 0
    blowup = 0
    tl = t
    while tl < t_end - tiny:
        rate, ns, entry_gap = _deriv(tl, sg, eta, k1, t_c, t_guard_start, rho_min,
                                     rho_max, inv_rmax, eps_sing, kinds, prm,
                                     wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad,
                                     k2, k3, cen, rr, d0, True)
        if nsub == 0 and entry_gap <= rho_min:
            entry_breach = 1
            break
        near_sing += ns
        rem = t_end - tl
        h = rem
        if rate * h > budget:
            h = budget / rate
        nsub += 1
        if nsub > max_sub:
            capped = 1
            h = rem
        half = 0.5 * h
        for i in range(n):
            tmp[i] = sg[i] + half * d0[i]
        _, ns, _g = _deriv(tl + half, tmp, eta, k1, t_c, t_guard_start, rho_min,
                           rho_max, inv_rmax, eps_sing, kinds, prm, wp_off, wp_t,
                           wp_p, ovr_mask, ovr_pos, rad, k2, k3, cen, rr, d1, False)
        near_sing += ns
        for i in range(n):
            tmp[i] = sg[i] + half * d1[i]
        _, ns, _g = _deriv(tl + half, tmp, eta, k1, t_c, t_guard_start, rho_min,
                           rho_max, inv_rmax, eps_sing, kinds, prm, wp_off, wp_t,
                           wp_p, ovr_mask, ovr_pos, rad, k2, k3, cen, rr, d2, False)
        near_sing += ns
        for i in range(n):
            tmp[i] = sg[i] + h * d2[i]
        _, ns, _g = _deriv(tl + h, tmp, eta, k1, t_c, t_guard_start, rho_min,
                           rho_max, inv_rmax, eps_sing, kinds, prm, wp_off, wp_t,
                           wp_p, ovr_mask, ovr_pos, rad, k2, k3, cen, rr, d3, False)
        near_sing += ns
        for i in range(n):
            sg[i] = sg[i] + (h / 6.0) * (d0[i] + 2.0 * d1[i] + 2.0 * d2[i] + d3[i])
        if h >= rem:
            tl = t_end
        else:
            tl = tl + h

    disp = 0.0
    for i in range(n):
        dd = sg[i] - sigma[i]
        disp += dd * dd
    if disp > max_disp * max_disp:
        blowup = 1

    _eval_obstacles(t_end, kinds, prm, wp_off, wp_t, wp_p, ovr_mask, ovr_pos, rad,
                    cen, rr)
    min_gap = np.inf
    arg_min = -1
    min_sensed = np.inf
    for j in range(n_o):
        d2s = 0.0
        for i in range(n):
            dd = sg[i] - cen[j, i]
            d2s += dd * dd
        gap = np.sqrt(d2s) - rr[j]
        out_gaps[j] = gap
        if gap < min_gap:
            min_gap = gap
            arg_min = j
        if gap <= sensing and gap < min_sensed:
            min_sensed = gap

    if min_sensed == np.inf:
        d = np.inf
        rho = rho_max
    else:
        s = 0.0
        for j in range(n_o):
            if out_gaps[j] <= sensing:
                s += np.exp(-nu * (out_gaps[j] - min_sensed))
        d = min_sensed - np.log(s) / nu
        m2 = d if d < rho_max else rho_max
        rho = m2 - np.log(np.exp(-nu * (rho_max - m2)) + np.exp(-nu * (d - m2))) / nu
    return rho, d, min_sensed, min_gap, arg_min, nsub, near_sing, capped, \
        entry_breach, blowup


@njit(cache=True)
def omni2d_step(x, u, w, dt, out):
    for i in range(x.shape[1]):
        k = u[i] + w[0, i]
        out[0, i] = x[0, i] + (dt / 6.0) * 6.0 * k


@njit(cache=True)
def quad3d_step(x, u, w, dt, drag, out):
    """RK4 with the same stage arithmetic as the generic plant stepper."""
    half = dt / 2.0
    for i in range(3):
        p = x[0, i]
        v = x[1, i]
        k1p = v + w[0, i]
        k1v = -drag * v * abs(v) + u[i] + w[1, i]
        v2 = v + half * k1v
        k2p = v2 + w[0, i]
        k2v = -drag * v2 * abs(v2) + u[i] + w[1, i]
        v3 = v + half * k2v
        k3p = v3 + w[0, i]
        k3v = -drag * v3 * abs(v3) + u[i] + w[1, i]
        v4 = v + dt * k3v
        k4p = v4 + w[0, i]
        k4v = -drag * v4 * abs(v4) + u[i] + w[1, i]
        out[0, i] = p + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        out[1, i] = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)


def pack_motions(specs, radius_profiles, dims, ws_min, ws_max):
    """Build the kernel's packed parameter arrays from motion specs."""
    n_o = len(specs)
    kinds = np.zeros(n_o, dtype=np.int64)
    prm = np.zeros((n_o, 16))
    wp_off = np.zeros(n_o + 1, dtype=np.int64)
    wp_t_parts = []
    wp_p_parts = []
    code = {"static": 0, "live": 0, "linear": 1, "bounce": 2, "sinusoid": 3,
            "waypoints": 4}
    total = 0
    for j, spec in enumerate(specs):
        p = spec.params
        kinds[j] = code[spec.kind]
        if spec.kind in ("static", "live"):
            prm[j, :dims] = np.asarray(p["position"], dtype=float)
        elif spec.kind == "linear":
            prm[j, :dims] = np.asarray(p["start"], dtype=float)
            prm[j, 3:3 + dims] = np.asarray(p["velocity"], dtype=float)
        elif spec.kind == "bounce":
            lo = np.asarray(p.get("min", ws_min), dtype=float)
            hi = np.asarray(p.get("max", ws_max), dtype=float)
            prm[j, :dims] = np.asarray(p["start"], dtype=float) - lo
            prm[j, 3:3 + dims] = np.asarray(p["velocity"], dtype=float)
            prm[j, 6:6 + dims] = lo
            prm[j, 9:9 + dims] = hi - lo
        elif spec.kind == "sinusoid":
            prm[j, :dims] = np.asarray(p["center"], dtype=float)
            prm[j, 12] = float(int(p["axis"]))
            prm[j, 13] = float(p["amplitude"])
            prm[j, 14] = float(p["omega"])
            prm[j, 15] = float(p.get("phase", 0.0))
        else:
            times = np.asarray(p["times"], dtype=float)
            pts = np.asarray(p["points"], dtype=float)
            wp_t_parts.append(times)
            wp_p_parts.append(pts)
            total += len(times)
        wp_off[j + 1] = total
    wp_t = np.concatenate(wp_t_parts) if wp_t_parts else np.zeros(0)
    wp_p = np.concatenate(wp_p_parts) if wp_p_parts else np.zeros((0, dims))
    rad = np.zeros((n_o, 4))
    for j, rp in enumerate(radius_profiles):
        rad[j] = (rp.base, rp.amplitude, rp.omega, rp.phase)
    return kinds, np.ascontiguousarray(prm), wp_off, wp_t, np.ascontiguousarray(wp_p), rad
