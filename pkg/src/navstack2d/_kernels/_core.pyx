# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: costmap inflation, ray casting, band residuals.

Must compute the same values as ``_fallback`` (same formulas, same order);
the equivalence tests in tests/test_kernels.py hold both to that.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, floor, fmod, sqrt, sin, cos, atan2

cnp.import_array()

cdef double PI = 3.141592653589793238462643383279502884
cdef int OCC = 254
cdef double EPS_T = 1e-9

# params vector layout (matches _fallback)
cdef enum:
    P_VMAX, P_WMAX, P_AMAX, P_WDMAX, P_RHOMIN, P_RADIUS, P_KAPPA, P_SH, P_SV, P_SA, P_SO


def inflate_costs(cnp.uint8_t[:, :] cells, double resolution, double inflation_radius):
    cdef int h = cells.shape[0]
    cdef int w = cells.shape[1]
    out_arr = np.asarray(cells).copy()
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef int reach = <int>(inflation_radius / resolution) + 1
    cdef int r, c, rr, cc, r0, r1, c0, c1, best2, d2
    cdef double d, scaled
    cdef long cost
    cdef bint any_occ = False
    for r in range(h):
        for c in range(w):
            if cells[r, c] == OCC:
                any_occ = True
                break
        if any_occ:
            break
    if not any_occ:
        return out_arr
    for r in range(h):
        for c in range(w):
            if cells[r, c] == OCC:
                continue
            r0 = r - reach if r - reach > 0 else 0
            r1 = r + reach if r + reach < h - 1 else h - 1
            c0 = c - reach if c - reach > 0 else 0
            c1 = c + reach if c + reach < w - 1 else w - 1
            best2 = -1
            for rr in range(r0, r1 + 1):
                for cc in range(c0, c1 + 1):
                    if cells[rr, cc] == OCC:
                        d2 = (rr - r) * (rr - r) + (cc - c) * (cc - c)
                        if best2 < 0 or d2 < best2:
                            best2 = d2
            if best2 < 0:
                continue
            d = sqrt(<double>best2) * resolution
            if d <= inflation_radius:
                scaled = 253.0 * (1.0 - d / inflation_radius)
                cost = <long>floor(scaled + 0.5)
                if cost < 1:
                    cost = 1
                out[r, c] = <cnp.uint8_t>cost
    return out_arr


def raycast_scene(origin, dirs, cylinders, boxes, bint ground, double max_range):
    cdef cnp.float64_t[:] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef cnp.float64_t[:, :] d = np.ascontiguousarray(dirs, dtype=np.float64)
    cdef cnp.float64_t[:, :] cyl = np.ascontiguousarray(cylinders, dtype=np.float64).reshape(-1, 4)
    cdef cnp.float64_t[:, :] box = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 5)
    cdef int m = d.shape[0]
    out_arr = np.full(m, np.inf)
    cdef cnp.float64_t[:] out = out_arr
    cdef int i, k, axis
    cdef double ox = o[0], oy = o[1], oz = o[2]
    cdef double dx, dy, dz, best, rx, ry, a, b, c_, disc, sq, t, z
    cdef double t_lo, t_hi, t1, t2, lo, hi, oo, dd, tn, tf

    for i in range(m):
        dx = d[i, 0]; dy = d[i, 1]; dz = d[i, 2]
        best = INFINITY

        for k in range(cyl.shape[0]):
            rx = ox - cyl[k, 0]
            ry = oy - cyl[k, 1]
            a = dx * dx + dy * dy
            if a <= 0.0:
                continue
            b = 2.0 * (rx * dx + ry * dy)
            c_ = rx * rx + ry * ry - cyl[k, 2] * cyl[k, 2]
            disc = b * b - 4.0 * a * c_
            if disc < 0.0:
                continue
            sq = sqrt(disc)
            tn = (-b - sq) / (2.0 * a)
            tf = (-b + sq) / (2.0 * a)
            t = tn
            if t > EPS_T:
                z = oz + dz * t
                if 0.0 <= z <= cyl[k, 3] and t < best:
                    best = t
            t = tf
            if t > EPS_T:
                z = oz + dz * t
                if 0.0 <= z <= cyl[k, 3] and t < best:
                    best = t

        for k in range(box.shape[0]):
            t_lo = -INFINITY
            t_hi = INFINITY
            for axis in range(3):
                if axis == 0:
                    oo = ox; dd = dx; lo = box[k, 0]; hi = box[k, 2]
                elif axis == 1:
                    oo = oy; dd = dy; lo = box[k, 1]; hi = box[k, 3]
                else:
                    oo = oz; dd = dz; lo = 0.0; hi = box[k, 4]
                if dd != 0.0:
                    t1 = (lo - oo) / dd
                    t2 = (hi - oo) / dd
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > t_lo:
                        t_lo = t1
                    if t2 < t_hi:
                        t_hi = t2
                elif oo < lo or oo > hi:
                    t_hi = -INFINITY
            t = t_lo if t_lo > EPS_T else t_hi
            if t_hi >= (t_lo if t_lo > EPS_T else EPS_T) and t > EPS_T and t < best:
                best = t

        if ground and dz < -1e-12:
            t = -oz / dz
            if t > EPS_T and t < best:
                best = t

        out[i] = best if best <= max_range else INFINITY
    return out_arr


cdef double _wrap(double a) nogil:
    cdef double out = fmod(a, 2.0 * PI)
    if out <= -PI:
        out += 2.0 * PI
    elif out > PI:
        out -= 2.0 * PI
    return out


cdef int _fill_residuals(
    cnp.float64_t[:, :] poses,
    cnp.float64_t[:] dts,
    cnp.float64_t[:, :] obs,
    cnp.int64_t[:] starts,
    cnp.float64_t[:] p,
    cnp.float64_t[:] v_buf,
    cnp.float64_t[:] w_buf,
    cnp.float64_t[:] r,
) nogil:
    """Writes the residual vector into r; returns its length."""
    cdef int n = poses.shape[0]
    cdef int K = n - 1
    cdef int G = starts.shape[0]
    cdef int R = obs.shape[0]
    cdef double sq_h = sqrt(p[P_SH])
    cdef double sq_v = sqrt(p[P_SV])
    cdef double sq_a = sqrt(p[P_SA])
    cdef double sq_o = sqrt(p[P_SO])
    cdef double kappa = p[P_KAPPA]
    cdef int k, g, i, row_end
    cdef double dx, dy, dist, cb0, sb0, cb1, sb1, h_z, dot, gamma, val
    cdef double acc, wdot, px, py, gd, typ, ax, ay, bx, by, rad
    cdef double vx, vy, wx, wy, denom, tpar, ddx, ddy, dseg, cross, gcross
    cdef bint is_poly
    cdef int base_dt = 0
    cdef int base_h = K
    cdef int base_v = 2 * K
    cdef int base_w = 3 * K
    cdef int base_a = 4 * K
    cdef int base_wd = 4 * K + (K - 1 if K > 1 else 0)
    cdef int base_o = 4 * K + 2 * (K - 1 if K > 1 else 0)

    for k in range(K):
        r[base_dt + k] = dts[k]
        dx = poses[k + 1, 0] - poses[k, 0]
        dy = poses[k + 1, 1] - poses[k, 1]
        dist = sqrt(dx * dx + dy * dy)
        cb0 = cos(poses[k, 2]); sb0 = sin(poses[k, 2])
        cb1 = cos(poses[k + 1, 2]); sb1 = sin(poses[k + 1, 2])
        h_z = (cb0 + cb1) * dy - (sb0 + sb1) * dx
        r[base_h + k] = sq_h * h_z
        dot = cb0 * dx + sb0 * dy
        gamma = kappa * dot / (1.0 + fabs(kappa * dot))
        v_buf[k] = dist * gamma / dts[k]
        w_buf[k] = _wrap(poses[k + 1, 2] - poses[k, 2]) / dts[k]
        val = p[P_VMAX] - fabs(v_buf[k])
        r[base_v + k] = sq_v * (val if val < 0.0 else 0.0)
        val = p[P_WMAX] - fabs(w_buf[k])
        r[base_w + k] = sq_v * (val if val < 0.0 else 0.0)

    for k in range(K - 1):
        acc = 2.0 * (v_buf[k + 1] - v_buf[k]) / (dts[k] + dts[k + 1])
        wdot = 2.0 * (w_buf[k + 1] - w_buf[k]) / (dts[k] + dts[k + 1])
        val = p[P_AMAX] - fabs(acc)
        r[base_a + k] = sq_a * (val if val < 0.0 else 0.0)
        val = p[P_WDMAX] - fabs(wdot)
        r[base_wd + k] = sq_a * (val if val < 0.0 else 0.0)

    for k in range(K):
        px = poses[k, 0]
        py = poses[k, 1]
        for g in range(G):
            row_end = starts[g + 1] if g + 1 < G else R
            gd = INFINITY
            gcross = INFINITY
            is_poly = True
            for i in range(starts[g], row_end):
                typ = obs[i, 0]
                ax = obs[i, 1]; ay = obs[i, 2]
                if typ == 0.0:
                    ddx = px - ax; ddy = py - ay
                    dseg = sqrt(ddx * ddx + ddy * ddy)
                    is_poly = False
                elif typ == 1.0:
                    ddx = px - ax; ddy = py - ay
                    dseg = sqrt(ddx * ddx + ddy * ddy) - obs[i, 5]
                    is_poly = False
                else:
                    bx = obs[i, 3]; by = obs[i, 4]
                    vx = bx - ax; vy = by - ay
                    wx = px - ax; wy = py - ay
                    denom = vx * vx + vy * vy
                    tpar = 0.0 if denom <= 0.0 else (wx * vx + wy * vy) / denom
                    if tpar < 0.0:
                        tpar = 0.0
                    elif tpar > 1.0:
                        tpar = 1.0
                    ddx = px - (ax + tpar * vx)
                    ddy = py - (ay + tpar * vy)
                    dseg = sqrt(ddx * ddx + ddy * ddy)
                    if typ == 3.0:
                        cross = vx * wy - vy * wx
                        if cross < gcross:
                            gcross = cross
                    else:
                        is_poly = False
                if dseg < gd:
                    gd = dseg
            if is_poly and gcross >= 0.0:
                gd = -gd
            val = (gd - p[P_RADIUS]) - p[P_RHOMIN]
            r[base_o + k * G + g] = sq_o * (val if val < 0.0 else 0.0)

    return base_o + K * G


def teb_residuals(poses, dts, obs_data, group_starts, params):
    cdef cnp.float64_t[:, :] P = np.ascontiguousarray(poses, dtype=np.float64)
    cdef cnp.float64_t[:] D = np.ascontiguousarray(dts, dtype=np.float64)
    cdef cnp.float64_t[:, :] O = np.ascontiguousarray(obs_data, dtype=np.float64).reshape(-1, 6)
    cdef cnp.int64_t[:] S = np.ascontiguousarray(group_starts, dtype=np.int64)
    cdef cnp.float64_t[:] PR = np.ascontiguousarray(params, dtype=np.float64)
    cdef int n = P.shape[0]
    cdef int K = n - 1
    cdef int G = S.shape[0]
    cdef int m = 4 * K + 2 * (K - 1 if K > 1 else 0) + K * G
    out_arr = np.empty(m)
    cdef cnp.float64_t[:] out = out_arr
    v_buf_arr = np.empty(K)
    w_buf_arr = np.empty(K)
    cdef cnp.float64_t[:] v_buf = v_buf_arr
    cdef cnp.float64_t[:] w_buf = w_buf_arr
    _fill_residuals(P, D, O, S, PR, v_buf, w_buf, out)
    return out_arr


def teb_jacobian(poses, dts, obs_data, group_starts, params, double fd_step):
    cdef cnp.float64_t[:, :] P0 = np.ascontiguousarray(poses, dtype=np.float64)
    cdef cnp.float64_t[:] D0 = np.ascontiguousarray(dts, dtype=np.float64)
    cdef cnp.float64_t[:, :] O = np.ascontiguousarray(obs_data, dtype=np.float64).reshape(-1, 6)
    cdef cnp.int64_t[:] S = np.ascontiguousarray(group_starts, dtype=np.int64)
    cdef cnp.float64_t[:] PR = np.ascontiguousarray(params, dtype=np.float64)
    cdef int n = P0.shape[0]
    cdef int K = n - 1
    cdef int G = S.shape[0]
    cdef int m = 4 * K + 2 * (K - 1 if K > 1 else 0) + K * G
    cdef int n_interior = n - 2
    cdef int n_free = 3 * n_interior + K

    J_arr = np.empty((m, n_free))
    cdef cnp.float64_t[:, :] J = J_arr
    work_p = np.array(np.asarray(P0), copy=True)
    work_d = np.array(np.asarray(D0), copy=True)
    cdef cnp.float64_t[:, :] WP = work_p
    cdef cnp.float64_t[:] WD = work_d
    r_plus_arr = np.empty(m)
    r_minus_arr = np.empty(m)
    cdef cnp.float64_t[:] r_plus = r_plus_arr
    cdef cnp.float64_t[:] r_minus = r_minus_arr
    v_buf_arr = np.empty(K)
    w_buf_arr = np.empty(K)
    cdef cnp.float64_t[:] v_buf = v_buf_arr
    cdef cnp.float64_t[:] w_buf = w_buf_arr

    cdef int var, i, j, row
    cdef double saved
    with nogil:
        for i in range(n_interior):
            for j in range(3):
                var = 3 * i + j
                saved = WP[i + 1, j]
                WP[i + 1, j] = saved + fd_step
                _fill_residuals(WP, WD, O, S, PR, v_buf, w_buf, r_plus)
                WP[i + 1, j] = saved - fd_step
                _fill_residuals(WP, WD, O, S, PR, v_buf, w_buf, r_minus)
                WP[i + 1, j] = saved
                for row in range(m):
                    J[row, var] = (r_plus[row] - r_minus[row]) / (2.0 * fd_step)
        for i in range(K):
            var = 3 * n_interior + i
            saved = WD[i]
            WD[i] = saved + fd_step
            _fill_residuals(WP, WD, O, S, PR, v_buf, w_buf, r_plus)
            WD[i] = saved - fd_step
            _fill_residuals(WP, WD, O, S, PR, v_buf, w_buf, r_minus)
            WD[i] = saved
            for row in range(m):
                J[row, var] = (r_plus[row] - r_minus[row]) / (2.0 * fd_step)
    return J_arr
