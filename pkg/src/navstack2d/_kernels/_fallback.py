"""Pure NumPy implementations of the hot kernels.

These define the reference semantics; the compiled extension in ``_core.pyx``
must produce the same numbers (same formulas, same operation order). Shared
conventions:

* costs: FREE = 0, OCCUPIED = 254, inflated strictly inside (0, 254)
* TEB parameter layout and residual block order are documented on
  :func:`teb_residuals`
* obstacle rows are ``[type, x1, y1, x2, y2, r]`` with type 0 point,
  1 circle, 2 segment, 3 polygon edge (directed, counter-clockwise);
  rows of one obstacle are contiguous and indexed by ``group_starts``.
"""

from __future__ import annotations

import math

import numpy as np

OCCUPIED = 254

# params vector indices for teb_residuals / teb_jacobian
P_VMAX, P_WMAX, P_AMAX, P_WDMAX, P_RHOMIN, P_RADIUS, P_KAPPA, P_SH, P_SV, P_SA, P_SO = range(11)

_EPS_T = 1e-9


def inflate_costs(cells: np.ndarray, resolution: float, inflation_radius: float) -> np.ndarray:
    """Linear-decay inflation around occupied cells.

    Non-occupied cells whose center lies within `inflation_radius` of the
    nearest occupied cell center get cost round(253 * (1 - d/R)) clamped to
    >= 1; cells beyond the radius keep their input value.
    """
    out = cells.copy()
    occ = cells == OCCUPIED
    if not occ.any():
        return out
    from scipy.ndimage import distance_transform_edt

    d_cells = distance_transform_edt(~occ)
    d = d_cells * resolution
    within = (~occ) & (d <= inflation_radius)
    scaled = 253.0 * (1.0 - d[within] / inflation_radius)
    cost = np.floor(scaled + 0.5)
    out[within] = np.maximum(cost, 1.0).astype(np.uint8)
    return out


def raycast_scene(
    origin: np.ndarray,
    dirs: np.ndarray,
    cylinders: np.ndarray,
    boxes: np.ndarray,
    ground: bool,
    max_range: float,
) -> np.ndarray:
    """First-hit distance for each unit ray; inf when nothing is hit in range.

    ``cylinders`` rows are [cx, cy, r, h]; ``boxes`` rows are
    [xmin, ymin, xmax, ymax, h]. Shapes stand on the ground plane z = 0,
    lateral surfaces only (no top caps); the ground plane itself is a target
    when ``ground`` is true.
    """
    origin = np.asarray(origin, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    m = dirs.shape[0]
    best = np.full(m, np.inf)

    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]

    for cx, cy, r, h in np.asarray(cylinders, dtype=float).reshape(-1, 4):
        rx, ry = ox - cx, oy - cy
        a = dx * dx + dy * dy
        b = 2.0 * (rx * dx + ry * dy)
        c = rx * rx + ry * ry - r * r
        disc = b * b - 4.0 * a * c
        ok = (disc >= 0.0) & (a > 0.0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_near = np.where(ok, (-b - sq) / (2.0 * a), np.inf)
            t_far = np.where(ok, (-b + sq) / (2.0 * a), np.inf)
        for t in (t_near, t_far):
            z = oz + dz * t
            hit = ok & (t > _EPS_T) & (z >= 0.0) & (z <= h)
            best = np.where(hit & (t < best), t, best)

    for xmin, ymin, xmax, ymax, h in np.asarray(boxes, dtype=float).reshape(-1, 5):
        t_lo = np.full(m, -np.inf)
        t_hi = np.full(m, np.inf)
        for o, d, lo, hi in ((ox, dx, xmin, xmax), (oy, dy, ymin, ymax), (oz, dz, 0.0, h)):
            with np.errstate(divide="ignore"):
                inv = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), np.inf)
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
            parallel_out = (d == 0.0) & ((o < lo) | (o > hi))
            t_lo = np.where(d != 0.0, np.maximum(t_lo, np.minimum(t1, t2)), t_lo)
            t_hi = np.where(d != 0.0, np.minimum(t_hi, np.maximum(t1, t2)), t_hi)
            t_hi = np.where(parallel_out, -np.inf, t_hi)
        valid = t_hi >= np.maximum(t_lo, _EPS_T)
        t = np.where(t_lo > _EPS_T, t_lo, t_hi)
        hit = valid & (t > _EPS_T)
        best = np.where(hit & (t < best), t, best)

    if ground:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dz < -1e-12, -oz / dz, np.inf)
        hit = t > _EPS_T
        best = np.where(hit & (t < best), t, best)

    return np.where(best <= max_range, best, np.inf)


def _wrap(a: np.ndarray) -> np.ndarray:
    out = np.fmod(a, 2.0 * math.pi)
    out = np.where(out <= -math.pi, out + 2.0 * math.pi, out)
    out = np.where(out > math.pi, out - 2.0 * math.pi, out)
    return out


def _obstacle_group_dists(px: np.ndarray, py: np.ndarray, obs_data, group_starts) -> np.ndarray:
    """Signed distance from query points (...,) to each obstacle group -> (..., G)."""
    obs = np.asarray(obs_data, dtype=float).reshape(-1, 6)
    starts = np.asarray(group_starts, dtype=np.int64)
    n_groups = len(starts)
    p = np.stack([px, py], axis=-1)[..., None, :]  # (..., 1, 2)

    typ = obs[:, 0]
    a = obs[:, 1:3]
    b = obs[:, 3:5]
    r = obs[:, 5]

    diff_a = p - a  # (..., R, 2)
    da = np.sqrt(np.sum(diff_a * diff_a, axis=-1))

    ab = b - a
    ab_len2 = np.sum(ab * ab, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.clip(np.sum(diff_a * ab, axis=-1) / np.where(ab_len2 > 0, ab_len2, 1.0), 0.0, 1.0)
    closest = a + t[..., None] * ab
    dseg = np.sqrt(np.sum((p - closest) ** 2, axis=-1))

    dist_rows = np.where(typ == 0, da, np.where(typ == 1, da - r, dseg))
    # Cross product of the directed edge with the point offset; >= 0 for all
    # edges of a CCW polygon means the point is inside.
    cross = ab[:, 0] * diff_a[..., 1] - ab[:, 1] * diff_a[..., 0]
    cross = np.where(typ == 3, cross, np.inf)

    gd = np.minimum.reduceat(dist_rows, starts, axis=-1)
    gcross = np.minimum.reduceat(cross, starts, axis=-1)
    is_poly = np.minimum.reduceat(typ == 3, starts, axis=-1).astype(bool)
    inside = is_poly & (gcross >= 0.0)
    gd = np.where(inside, -gd, gd)
    assert gd.shape[-1] == n_groups
    return gd


def teb_residuals(poses, dts, obs_data, group_starts, params) -> np.ndarray:
    """Stacked least-squares residual vector of the band objective.

    With n poses, K = n-1 intervals and G obstacle groups the blocks are,
    in order:

    1. time residuals            dT_k                     (K)
    2. non-holonomic residual    sqrt(sig_h) * h_k,z      (K)
    3. linear velocity bound     sqrt(sig_v) * min(0, v_max - |v_k|)   (K)
    4. angular velocity bound    sqrt(sig_v) * min(0, w_max - |w_k|)   (K)
    5. linear acceleration bound sqrt(sig_a) * min(0, a_max - |a_k|)   (K-1)
    6. angular accel bound       sqrt(sig_a) * min(0, wd_max - |wd_k|) (K-1)
    7. obstacle clearance        sqrt(sig_o) * min(0, rho - rho_min)   (K*G)

    so that sum(r**2) equals the penalty objective. Block 2 keeps only the z
    component of the cross product (x and y are identically zero for planar
    poses). Block 7 runs over poses s_1..s_{n-1}, k-major.
    """
    r, _ = _residuals_batch(
        np.asarray(poses, dtype=float)[None, :, :],
        np.asarray(dts, dtype=float)[None, :],
        obs_data,
        group_starts,
        params,
    )
    return r[0]


def _residuals_batch(poses_b, dts_b, obs_data, group_starts, params):
    p = np.asarray(params, dtype=float)
    v_max, w_max, a_max, wd_max = p[P_VMAX], p[P_WMAX], p[P_AMAX], p[P_WDMAX]
    rho_min, radius, kappa = p[P_RHOMIN], p[P_RADIUS], p[P_KAPPA]
    sq_h, sq_v, sq_a, sq_o = math.sqrt(p[P_SH]), math.sqrt(p[P_SV]), math.sqrt(p[P_SA]), math.sqrt(p[P_SO])

    B, n, _ = poses_b.shape
    K = n - 1
    G = len(group_starts) if len(np.asarray(obs_data).reshape(-1, 6)) else 0

    x = poses_b[:, :, 0]
    y = poses_b[:, :, 1]
    beta = poses_b[:, :, 2]
    dx = x[:, 1:] - x[:, :-1]
    dy = y[:, 1:] - y[:, :-1]
    dist = np.sqrt(dx * dx + dy * dy)
    cosb = np.cos(beta)
    sinb = np.sin(beta)

    h_z = (cosb[:, :-1] + cosb[:, 1:]) * dy - (sinb[:, :-1] + sinb[:, 1:]) * dx

    dot = cosb[:, :-1] * dx + sinb[:, :-1] * dy
    gamma = kappa * dot / (1.0 + np.abs(kappa * dot))
    v = dist * gamma / dts_b
    w = _wrap(beta[:, 1:] - beta[:, :-1]) / dts_b

    if K >= 2:
        acc = 2.0 * (v[:, 1:] - v[:, :-1]) / (dts_b[:, :-1] + dts_b[:, 1:])
        wdot = 2.0 * (w[:, 1:] - w[:, :-1]) / (dts_b[:, :-1] + dts_b[:, 1:])
    else:
        acc = np.empty((B, 0))
        wdot = np.empty((B, 0))

    blocks = [
        dts_b,
        sq_h * h_z,
        sq_v * np.minimum(0.0, v_max - np.abs(v)),
        sq_v * np.minimum(0.0, w_max - np.abs(w)),
        sq_a * np.minimum(0.0, a_max - np.abs(acc)),
        sq_a * np.minimum(0.0, wd_max - np.abs(wdot)),
    ]
    if G:
        gd = _obstacle_group_dists(x[:, :K], y[:, :K], obs_data, group_starts)
        rho = gd - radius
        blocks.append((sq_o * np.minimum(0.0, rho - rho_min)).reshape(B, K * G))
    m = 4 * K + 2 * max(K - 1, 0) + K * G
    return np.concatenate(blocks, axis=1), m


def teb_residual_size(n: int, n_groups: int) -> int:
    K = n - 1
    return 4 * K + 2 * max(K - 1, 0) + K * n_groups


def teb_block_slices(n: int, n_groups: int) -> dict[str, slice]:
    """Index ranges of each residual block in :func:`teb_residuals` output."""
    K = n - 1
    A = max(K - 1, 0)
    edges = np.cumsum([0, K, K, K, K, A, A, K * n_groups])
    names = ["time", "equality", "velocity", "omega", "acceleration", "omega_dot", "obstacle"]
    return {name: slice(int(edges[i]), int(edges[i + 1])) for i, name in enumerate(names)}


def teb_jacobian(poses, dts, obs_data, group_starts, params, fd_step: float) -> np.ndarray:
    """Central-difference Jacobian of :func:`teb_residuals` w.r.t. the free
    variables [x_2, y_2, b_2, ..., x_{n-1}, y_{n-1}, b_{n-1}, dT_1..dT_K]."""
    poses = np.asarray(poses, dtype=float)
    dts = np.asarray(dts, dtype=float)
    n = poses.shape[0]
    K = n - 1
    n_free = 3 * (n - 2) + K
    B = 2 * n_free

    poses_b = np.repeat(poses[None, :, :], B, axis=0)
    dts_b = np.repeat(dts[None, :], B, axis=0)
    for i in range(n - 2):
        for j in range(3):
            var = 3 * i + j
            poses_b[2 * var, i + 1, j] += fd_step
            poses_b[2 * var + 1, i + 1, j] -= fd_step
    base = 3 * (n - 2)
    for k in range(K):
        var = base + k
        dts_b[2 * var, k] += fd_step
        dts_b[2 * var + 1, k] -= fd_step

    r, _ = _residuals_batch(poses_b, dts_b, obs_data, group_starts, params)
    J = (r[0::2, :] - r[1::2, :]).T / (2.0 * fd_step)
    return np.ascontiguousarray(J)
