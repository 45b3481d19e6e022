"""Scan-to-scan motion estimation from feature correspondences.

The previous sweep would normally be motion-compensated to the new sweep's
timestamp before matching; the simulator emits instantaneous sweeps, so that
projection hook is the identity here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateCorrespondenceError, DegenerateGeometryError
from ..geometry import Pose2, RigidTransform3, rotvec_to_matrix
from ..optim import levenberg_marquardt
from .features import FeatureSet, Scan, extract_features

_DEGENERACY_EPS = 1e-9


def point_to_line_distance(p, j, l) -> float:
    """Distance from p to the line through j and l."""
    p, j, l = (np.asarray(v, dtype=float) for v in (p, j, l))
    denom = float(np.linalg.norm(j - l))
    if denom < _DEGENERACY_EPS:
        raise DegenerateCorrespondenceError("edge line endpoints coincide")
    return float(np.linalg.norm(np.cross(p - j, p - l)) / denom)


def point_to_plane_distance(p, j, l, m) -> float:
    """Distance from p to the plane of the patch (j, l, m)."""
    p, j, l, m = (np.asarray(v, dtype=float) for v in (p, j, l, m))
    normal = np.cross(j - l, j - m)
    area = float(np.linalg.norm(normal))
    if area < _DEGENERACY_EPS:
        raise DegenerateCorrespondenceError("planar patch points are collinear")
    return float(abs((p - j) @ normal) / area)


@dataclass(frozen=True)
class EdgeCorrespondence:
    p: np.ndarray
    j: np.ndarray
    l: np.ndarray


@dataclass(frozen=True)
class PlanarCorrespondence:
    p: np.ndarray
    j: np.ndarray
    l: np.ndarray
    m: np.ndarray


def project_sweep(scan: Scan) -> Scan:
    """Motion-distortion reprojection hook; identity for undistorted sweeps."""
    return scan


def find_correspondences(
    features: FeatureSet,
    prev: Scan,
    gate: float = 0.5,
    prev_features: FeatureSet | None = None,
    init: RigidTransform3 | None = None,
) -> list[EdgeCorrespondence | PlanarCorrespondence]:
    """Match new-sweep features against the previous sweep's feature sets.

    An edge feature pairs its nearest previous edge point with the nearest
    previous edge point on an adjacent ring (a line); a planar feature takes
    its three nearest previous planar points that are not collinear (a
    patch). Matches whose distances exceed the gate are dropped.

    `init` pre-aligns the query points for the nearest-neighbor search (the
    stored feature points stay raw): under fast rotation the features move
    farther between sweeps than the gate allows, and matching would collapse
    without the motion prior.
    """
    if prev_features is None:
        prev_features = extract_features(prev)
    if init is None:
        init = RigidTransform3.identity()
    corrs: list[EdgeCorrespondence | PlanarCorrespondence] = []

    if prev_features.edges and features.edges:
        epts = np.array([f.point for f in prev_features.edges])
        erings = np.array([f.ring for f in prev_features.edges])
        etree = cKDTree(epts)
        ring_trees: dict[int, tuple[cKDTree, np.ndarray]] = {}
        for ring_id in np.unique(erings):
            sel = epts[erings == ring_id]
            ring_trees[int(ring_id)] = (cKDTree(sel), sel)

        queries = init.apply(np.array([f.point for f in features.edges]))
        d_js, idx_js = etree.query(queries)
        for feat, q, d_j, idx_j in zip(features.edges, queries, d_js, idx_js):
            if d_j > gate:
                continue
            j = epts[idx_j]
            ring_j = int(erings[idx_j])
            best_l = None
            best_d = math.inf
            for adj in (ring_j - 1, ring_j + 1):
                entry = ring_trees.get(adj)
                if entry is None:
                    continue
                d_l, idx_l = entry[0].query(q)
                if d_l < best_d:
                    best_d = d_l
                    best_l = entry[1][idx_l]
            if best_l is None or best_d > gate:
                continue
            if np.linalg.norm(j - best_l) < _DEGENERACY_EPS:
                continue
            corrs.append(EdgeCorrespondence(feat.point, j, best_l))

    if prev_features.planars and features.planars:
        ppts = np.array([f.point for f in prev_features.planars])
        ptree = cKDTree(ppts)
        k_query = min(8, len(ppts))
        struct_gate = 2.0 * gate  # patch support points may sit a bit farther
        queries = init.apply(np.array([f.point for f in features.planars]))
        d_all, idx_all = ptree.query(queries, k=k_query)
        d_all = d_all.reshape(len(queries), -1)
        idx_all = idx_all.reshape(len(queries), -1)
        for fi, feat in enumerate(features.planars):
            if d_all[fi, 0] > gate:
                continue
            candidates = ppts[idx_all[fi][d_all[fi] <= struct_gate]]
            support = _connected_support(candidates)
            # Three points span a plane trivially; validation needs >= 4.
            if len(support) < 4 or not _planar_support(support):
                continue
            j = support[0]
            rel = support[1:] - j
            lens = np.sqrt((rel * rel).sum(axis=1))
            li = int(np.argmax(lens > _DEGENERACY_EPS)) if (lens > _DEGENERACY_EPS).any() else -1
            if li < 0:
                continue
            l = support[1 + li]
            lj = j - l
            cross = np.cross(-rel[li + 1 :], lj)
            areas = np.sqrt((cross * cross).sum(axis=1))
            good = areas > 0.05 * np.linalg.norm(lj) * lens[li + 1 :]
            if not good.any():
                continue
            m = support[2 + li + int(np.argmax(good))]
            corrs.append(PlanarCorrespondence(feat.point, j, l, m))

    return corrs


def _connected_support(candidates: np.ndarray, max_gap: float = 0.3) -> np.ndarray:
    """Keep the nearest candidate's connected component (grown by `max_gap`),
    so a neighbor set straddling two separate surfaces gets trimmed to one."""
    n = len(candidates)
    diff = candidates[:, None, :] - candidates[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    kept = np.zeros(n, dtype=bool)
    kept[0] = True
    for i in range(1, n):
        if dist[i, kept].min() <= max_gap:
            kept[i] = True
    return candidates[kept]


def _planar_support(points: np.ndarray, flat_tol: float = 0.02, spread_min: float = 0.02) -> bool:
    """True when the set is flat (best-fit plane residual below `flat_tol`)
    and genuinely two-dimensional (a line of points cannot define a patch)."""
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    scale = math.sqrt(len(points))
    return float(sv[2]) / scale <= flat_tol and float(sv[1]) / scale >= spread_min


def _stack(corrs):
    edges = [c for c in corrs if isinstance(c, EdgeCorrespondence)]
    planars = [c for c in corrs if isinstance(c, PlanarCorrespondence)]
    ep = np.array([c.p for c in edges]).reshape(-1, 3)
    ej = np.array([c.j for c in edges]).reshape(-1, 3)
    el = np.array([c.l for c in edges]).reshape(-1, 3)
    pp = np.array([c.p for c in planars]).reshape(-1, 3)
    pj = np.array([c.j for c in planars]).reshape(-1, 3)
    normals = np.empty((len(planars), 3))
    for i, c in enumerate(planars):
        nrm = np.cross(c.j - c.l, c.j - c.m)
        normals[i] = nrm / np.linalg.norm(nrm)
    return ep, ej, el, pp, pj, normals


def _constraint_directions(ep, ej, el, normals, x0) -> np.ndarray:
    """Unit directions along which the correspondences constrain translation."""
    dirs = [normals]
    if len(ep):
        line = ej - el
        line = line / np.linalg.norm(line, axis=1, keepdims=True)
        offset = ep - ej
        perp = offset - (offset * line).sum(axis=1, keepdims=True) * line
        norms = np.linalg.norm(perp, axis=1, keepdims=True)
        good = norms[:, 0] > 1e-12
        dirs.append(perp[good] / norms[good])
    return np.vstack([d for d in dirs if len(d)]) if dirs else np.empty((0, 3))


def motion_residuals(corrs, transform: RigidTransform3) -> np.ndarray:
    """Stacked correspondence distances at a given transform (edges first)."""
    ep, ej, el, pp, pj, normals = _stack(corrs)
    el_len = np.linalg.norm(ej - el, axis=1)
    out = []
    if len(ep):
        p = transform.apply(ep)
        out.append(_edge_dists(p, ej, el, el_len))
    if len(pp):
        p = transform.apply(pp)
        out.append(((p - pj) * normals).sum(axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def _edge_dists(p, ej, el, el_len):
    a = p - ej
    b = p - el
    cx = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    cy = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    cz = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return np.sqrt(cx * cx + cy * cy + cz * cz) / el_len


def estimate_motion(
    corrs,
    init: RigidTransform3 | None = None,
    max_iter: int = 25,
    edge_weight: float = 0.3,
) -> RigidTransform3:
    """Solve for the rigid transform mapping new-sweep points onto their
    previous-sweep correspondences.

    Damped Gauss-Newton with analytic Jacobians; rotation updates are applied
    as left-multiplied increments, which keeps the chart singularity-free.
    Stops on the iteration budget, a step below 1e-8, or a cost decrease
    below 1e-10; the step-size bound keeps directions the correspondences
    barely observe from drifting away. Edge rows enter the stacked system
    down-weighted: edge anchor points quantize on the scan grid while planar
    patches are grid-independent, so their noise levels differ by an order
    of magnitude.
    """
    if len(corrs) < 6:
        raise DegenerateGeometryError(f"need >= 6 correspondences, got {len(corrs)}")
    ep, ej, el, pp, pj, normals = _stack(corrs)
    el_len = np.linalg.norm(ej - el, axis=1)
    el_dir = ej - el

    dirs = _constraint_directions(ep, ej, el, normals, None)
    if len(dirs) < 2:
        raise DegenerateGeometryError("correspondences span fewer than 2 directions")
    sv = np.linalg.svd(dirs, compute_uv=False)
    if sv[1] < 1e-6:
        raise DegenerateGeometryError("correspondence directions are parallel")

    if init is None:
        init = RigidTransform3.identity()
    R = init.rotation.copy()
    t = init.translation.copy()
    R_init_T = init.rotation.T
    t_init = init.translation.copy()
    # Small prior anchoring the solution at the warm start: directions the
    # correspondences do not observe (e.g. height in a planar world) must
    # stay put instead of wandering down numerical noise gradients. The
    # weight is orders of magnitude below the data terms.
    mu = 1e-3
    n_e = len(ep)
    n_h = len(pp)

    def prior_delta(Rm, tv) -> np.ndarray:
        from ..geometry import matrix_to_rotvec

        return np.concatenate([tv - t_init, matrix_to_rotvec(Rm @ R_init_T)])

    def evaluate(Rm, tv):
        rows = np.empty(n_e + n_h)
        grads = np.empty((n_e + n_h, 3))
        pts = np.empty((n_e + n_h, 3))
        if n_e:
            rp = ep @ Rm.T
            p = rp + tv
            a = p - ej
            b = p - el
            w = np.cross(a, b)
            nw = np.linalg.norm(w, axis=1)
            nw_safe = np.where(nw > 1e-12, nw, 1.0)
            rows[:n_e] = edge_weight * (nw / el_len)
            # d r / d p' = ((j - l) x w_hat) / |j - l|
            grads[:n_e] = edge_weight * np.cross(el_dir, w / nw_safe[:, None]) / el_len[:, None]
            pts[:n_e] = rp
        if n_h:
            rp = pp @ Rm.T
            p = rp + tv
            rows[n_e:] = ((p - pj) * normals).sum(axis=1)
            grads[n_e:] = normals
            pts[n_e:] = rp
        # d p' / d theta = -skew(R p): rotation rows are (R p) x grad
        J = np.empty((n_e + n_h, 6))
        J[:, :3] = grads
        J[:, 3:] = np.cross(pts, grads)
        return rows, J

    r, J = evaluate(R, t)
    delta = prior_delta(R, t)
    cost = float(r @ r) + mu * float(delta @ delta)
    lam = 1e-4
    for _ in range(max_iter):
        JTJ = J.T @ J + mu * np.eye(6)
        g = J.T @ r + mu * delta
        raw = np.diag(JTJ)
        diag = np.maximum(raw, max(1e-6 * float(raw.max(initial=0.0)), 1e-12))
        accepted = False
        for _retry in range(8):
            try:
                dx = np.linalg.solve(JTJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if float(np.linalg.norm(dx)) > 0.5:
                lam *= 10.0
                continue
            t_new = t + dx[:3]
            R_new = rotvec_to_matrix(dx[3:]) @ R
            r_new, J_new = evaluate(R_new, t_new)
            delta_new = prior_delta(R_new, t_new)
            cost_new = float(r_new @ r_new) + mu * float(delta_new @ delta_new)
            if np.isfinite(cost_new) and cost_new < cost:
                decrease = cost - cost_new
                step = float(np.linalg.norm(dx))
                R, t, r, J, cost, delta = R_new, t_new, r_new, J_new, cost_new, delta_new
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                if step < 1e-8 or decrease < 1e-10:
                    return RigidTransform3(R, t)
                break
            lam *= 10.0
        if not accepted:
            break
    return RigidTransform3(R, t)


@dataclass
class OdomState:
    """Accumulated odometry: world-from-sensor pose plus a velocity estimate."""

    pose: RigidTransform3 = field(default_factory=RigidTransform3.identity)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))  # vx, vy, vyaw
    last_scan: Scan | None = None
    stamp: float = 0.0

    def planar(self) -> Pose2:
        return self.pose.planar()


def accumulate(state: OdomState, step: RigidTransform3, stamp: float | None = None) -> OdomState:
    """Compose one scan-to-scan step onto the accumulated pose."""
    new_pose = state.pose.compose(step)
    if stamp is not None and stamp > state.stamp:
        dt = stamp - state.stamp
        a, b = state.pose.planar(), new_pose.planar()
        from ..geometry import wrap_angle

        vel = np.array([(b.x - a.x) / dt, (b.y - a.y) / dt, wrap_angle(b.beta - a.beta) / dt])
    else:
        vel = state.velocity
    return OdomState(new_pose, vel, state.last_scan, stamp if stamp is not None else state.stamp)


class LoamOdometry:
    """Sequential scan-to-scan odometry stage.

    Keeps the last sweep; each new sweep yields a motion estimate that is
    accumulated into the world-from-sensor pose. On degenerate geometry, or
    when the estimate exceeds what the platform can physically move in one
    cycle, the previous pose is held and the motion prior resets.
    """

    def __init__(
        self,
        half_width: int = 5,
        gate: float = 0.5,
        min_range: float = 0.3,
        max_step_translation: float = 0.25,
        max_step_yaw: float = 0.35,
    ):
        self.half_width = half_width
        self.gate = gate
        self.min_range = min_range
        self.max_step_translation = max_step_translation
        self.max_step_yaw = max_step_yaw
        self.state = OdomState()
        self.last_step = RigidTransform3.identity()
        self.degenerate_count = 0
        self._coast_cycles = 0
        self._last_gap: float | None = None
        self._last_features: FeatureSet | None = None

    def process(self, scan: Scan) -> Pose2:
        prev = self.state.last_scan
        features = extract_features(scan, self.half_width, min_range=self.min_range)
        if prev is None:
            self._last_features = features
            self.state = OdomState(self.state.pose, self.state.velocity, scan, scan.stamp)
            return self.state.planar()
        # Constant-velocity warm start, projected to the plane: directions the
        # scans cannot observe (z, roll, pitch on a planar platform) must not
        # accumulate through the initial guess. The prior scales with the
        # stamp gap: the sweep rate beats against the odometry rate, so
        # consecutive scan pairs span unequal time intervals.
        prev_step = self.last_step
        gap = scan.stamp - prev.stamp
        scale = 1.0
        if self._last_gap is not None and self._last_gap > 1e-9 and gap > 1e-9:
            scale = min(max(gap / self._last_gap, 0.25), 4.0)
        self._last_gap = gap if gap > 1e-9 else self._last_gap
        init = RigidTransform3.from_xyz_yaw(
            scale * float(prev_step.translation[0]),
            scale * float(prev_step.translation[1]),
            0.0,
            scale * prev_step.yaw(),
        )
        prev_projected = project_sweep(prev)
        # Two matching rounds: the second re-associates with the refined
        # motion, which recovers the onset of fast turns where the
        # constant-velocity prior is stale.
        step = None
        for _ in range(2):
            corrs = find_correspondences(
                features, prev_projected, self.gate, self._last_features, init=init
            )
            try:
                step = estimate_motion(corrs, init=init)
            except (DegenerateGeometryError, DegenerateCorrespondenceError):
                break
            shift = math.hypot(
                float(step.translation[0]) - float(init.translation[0]),
                float(step.translation[1]) - float(init.translation[1]),
            )
            turn = abs(step.yaw() - init.yaw())
            init = RigidTransform3.from_xyz_yaw(
                float(step.translation[0]), float(step.translation[1]), 0.0, step.yaw()
            )
            if shift < 5e-3 and turn < 1e-2:
                break  # the prior already matched; re-association would not move
        self._last_features = features
        if step is not None and (
            math.hypot(float(step.translation[0]), float(step.translation[1]))
            > self.max_step_translation
            or abs(step.yaw()) > self.max_step_yaw
        ):
            step = None  # physically impossible inter-scan motion: reject
        if step is not None:
            self.last_step = step
            self._coast_cycles = 0
        else:
            self.degenerate_count += 1
            # Coast briefly on the motion prior; freezing mid-cruise would
            # cost a full step of error per dropout. Persistent degeneracy
            # falls back to holding the pose.
            if self._coast_cycles < 2:
                self._coast_cycles += 1
                step = RigidTransform3.from_xyz_yaw(
                    float(prev_step.translation[0]),
                    float(prev_step.translation[1]),
                    0.0,
                    prev_step.yaw(),
                )
                self.last_step = step
            else:
                step = RigidTransform3.identity()
                self.last_step = RigidTransform3.identity()
        new_state = accumulate(self.state, step, scan.stamp)
        new_state.last_scan = scan
        self.state = new_state
        return self.state.planar()

    def log_line(self) -> str:
        p = self.state.planar()
        return f"{self.state.stamp:.6f} {p.x:.6f} {p.y:.6f} {p.beta:.6f}"
