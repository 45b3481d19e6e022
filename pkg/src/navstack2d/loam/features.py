"""Smoothness-based edge/planar feature extraction from multi-ring scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Scan:
    """One sensor sweep: a list of rings, each an (N, 3) array ordered by azimuth."""

    rings: list[np.ndarray]
    stamp: float = 0.0
    sweep_index: int = 0

    def __post_init__(self):
        self.rings = [np.asarray(r, dtype=float).reshape(-1, 3) for r in self.rings]

    def all_points(self) -> np.ndarray:
        parts = [r for r in self.rings if len(r)]
        return np.vstack(parts) if parts else np.empty((0, 3))

    def point_count(self) -> int:
        return sum(len(r) for r in self.rings)


@dataclass(frozen=True)
class Feature:
    point: np.ndarray
    ring: int
    index: int
    smoothness: float


@dataclass
class FeatureSet:
    edges: list[Feature] = field(default_factory=list)
    planars: list[Feature] = field(default_factory=list)


def smoothness(ring: np.ndarray, i: int, half_width: int) -> float | None:
    """Local curvature proxy of point i against its 2*half_width neighbors.

    Returns None when i lacks half_width valid neighbors on either side.
    """
    ring = np.asarray(ring, dtype=float)
    n = len(ring)
    if i - half_width < 0 or i + half_width >= n:
        return None
    window = ring[i - half_width : i + half_width + 1]
    diff_sum = (2 * half_width) * ring[i] - (window.sum(axis=0) - ring[i])
    norm_i = float(np.linalg.norm(ring[i]))
    if norm_i == 0.0:
        return None
    return float(np.linalg.norm(diff_sum) / (2 * half_width * norm_i))


def ring_smoothness(ring: np.ndarray, half_width: int) -> np.ndarray:
    """Vectorized smoothness for a whole ring; NaN at boundary indices."""
    ring = np.asarray(ring, dtype=float)
    n = len(ring)
    out = np.full(n, np.nan)
    if n < 2 * half_width + 1:
        return out
    csum = np.concatenate([np.zeros((1, 3)), np.cumsum(ring, axis=0)])
    lo = np.arange(0, n - 2 * half_width)
    window_sum = csum[lo + 2 * half_width + 1] - csum[lo]
    center = ring[half_width : n - half_width]
    diff_sum = (2 * half_width) * center - (window_sum - center)
    norms = np.linalg.norm(center, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.linalg.norm(diff_sum, axis=1) / (2 * half_width * norms)
    out[half_width : n - half_width] = np.where(norms > 0, c, np.nan)
    return out


def _window_is_elbow(ring: np.ndarray, i: int, half_width: int, min_ratio: float = 0.1) -> bool:
    """True when the smoothness window genuinely bends at i.

    Grazing-incidence wall stretches score a high smoothness value purely
    from asymmetric sample spacing while staying collinear; an edge feature
    must deviate from the window's end-to-end chord instead.
    """
    window = ring[i - half_width : i + half_width + 1]
    a = window[0]
    b = window[-1]
    chord = b - a
    chord_len = float(np.linalg.norm(chord))
    if chord_len < 1e-12:
        return True
    offsets = window - a
    u = chord / chord_len
    cx = offsets[:, 1] * u[2] - offsets[:, 2] * u[1]
    cy = offsets[:, 2] * u[0] - offsets[:, 0] * u[2]
    cz = offsets[:, 0] * u[1] - offsets[:, 1] * u[0]
    dev = float(np.sqrt(cx * cx + cy * cy + cz * cz).max())
    return dev > min_ratio * chord_len


def _refine_corner(ring: np.ndarray, i: int, half_width: int) -> np.ndarray:
    """Sub-sample corner localization: intersect lines fitted to the two
    window flanks.

    The raw argmax of the smoothness value sits a sample or two off the true
    corner, systematically toward the more grazing wall; that offset rotates
    with the viewpoint and would bias scan matching. The flank-line
    intersection is view-independent. Falls back to the raw point when the
    flanks are nearly parallel (a pole, not a corner) or the fit is far off.
    """
    left = ring[i - half_width : i]
    right = ring[i + 1 : i + half_width + 1]
    if len(left) < 3 or len(right) < 3:
        return ring[i]

    def fit_line(pts):
        center = pts.mean(axis=0)
        _u, _s, vt = np.linalg.svd(pts - center)
        return center, vt[0]

    c1, d1 = fit_line(left)
    c2, d2 = fit_line(right)
    cos_angle = abs(float(d1 @ d2))
    if cos_angle > 0.94:  # flanks nearly parallel: nothing to intersect
        return ring[i]
    # Closest points of the two fitted lines.
    w0 = c1 - c2
    a = float(d1 @ d1)
    b = float(d1 @ d2)
    c = float(d2 @ d2)
    d = float(d1 @ w0)
    e = float(d2 @ w0)
    denom = a * c - b * b
    if abs(denom) < 1e-12:
        return ring[i]
    s = (b * e - c * d) / denom
    t = (a * e - b * d) / denom
    p1 = c1 + s * d1
    p2 = c2 + t * d2
    if np.linalg.norm(p1 - p2) > 0.1 or np.linalg.norm(0.5 * (p1 + p2) - ring[i]) > 0.5:
        return ring[i]
    return 0.5 * (p1 + p2)


def extract_features(
    scan: Scan,
    half_width: int = 5,
    subregions: int = 4,
    max_edges: int = 2,
    max_planars: int = 4,
    min_range: float = 0.3,
    edge_prominence: float = 10.0,
    azimuth_gap_limit: float = 0.06,
    range_jump_limit: float = 0.3,
    min_edge_segment: float = 0.6,
) -> FeatureSet:
    """Pick at most `max_edges` highest-smoothness and `max_planars`
    lowest-smoothness points per ring per subregion.

    Subregions split each ring's occupied azimuth range into equal sectors.
    An edge must also stand out against the ring (c above `edge_prominence`
    times the ring median), otherwise featureless stretches of wall would
    fill the edge budget with noise; and once a feature is selected its
    window neighbors are suppressed so a single corner cannot consume the
    whole budget. Points closer than `min_range` are excluded: the range
    normalization in the smoothness value blows up near the sensor. Points
    whose smoothness window spans an azimuth gap (missing returns) or a
    range jump (occlusion boundary) are excluded too: both boundaries move
    with the viewpoint and must not become features.
    """
    result = FeatureSet()
    for ring_id, ring in enumerate(scan.rings):
        n = len(ring)
        if n == 0:
            continue
        c = ring_smoothness(ring, half_width)
        ranges = np.linalg.norm(ring, axis=1)
        valid = np.isfinite(c) & (ranges >= min_range)
        edge_ok = np.ones(n, dtype=bool)
        if n > 1:
            az = np.arctan2(ring[:, 1], ring[:, 0])
            gap = np.abs(np.diff(az))
            gap = np.minimum(gap, 2.0 * math.pi - gap)
            jump = np.abs(np.diff(ranges))
            bad = (gap > azimuth_gap_limit) | (jump > range_jump_limit)
            ok = np.ones(n, dtype=bool)
            for i in np.nonzero(bad)[0]:
                ok[max(i - half_width + 1, 0) : i + half_width + 1] = False
            valid &= ok
            # Edges may only come from long contiguous surface segments. A
            # free-standing pole or cylinder is one short segment between two
            # occlusion jumps; every point on it moves with the viewpoint.
            seg_id = np.concatenate([[0], np.cumsum(bad)])
            step_len = np.concatenate([[0.0], np.linalg.norm(np.diff(ring, axis=0), axis=1)])
            step_len[np.concatenate([[False], bad])] = 0.0
            for s_id in np.unique(seg_id):
                members = seg_id == s_id
                if step_len[members].sum() < min_edge_segment:
                    edge_ok[members] = False
        if not valid.any():
            continue
        c_floor = max(edge_prominence * float(np.median(c[valid])), 1e-6)
        azimuth = np.arctan2(ring[:, 1], ring[:, 0])
        az_min, az_max = float(azimuth.min()), float(azimuth.max())
        span = az_max - az_min
        if span <= 0:
            sub = np.zeros(n, dtype=int)
        else:
            sub = np.minimum((subregions * (azimuth - az_min) / span).astype(int), subregions - 1)

        for s in range(subregions):
            idx = np.nonzero(valid & (sub == s))[0]
            if idx.size == 0:
                continue
            by_c_desc = idx[np.lexsort((idx, -c[idx]))]
            by_c_desc = by_c_desc[edge_ok[by_c_desc]]
            edge_idx: list[int] = []
            # A grazing wall can put dozens of collinear points above the
            # floor; cap the attempts instead of scanning them all.
            for i in by_c_desc[:16]:
                if len(edge_idx) == max_edges or c[i] <= c_floor:
                    break
                if any(abs(i - e) <= half_width for e in edge_idx):
                    continue
                if not _window_is_elbow(ring, i, half_width):
                    continue
                edge_idx.append(int(i))
            by_c_asc = idx[np.lexsort((idx, c[idx]))]
            planar_idx = [int(i) for i in by_c_asc if i not in edge_idx][:max_planars]
            for i in edge_idx:
                point = _refine_corner(ring, i, half_width)
                result.edges.append(Feature(point.copy(), ring_id, int(i), float(c[i])))
            for i in planar_idx:
                result.planars.append(Feature(ring[i].copy(), ring_id, int(i), float(c[i])))
    return result
