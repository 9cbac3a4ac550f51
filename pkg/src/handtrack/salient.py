"""Fingertip-detection association (assignment with outlier nodes) and the
salient correspondence energy.

Detections come from files; the solver only consumes bounding boxes with
confidences and the back-projected detection cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data_terms import P2P, PointCorrespondence
from .geometry import CameraIntrinsics, NearestNeighborIndex

CONFIDENCE_THRESHOLD = 3.0
LAMBDA_DEFAULT = 1.2
CLOSE_SKIP_MM = 10.0
INSIDE_FRACTION = 0.5

WEIGHT_MODE_UNIT = "unit"  # w_s = 1
WEIGHT_MODE_CONFIDENCE = "confidence"  # w_s = c_s / c_thr


@dataclass
class Detection:
    """One confident fingertip detection and its back-projected pixels."""

    frame_id: int
    bbox: tuple[float, float, float, float]  # x, y, w, h in px
    confidence: float
    cloud_points: np.ndarray  # (N, 3) mm
    centroid: np.ndarray  # (3,) mm

    def __post_init__(self):
        self.cloud_points = np.asarray(self.cloud_points, dtype=float).reshape(-1, 3)
        self.centroid = np.asarray(self.centroid, dtype=float)
        if self.confidence < CONFIDENCE_THRESHOLD:
            raise ValueError(
                f"detection confidence {self.confidence} below threshold {CONFIDENCE_THRESHOLD}"
            )


@dataclass
class FingertipRegion:
    """Marked vertex set of one model fingertip."""

    fingertip_id: int
    vertex_ids: np.ndarray

    def __post_init__(self):
        self.vertex_ids = np.asarray(self.vertex_ids, dtype=int)
        if not len(self.vertex_ids):
            raise ValueError("fingertip region must have vertices")

    def visible_centroid(self, posed_vertices: np.ndarray, visible: np.ndarray) -> np.ndarray:
        """Centroid of the currently visible region vertices; falls back to
        all region vertices when none are visible."""
        vis = self.vertex_ids[visible[self.vertex_ids]]
        chosen = vis if len(vis) else self.vertex_ids
        return posed_vertices[chosen].mean(axis=0)


@dataclass
class AssignmentSolution:
    e: np.ndarray  # (S, T) binary
    alpha: np.ndarray  # (S,) binary, detection declared false positive
    beta: np.ndarray  # (T,) binary, fingertip left unassigned
    objective: float

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=int)
        self.alpha = np.asarray(self.alpha, dtype=int)
        self.beta = np.asarray(self.beta, dtype=int)
        s, t = self.e.shape
        if not np.array_equal(self.e.sum(axis=1) + self.alpha, np.ones(s, dtype=int)):
            raise ValueError("row constraint violated")
        if not np.array_equal(self.e.sum(axis=0) + self.beta, np.ones(t, dtype=int)):
            raise ValueError("column constraint violated")

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(s), int(t)) for s, t in zip(*np.nonzero(self.e))]


def assignment_costs(
    detections: list[Detection],
    fingertips: list[FingertipRegion],
    posed_vertices: np.ndarray,
    visible: np.ndarray,
    weight_mode: str = WEIGHT_MODE_CONFIDENCE,
) -> tuple[np.ndarray, np.ndarray]:
    """w_st = 3D distance between detection centroid and fingertip centroid;
    w_s = 1 or confidence / threshold."""
    s, t = len(detections), len(fingertips)
    w_st = np.zeros((s, t))
    cents = [f.visible_centroid(posed_vertices, visible) for f in fingertips]
    for i, det in enumerate(detections):
        for j, c in enumerate(cents):
            w_st[i, j] = np.linalg.norm(det.centroid - c)
    if weight_mode == WEIGHT_MODE_UNIT:
        w_s = np.ones(s)
    elif weight_mode == WEIGHT_MODE_CONFIDENCE:
        w_s = np.array([d.confidence / CONFIDENCE_THRESHOLD for d in detections])
    else:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    return w_st, w_s


def solve_assignment(w_st: np.ndarray, w_s: np.ndarray, lam: float = LAMBDA_DEFAULT) -> AssignmentSolution:
    """Exact minimizer of sum e*w + lam*sum alpha*w_s + lam*sum beta under
    one-to-one row/column constraints.

    Solved as a square (S+T) assignment: per-detection false-positive nodes
    cost lam*w_s, per-fingertip miss nodes cost lam, dummy-dummy cells are
    free.  Ties prefer fewer assignments, then lexicographic (s, t), via
    scale-proportional epsilon penalties.
    """
    w_st = np.asarray(w_st, dtype=float)
    s, t = w_st.shape
    w_s = np.asarray(w_s, dtype=float).reshape(s)
    if s == 0 and t == 0:
        return AssignmentSolution(np.zeros((0, 0)), np.zeros(0), np.zeros(0), 0.0)

    n = s + t
    big = np.inf
    cost = np.full((n, n), big)
    cost[:s, :t] = w_st
    for i in range(s):
        cost[i, t + i] = lam * w_s[i]
    for j in range(t):
        cost[s + j, j] = lam
    cost[s:, t:] = 0.0

    # tie-breaking: penalize each real assignment by eps1 and prefer
    # lexicographically early (s, t) cells by a tiny decreasing bonus
    scale = max(1.0, np.abs(w_st).max() if w_st.size else 0.0, lam * (np.abs(w_s).max() if s else 0.0), lam)
    eps1 = 1e-9 * scale
    eps2 = 1e-12 * scale
    tie = np.zeros((n, n))
    if s and t:
        ranks = np.arange(s * t, dtype=float).reshape(s, t)
        tie[:s, :t] = eps1 - eps2 * 0.5 ** np.minimum(ranks, 40.0)
    rows, cols = linear_sum_assignment(cost + tie)

    e = np.zeros((s, t), dtype=int)
    alpha = np.zeros(s, dtype=int)
    beta = np.zeros(t, dtype=int)
    for r, c in zip(rows, cols):
        if r < s and c < t:
            e[r, c] = 1
        elif r < s:
            alpha[r] = 1
        elif c < t:
            beta[c] = 1
    objective = float((e * w_st).sum() + lam * (alpha * w_s).sum() + lam * beta.sum())
    return AssignmentSolution(e, alpha, beta, objective)


def salient_correspondences(
    solution: AssignmentSolution,
    detections: list[Detection],
    fingertips: list[FingertipRegion],
    posed_vertices: np.ndarray,
    visible: np.ndarray,
    intrinsics: CameraIntrinsics,
    w_st: np.ndarray,
    metric: str = P2P,
    weight: float = 1.0,
) -> list[PointCorrespondence]:
    """Correspondences for each assigned (detection, fingertip) pair.

    Skips pairs already closer than CLOSE_SKIP_MM.  When at least half of the
    region's vertices project inside the detection box, visible vertices pair
    with their closest detection points; otherwise every visible vertex pulls
    toward the detection centroid.
    """
    out: list[PointCorrespondence] = []
    for s_i, t_i in solution.pairs():
        det = detections[s_i]
        tip = fingertips[t_i]
        if w_st[s_i, t_i] < CLOSE_SKIP_MM:
            continue
        vis_ids = tip.vertex_ids[visible[tip.vertex_ids]]
        if not len(vis_ids):
            continue
        uv = intrinsics.project(posed_vertices[tip.vertex_ids])
        x, y, bw, bh = det.bbox
        inside = (
            (uv[:, 0] >= x) & (uv[:, 0] <= x + bw) & (uv[:, 1] >= y) & (uv[:, 1] <= y + bh)
        )
        if inside.mean() >= INSIDE_FRACTION and len(det.cloud_points):
            nn = NearestNeighborIndex(det.cloud_points)
            _, idx = nn.query_many(posed_vertices[vis_ids], radius=np.inf)
            for vid, ci in zip(vis_ids, idx):
                if ci < 0:
                    continue
                out.append(
                    PointCorrespondence(
                        int(vid),
                        det.cloud_points[ci],
                        None if metric == P2P else _direction_normal(det.cloud_points[ci], posed_vertices[vid]),
                        metric=metric,
                        weight=weight,
                        source="salient",
                    )
                )
        else:
            for vid in vis_ids:
                out.append(
                    PointCorrespondence(
                        int(vid),
                        det.centroid,
                        None if metric == P2P else _direction_normal(det.centroid, posed_vertices[vid]),
                        metric=metric,
                        weight=weight,
                        source="salient",
                    )
                )
    return out


def _direction_normal(target: np.ndarray, vertex: np.ndarray) -> np.ndarray:
    d = np.asarray(vertex, dtype=float) - np.asarray(target, dtype=float)
    n = np.linalg.norm(d)
    if n < 1e-12:
        return np.array([0.0, 0.0, 1.0])
    return d / n
