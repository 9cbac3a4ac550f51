"""Alignment residuals: model-to-data closest points and data-to-model
depth-discontinuity rays.

Correspondences freeze their targets (and the normals used by the
point-to-plane metric) at construction; the objective is differentiable only
for a fixed correspondence set, and the solver rebuilds the sets each outer
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    NearestNeighborIndex,
    PluckerLine,
    depth_discontinuities,
    nearest_mask_pixels,
    pixel_ray,
)

P2P = "point_to_point"
P2PLANE = "point_to_plane"


@dataclass(frozen=True)
class GatingParams:
    max_normal_angle_deg: float = 45.0
    max_dist_m2d: float = 10.0  # mm
    max_dist_d2m: float = 30.0  # mm
    edge_vertex_px: float = 2.0  # model edge pixel -> projected vertex association


@dataclass
class PointCorrespondence:
    """3D target for one model vertex.  ``normal`` is the unit normal the
    point-to-plane residual projects onto (the posed model vertex normal for
    depth data terms; the object surface normal for contact terms)."""

    vertex_id: int
    target: np.ndarray
    normal: np.ndarray | None
    metric: str = P2P
    weight: float = 1.0
    source: str = "m2d"

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        if self.normal is not None:
            self.normal = np.asarray(self.normal, dtype=float)
        if self.metric == P2PLANE and self.normal is None:
            raise ValueError("point-to-plane correspondence needs a normal")


@dataclass
class LineCorrespondence:
    """Camera-ray target for one model vertex (data-to-model term)."""

    vertex_id: int
    line: PluckerLine
    weight: float = 1.0
    source: str = "d2m"


def model_to_data(
    posed_vertices: np.ndarray,
    posed_normals: np.ndarray,
    visible: np.ndarray,
    cloud,
    gating: GatingParams = GatingParams(),
    metric: str = P2PLANE,
) -> list[PointCorrespondence]:
    """Closest cloud point for each visible vertex, gated on distance and
    normal agreement."""
    out: list[PointCorrespondence] = []
    if cloud is None or len(cloud) == 0:
        return out
    ids = np.nonzero(visible)[0]
    if not len(ids):
        return out
    nn = NearestNeighborIndex(cloud.points)
    dist, nearest = nn.query_many(posed_vertices[ids], radius=gating.max_dist_m2d)
    cos_gate = np.cos(np.radians(gating.max_normal_angle_deg))
    for vid, d, ci in zip(ids, dist, nearest):
        if ci < 0:
            continue
        if cloud.normals is not None:
            if float(np.dot(posed_normals[vid], cloud.normals[ci])) < cos_gate:
                continue
        out.append(
            PointCorrespondence(
                int(vid),
                cloud.points[ci],
                posed_normals[vid].copy(),
                metric=metric,
                source="m2d",
            )
        )
    return out


def data_to_model(
    observed: DepthFrame,
    rendered: DepthFrame,
    posed_vertices: np.ndarray,
    visible: np.ndarray,
    intrinsics: CameraIntrinsics,
    gating: GatingParams = GatingParams(),
    observed_edges: np.ndarray | None = None,
) -> list[LineCorrespondence]:
    """Match observed depth-discontinuity pixels to the rendered model edge
    map and emit Pluecker-ray residuals for the associated model vertices.

    Observed edge depth is averaged over the valid 3x3 neighborhood; pairs
    with a 3D gap above the gate are dropped.
    """
    if observed_edges is None:
        observed_edges = depth_discontinuities(observed)
    oys, oxs = np.nonzero(observed_edges)
    if not len(oys):
        return []
    model_edges = depth_discontinuities(rendered)
    if not model_edges.any():
        return []

    # associate each model edge pixel with the nearest projected visible vertex
    vis_ids = np.nonzero(visible)[0]
    if not len(vis_ids):
        return []
    uv = intrinsics.project(posed_vertices[vis_ids])
    from scipy.spatial import cKDTree

    vtree = cKDTree(uv[:, ::-1])  # (y, x) order to match pixel coords

    d_px, edge_ids = nearest_mask_pixels(model_edges, np.stack([oys, oxs], axis=1))
    w = observed.depth.shape[1]
    valid = observed.valid_mask()
    out: list[LineCorrespondence] = []
    for k in np.argsort(oys * w + oxs):
        ey, ex = int(oys[k]), int(oxs[k])
        mid = int(edge_ids[k])
        if mid < 0:
            continue
        my, mx = divmod(mid, w)
        dv, vi = vtree.query(np.array([float(my), float(mx)]))
        if dv > gating.edge_vertex_px:
            continue
        vid = int(vis_ids[vi])
        y0, y1 = max(0, ey - 1), min(observed.depth.shape[0], ey + 2)
        x0, x1 = max(0, ex - 1), min(w, ex + 2)
        patch = observed.depth[y0:y1, x0:x1]
        pmask = valid[y0:y1, x0:x1]
        if not pmask.any():
            continue
        z = float(patch[pmask].mean())
        target = intrinsics.backproject(np.array(float(ex)), np.array(float(ey)), np.array(z))
        if np.linalg.norm(posed_vertices[vid] - target) > gating.max_dist_d2m:
            continue
        # subpixel edge: the true contour runs half a pixel toward the
        # invalid side of a marked silhouette pixel
        ox = oy = 0.0
        n_inv = 0
        for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            ny, nx = ey + dy, ex + dx
            if 0 <= ny < observed.depth.shape[0] and 0 <= nx < w and not valid[ny, nx]:
                oy += dy
                ox += dx
                n_inv += 1
        if n_inv:
            ox, oy = 0.5 * ox / n_inv, 0.5 * oy / n_inv
        out.append(LineCorrespondence(vid, pixel_ray(ex + ox, ey + oy, intrinsics)))
    return out


def residual_point(corr: PointCorrespondence, posed_vertex: np.ndarray) -> np.ndarray:
    """v - X, scaled by the correspondence weight."""
    return corr.weight * (np.asarray(posed_vertex, dtype=float) - corr.target)


def residual_plane(corr: PointCorrespondence, posed_vertex: np.ndarray) -> float:
    """n^T (v - X), scaled by the correspondence weight."""
    return corr.weight * float(np.dot(corr.normal, np.asarray(posed_vertex, dtype=float) - corr.target))


def residual_line(corr: LineCorrespondence, posed_vertex: np.ndarray) -> np.ndarray:
    """v x d - m, scaled by the correspondence weight."""
    v = np.asarray(posed_vertex, dtype=float)
    return corr.weight * (np.cross(v, corr.line.d) - corr.line.m)


def jacobian_point(corr: PointCorrespondence, vertex_jacobian: np.ndarray) -> np.ndarray:
    """(3, dof) rows for the point residual given dv/dtheta."""
    return corr.weight * vertex_jacobian


def jacobian_plane(corr: PointCorrespondence, vertex_jacobian: np.ndarray) -> np.ndarray:
    """(dof,) row for the plane residual."""
    return corr.weight * (corr.normal @ vertex_jacobian)


def jacobian_line(corr: LineCorrespondence, vertex_jacobian: np.ndarray) -> np.ndarray:
    """(3, dof) rows: d(v x d)/dtheta = -[d]_x dv/dtheta."""
    d = corr.line.d
    dx = np.array([[0.0, -d[2], d[1]], [d[2], 0.0, -d[0]], [-d[1], d[0], 0.0]])
    return corr.weight * (-dx @ vertex_jacobian)
