"""Meshes, depth frames, point clouds, rendering, and image-space queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import bilateral_filter, rasterize_depth

VISIBILITY_TOL = 2.0  # mm; must exceed rasterization interpolation error
DEFAULT_JUMP_THRESH = 20.0  # mm, depth-discontinuity step
DEFAULT_SPATIAL_SIGMA = 3.0  # px
DEFAULT_RANGE_SIGMA = 30.0  # mm


class EmptyMaskError(ValueError):
    """Distance transform of an empty mask is undefined."""


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) mm
    triangles: np.ndarray  # (F, 3) int
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        if self.vertex_normals is None:
            self.vertex_normals = vertex_normals(self.vertices, self.triangles)
        else:
            self.vertex_normals = np.asarray(self.vertex_normals, dtype=float)


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals."""
    n = np.zeros_like(vertices, dtype=float)
    if len(triangles):
        v0 = vertices[triangles[:, 0]]
        fn = np.cross(vertices[triangles[:, 1]] - v0, vertices[triangles[:, 2]] - v0)
        for k in range(3):
            np.add.at(n, triangles[:, k], fn)
    ln = np.linalg.norm(n, axis=1)
    ln[ln == 0.0] = 1.0
    return n / ln[:, None]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("focal lengths and image size must be positive")

    def project(self, points: np.ndarray) -> np.ndarray:
        """(N, 3) camera points -> (N, 2) continuous pixel coordinates."""
        p = np.asarray(points, dtype=float)
        z = np.where(np.abs(p[:, 2]) < 1e-12, 1e-12, p[:, 2])
        return np.stack([self.fx * p[:, 0] / z + self.cx, self.fy * p[:, 1] / z + self.cy], axis=1)

    def backproject(self, px: np.ndarray, py: np.ndarray, z: np.ndarray) -> np.ndarray:
        x = z * (px - self.cx) / self.fx
        y = z * (py - self.cy) / self.fy
        return np.stack([x, y, z], axis=-1)


@dataclass
class DepthFrame:
    """Depth in mm; 0 marks invalid.  An optional boolean mask (True = keep)
    invalidates masked-out pixels everywhere downstream."""

    depth: np.ndarray
    intrinsics: CameraIntrinsics
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        if self.depth.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError("depth shape does not match intrinsics")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.depth.shape:
                raise ValueError("mask shape does not match depth")

    def valid_mask(self) -> np.ndarray:
        v = self.depth > 0.0
        if self.mask is not None:
            v &= self.mask
        return v


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    normals: np.ndarray | None  # (N, 3) unit, camera-facing
    pixel_of_point: np.ndarray  # (N,) flat row-major pixel index

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.pixel_of_point = np.asarray(self.pixel_of_point, dtype=np.int64)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise ValueError("normals and points must be parallel arrays")
        if len(self.pixel_of_point) != len(self.points):
            raise ValueError("pixel_of_point and points must be parallel arrays")

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class PluckerLine:
    """Line as (unit direction, moment); a point X is on it iff X x d == m."""

    d: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float))
        if abs(np.linalg.norm(self.d) - 1.0) > 1e-9:
            raise ValueError("line direction must be unit length")
        if abs(float(np.dot(self.d, self.m))) > 1e-6:
            raise ValueError("moment must be orthogonal to direction")


def depth_to_cloud(frame: DepthFrame) -> PointCloud:
    """Back-project every valid pixel through the pinhole model."""
    valid = frame.valid_mask()
    ys, xs = np.nonzero(valid)
    z = frame.depth[ys, xs]
    pts = frame.intrinsics.backproject(xs.astype(float), ys.astype(float), z)
    return PointCloud(pts, None, ys * frame.intrinsics.width + xs)


def bilateral_smooth_and_normals(
    frame: DepthFrame,
    spatial_sigma: float = DEFAULT_SPATIAL_SIGMA,
    range_sigma: float = DEFAULT_RANGE_SIGMA,
) -> PointCloud:
    """Smooth depth with a bilateral filter, then estimate camera-facing
    normals from central-difference tangents in pixel space.

    Points without a full set of valid neighbors are dropped (no normal).
    """
    valid = frame.valid_mask()
    masked = np.where(valid, frame.depth, 0.0)
    sm = bilateral_filter(masked, spatial_sigma, range_sigma)
    h, w = sm.shape
    intr = frame.intrinsics
    pys, pxs = np.mgrid[0:h, 0:w]
    pts3 = intr.backproject(pxs.astype(float), pys.astype(float), sm)
    ok = sm > 0.0

    nbr_ok = np.zeros_like(ok)
    nbr_ok[1:-1, 1:-1] = ok[1:-1, :-2] & ok[1:-1, 2:] & ok[:-2, 1:-1] & ok[2:, 1:-1]
    nbr_ok &= ok

    tx = np.zeros_like(pts3)
    ty = np.zeros_like(pts3)
    tx[:, 1:-1] = pts3[:, 2:] - pts3[:, :-2]
    ty[1:-1, :] = pts3[2:, :] - pts3[:-2, :]
    nrm = np.cross(tx, ty)
    ln = np.linalg.norm(nrm, axis=2)
    good = nbr_ok & (ln > 1e-12)
    ys, xs = np.nonzero(good)
    n = nrm[ys, xs] / ln[ys, xs][:, None]
    p = pts3[ys, xs]
    flip = np.einsum("nc,nc->n", n, p) > 0.0
    n[flip] = -n[flip]
    return PointCloud(p, n, ys * w + xs)


def render_depth(
    vertices: np.ndarray, triangles: np.ndarray, intrinsics: CameraIntrinsics
) -> tuple[DepthFrame, np.ndarray]:
    """Z-buffer render of camera-frame geometry.

    Returns the depth frame (0 where empty) and a per-vertex visibility
    flag: visible iff the vertex's pixel was drawn and the projected depth
    is at most the z-buffer value plus VISIBILITY_TOL (not occluded by more
    than the tolerance).
    """
    zbuf = rasterize_depth(
        vertices,
        triangles,
        intrinsics.fx,
        intrinsics.fy,
        intrinsics.cx,
        intrinsics.cy,
        intrinsics.width,
        intrinsics.height,
    )
    depth = np.where(np.isfinite(zbuf), zbuf, 0.0)
    frame = DepthFrame(depth, intrinsics)

    uv = intrinsics.project(vertices)
    px = np.rint(uv[:, 0]).astype(int)
    py = np.rint(uv[:, 1]).astype(int)
    z = np.asarray(vertices, dtype=float)[:, 2]
    inb = (px >= 0) & (px < intrinsics.width) & (py >= 0) & (py < intrinsics.height) & (z > 0)
    vis = np.zeros(len(vertices), dtype=bool)
    zb = depth[py[inb], px[inb]]
    vis[inb] = (zb > 0.0) & (z[inb] - zb <= VISIBILITY_TOL)
    return frame, vis


class NearestNeighborIndex:
    """Exact nearest-point queries; ties resolved to the lowest point index."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def query(self, q: np.ndarray, radius: float) -> int:
        """Index of the nearest point within radius, or -1."""
        if self._tree is None:
            return -1
        q = np.asarray(q, dtype=float)
        d, i = self._tree.query(q, k=1)
        if d > radius:
            return -1
        cand = self._tree.query_ball_point(q, d + 1e-9 * (1.0 + d))
        dists = np.linalg.norm(self.points[cand] - q, axis=1)
        best = dists.min()
        return min(int(c) for c, dd in zip(cand, dists) if dd == best)

    def query_many(self, qs: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized nearest lookup; (distances, indices), -1 beyond radius.

        Applies the lowest-index tie rule only where an exact tie exists.
        """
        qs = np.asarray(qs, dtype=float).reshape(-1, 3)
        if self._tree is None or not len(qs):
            return np.full(len(qs), np.inf), np.full(len(qs), -1, dtype=int)
        k = min(2, len(self.points))
        d, i = self._tree.query(qs, k=k)
        if k == 1:
            d = d[:, None]
            i = i[:, None]
        dist = d[:, 0].copy()
        idx = i[:, 0].astype(int)
        if k == 2:
            tied = np.nonzero(d[:, 0] == d[:, 1])[0]
            for t in tied:
                idx[t] = self.query(qs[t], np.inf)
        far = dist > radius
        idx[far] = -1
        dist[far] = np.inf
        return dist, idx


def nearest_neighbor_index(points: np.ndarray) -> NearestNeighborIndex:
    return NearestNeighborIndex(points)


def depth_discontinuities(frame: DepthFrame, jump_thresh: float = DEFAULT_JUMP_THRESH) -> np.ndarray:
    """Mark valid pixels whose 4-neighborhood jumps by more than the
    threshold or that border an invalid/masked pixel."""
    valid = frame.valid_mask()
    d = frame.depth
    mask = np.zeros_like(valid)
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        ys0, ys1 = max(0, dy), min(d.shape[0], d.shape[0] + dy)
        xs0, xs1 = max(0, dx), min(d.shape[1], d.shape[1] + dx)
        here = (slice(ys0 - dy, ys1 - dy), slice(xs0 - dx, xs1 - dx))
        there = (slice(ys0, ys1), slice(xs0, xs1))
        nbr_valid = valid[there]
        jump = np.abs(d[here] - d[there]) > jump_thresh
        mask[here] |= valid[here] & (~nbr_valid | (nbr_valid & jump))
    return mask


def distance_transform(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact Euclidean distance (px) to the nearest marked pixel plus its
    flat row-major id; ties go to the lowest id."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("distance transform needs a non-empty mask")
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    ids = ys * w + xs
    tree = cKDTree(np.stack([ys, xs], axis=1).astype(float))
    pys, pxs = np.mgrid[0:h, 0:w]
    qs = np.stack([pys.ravel(), pxs.ravel()], axis=1).astype(float)
    d, i = tree.query(qs, k=min(2, len(ids)))
    if len(ids) == 1:
        dist = d.reshape(h, w)
        nearest = np.full(h * w, ids[0], dtype=np.int64).reshape(h, w)
        return dist, nearest
    nearest = ids[i[:, 0]]
    tied = np.nonzero(d[:, 0] == d[:, 1])[0]
    for t in tied:
        cand = tree.query_ball_point(qs[t], d[t, 0] + 1e-9 * (1.0 + d[t, 0]))
        dd = np.linalg.norm(tree.data[cand] - qs[t], axis=1)
        best = dd.min()
        nearest[t] = min(ids[c] for c, x in zip(cand, dd) if x == best)
    return d[:, 0].reshape(h, w), nearest.reshape(h, w)


def nearest_mask_pixels(mask: np.ndarray, query_pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance-transform lookup restricted to the given (y, x) pixels.

    Same semantics as distance_transform but evaluated only where needed;
    ties are left to the k-d tree (deterministic for a fixed mask).
    """
    ys, xs = np.nonzero(mask)
    if not len(ys):
        n = len(query_pixels)
        return np.full(n, np.inf), np.full(n, -1, dtype=int)
    w = mask.shape[1]
    ids = ys * w + xs
    tree = cKDTree(np.stack([ys, xs], axis=1).astype(float))
    d, i = tree.query(np.asarray(query_pixels, dtype=float))
    return d, ids[i]


def pixel_ray(px: float, py: float, intrinsics: CameraIntrinsics) -> PluckerLine:
    """Camera ray through a pixel; moment is zero for origin-centered rays."""
    d = np.array([(px - intrinsics.cx) / intrinsics.fx, (py - intrinsics.cy) / intrinsics.fy, 1.0])
    d /= np.linalg.norm(d)
    return PluckerLine(d, np.zeros(3))
