"""Triangle collision detection (BVH) and conic repulsion fields.

Each colliding triangle spans a bounded cone-shaped penalty field over the
opposing triangle's vertices; fields from multiple collisions accumulate in
the energy because every (vertex, opposing face) pair emits its own residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import tri_tri_intersections
from .data_terms import P2P, P2PLANE, PointCorrespondence

SIGMA_DEFAULT = 0.5
BVH_LEAF_SIZE = 4


@dataclass(frozen=True)
class TriangleCone:
    """Repulsion cone of a triangle: circumcenter, unit normal, circumradius,
    and the field-of-view parameter sigma."""

    o: np.ndarray
    n: np.ndarray
    r: float
    sigma: float = SIGMA_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "o", np.asarray(self.o, dtype=float))
        object.__setattr__(self, "n", np.asarray(self.n, dtype=float))
        if self.r <= 0:
            raise ValueError("circumradius must be positive")
        if abs(np.linalg.norm(self.n) - 1.0) > 1e-9:
            raise ValueError("cone normal must be unit length")


@dataclass(frozen=True)
class CollisionPair:
    face_s: int
    face_t: int


def triangle_cone(p0, p1, p2, sigma: float = SIGMA_DEFAULT) -> TriangleCone:
    """Circumcenter/circumradius cone of a 3D triangle."""
    p0 = np.asarray(p0, dtype=float)
    a = np.asarray(p1, dtype=float) - p0
    b = np.asarray(p2, dtype=float) - p0
    n = np.cross(a, b)
    n2 = float(n @ n)
    if n2 < 1e-18:
        raise ValueError("degenerate triangle has no circumcircle")
    c = p0 + (
        float(a @ a) * np.cross(b, n) + float(b @ b) * np.cross(n, a)
    ) / (2.0 * n2)
    r = float(np.linalg.norm(c - p0))
    return TriangleCone(c, n / np.sqrt(n2), r, sigma)


def phi(v: np.ndarray, cone: TriangleCone) -> float:
    """Scaled lateral distance to the cone axis; >= 1 means outside the field.

    Points at or beyond the apex (non-positive denominator) are outside.
    """
    d = np.asarray(v, dtype=float) - cone.o
    h = float(cone.n @ d)
    lateral = np.linalg.norm(d - h * cone.n)
    denom = -(cone.r / cone.sigma) * h + cone.r
    if denom <= 0.0:
        return np.inf
    return float(lateral / denom)


def upsilon(x: float, sigma: float = SIGMA_DEFAULT) -> float:
    """Repulsion intensity along the cone axis: linear beyond the quadratic
    transition band (-sigma, +sigma), zero past +sigma."""
    if x <= -sigma:
        return -x + 1.0 - sigma
    if x >= sigma:
        return 0.0
    return (
        -(1.0 - 2.0 * sigma) / (4.0 * sigma**2) * x * x
        - x / (2.0 * sigma)
        + (3.0 - 2.0 * sigma) / 4.0
    )


def psi(v: np.ndarray, cone: TriangleCone) -> float:
    """Penalty field value: |(1 - phi) * upsilon(height)|^2 inside the cone."""
    f = phi(v, cone)
    if f >= 1.0:
        return 0.0
    h = float(cone.n @ (np.asarray(v, dtype=float) - cone.o))
    val = (1.0 - f) * upsilon(h, cone.sigma)
    return float(val * val)


class Bvh:
    """Axis-aligned-box tree over triangles, median split on centroids."""

    def __init__(self, tri_vertices: np.ndarray, leaf_size: int = BVH_LEAF_SIZE):
        self.tris = np.asarray(tri_vertices, dtype=float)  # (F, 3, 3)
        n = len(self.tris)
        self.lo = self.tris.min(axis=1)
        self.hi = self.tris.max(axis=1)
        cent = self.tris.mean(axis=1)
        # nodes: (lo, hi, left, right, start, count); leaves have left == -1
        self.node_lo: list[np.ndarray] = []
        self.node_hi: list[np.ndarray] = []
        self.node_child: list[tuple[int, int]] = []
        self.node_span: list[tuple[int, int]] = []
        self.order = np.arange(n)
        if n:
            self._build(0, n, cent, leaf_size)

    def _build(self, start, end, cent, leaf_size) -> int:
        idx = self.order[start:end]
        lo = self.lo[idx].min(axis=0)
        hi = self.hi[idx].max(axis=0)
        me = len(self.node_lo)
        self.node_lo.append(lo)
        self.node_hi.append(hi)
        self.node_child.append((-1, -1))
        self.node_span.append((start, end))
        if end - start <= leaf_size:
            return me
        axis = int(np.argmax(hi - lo))
        keys = cent[idx][:, axis]
        local = np.argsort(keys, kind="stable")
        self.order[start:end] = idx[local]
        mid = (start + end) // 2
        left = self._build(start, mid, cent, leaf_size)
        right = self._build(mid, end, cent, leaf_size)
        self.node_child[me] = (left, right)
        return me

    def candidate_pairs(self, other: "Bvh") -> np.ndarray:
        """(N, 2) index pairs whose boxes overlap (self index, other index)."""
        if not self.node_lo or not other.node_lo:
            return np.empty((0, 2), dtype=int)
        out = []
        stack = [(0, 0)]
        while stack:
            a, b = stack.pop()
            if np.any(self.node_lo[a] > other.node_hi[b]) or np.any(
                other.node_lo[b] > self.node_hi[a]
            ):
                continue
            a_leaf = self.node_child[a][0] == -1
            b_leaf = other.node_child[b][0] == -1
            if a_leaf and b_leaf:
                s0, e0 = self.node_span[a]
                s1, e1 = other.node_span[b]
                for i in self.order[s0:e0]:
                    ilo, ihi = self.lo[i], self.hi[i]
                    for j in other.order[s1:e1]:
                        if np.any(ilo > other.hi[j]) or np.any(other.lo[j] > ihi):
                            continue
                        out.append((i, j))
            elif a_leaf:
                stack.append((a, other.node_child[b][0]))
                stack.append((a, other.node_child[b][1]))
            elif b_leaf:
                stack.append((self.node_child[a][0], b))
                stack.append((self.node_child[a][1], b))
            else:
                stack.append((self.node_child[a][0], other.node_child[b][0]))
                stack.append((self.node_child[a][0], other.node_child[b][1]))
                stack.append((self.node_child[a][1], other.node_child[b][0]))
                stack.append((self.node_child[a][1], other.node_child[b][1]))
        return np.array(sorted(set(out)), dtype=int) if out else np.empty((0, 2), dtype=int)


def _adjacency_excluded(tri_a: np.ndarray, tri_b: np.ndarray) -> np.ndarray:
    """True where two index-triples share a vertex index."""
    out = np.zeros(len(tri_a), dtype=bool)
    for i in range(3):
        for j in range(3):
            out |= tri_a[:, i] == tri_b[:, j]
    return out


def find_collisions(
    meshes: list[tuple[np.ndarray, np.ndarray]],
) -> list[CollisionPair]:
    """All intersecting triangle pairs across posed meshes.

    ``meshes`` is a list of (vertices, triangles); face ids are global across
    the list in order.  Within one mesh, pairs sharing a vertex are excluded.
    Output is sorted by (face_s, face_t) with face_s < face_t.
    """
    tri_pts = []
    tri_idx = []
    mesh_of = []
    offset = 0
    for mi, (verts, tris) in enumerate(meshes):
        verts = np.asarray(verts, dtype=float)
        tris = np.asarray(tris, dtype=np.int64)
        tri_pts.append(verts[tris])
        tri_idx.append(tris)
        mesh_of.append(np.full(len(tris), mi))
        offset += len(tris)
    if not tri_pts:
        return []
    pts = np.concatenate(tri_pts)
    mesh_of = np.concatenate(mesh_of)
    bvh = Bvh(pts)
    cand = bvh.candidate_pairs(bvh)
    if not len(cand):
        return []
    cand = cand[cand[:, 0] < cand[:, 1]]
    if not len(cand):
        return []
    same_mesh = mesh_of[cand[:, 0]] == mesh_of[cand[:, 1]]
    # vertex-sharing exclusion applies within one mesh
    idx_all = np.concatenate([t + 0 for t in _global_tri_indices(tri_idx)])
    shared = _adjacency_excluded(idx_all[cand[:, 0]], idx_all[cand[:, 1]]) & same_mesh
    cand = cand[~shared]
    if not len(cand):
        return []
    hits = tri_tri_intersections(pts[cand[:, 0]], pts[cand[:, 1]])
    pairs = cand[hits]
    return [CollisionPair(int(a), int(b)) for a, b in pairs]


def _global_tri_indices(tri_idx: list[np.ndarray]) -> list[np.ndarray]:
    """Offset per-mesh vertex indices so they never collide across meshes."""
    out = []
    voff = 0
    for t in tri_idx:
        out.append(t + voff)
        voff += int(t.max()) + 1 if t.size else 0
    return out


def collision_correspondences(
    pairs: list[CollisionPair],
    face_points: np.ndarray,
    face_vertex_ids: np.ndarray,
    posed_normals: np.ndarray,
    posed_vertices: np.ndarray,
    metric: str = P2PLANE,
    gamma_c: float = 10.0,
    sigma: float = SIGMA_DEFAULT,
) -> list[PointCorrespondence]:
    """Repulsion residuals for colliding faces.

    ``face_points`` is (F, 3, 3) posed triangle geometry with global face
    ids; ``face_vertex_ids`` is (F, 3) global vertex ids into
    ``posed_vertices``/``posed_normals``.  Each vertex of one face is pushed
    along its inverse normal with intensity Psi of the opposing face's cone;
    the field intensity is frozen into the correspondence (constant per
    outer iteration).
    """
    out: list[PointCorrespondence] = []
    w = np.sqrt(gamma_c)
    for pair in pairs:
        for src, dst in ((pair.face_s, pair.face_t), (pair.face_t, pair.face_s)):
            try:
                cone = triangle_cone(*face_points[src], sigma=sigma)
            except ValueError:
                continue
            for vid in face_vertex_ids[dst]:
                v = posed_vertices[vid]
                val = psi(v, cone)
                if val <= 0.0:
                    continue
                n = posed_normals[vid]
                out.append(
                    PointCorrespondence(
                        int(vid),
                        v - val * n,
                        n.copy(),
                        metric=metric,
                        weight=w,
                        source="collision",
                    )
                )
    return out


def total_field_energy(
    pairs: list[CollisionPair],
    face_points: np.ndarray,
    face_vertex_ids: np.ndarray,
    posed_vertices: np.ndarray,
    sigma: float = SIGMA_DEFAULT,
) -> float:
    """Sum of squared Psi over colliding-face vertices (diagnostic)."""
    total = 0.0
    for pair in pairs:
        for src, dst in ((pair.face_s, pair.face_t), (pair.face_t, pair.face_s)):
            try:
                cone = triangle_cone(*face_points[src], sigma=sigma)
            except ValueError:
                continue
            for vid in face_vertex_ids[dst]:
                total += psi(posed_vertices[vid], cone) ** 2
    return total


def max_penetration(
    meshes: list[tuple[np.ndarray, np.ndarray]], sigma: float = SIGMA_DEFAULT
) -> float:
    """Max Psi over vertices of colliding faces; 0 when nothing collides."""
    pairs = find_collisions(meshes)
    if not pairs:
        return 0.0
    pts = np.concatenate([np.asarray(v)[np.asarray(t, dtype=int)] for v, t in meshes])
    ids = np.concatenate(_global_tri_indices([np.asarray(t, dtype=int) for _, t in meshes]))
    verts = np.concatenate([np.asarray(v, dtype=float) for v, _ in meshes])
    best = 0.0
    for pair in pairs:
        for src, dst in ((pair.face_s, pair.face_t), (pair.face_t, pair.face_s)):
            try:
                cone = triangle_cone(*pts[src], sigma=sigma)
            except ValueError:
                continue
            for vid in ids[dst]:
                best = max(best, psi(verts[vid], cone))
    return best
