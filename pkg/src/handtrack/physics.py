"""Grasp-stability oracle: convex-hull contact scenes, a deliberately small
rigid-body simulator, and the contact energy built from support searches.

Simulator semantics (documented, deterministic):
  * one dynamic body (the manipulated object), translation only; everything
    else is static, so the object's mass cancels out of the impulse math;
  * semi-implicit Euler (v += g dt; x += v dt) -- free flight reproduces the
    closed-form sum exactly;
  * contacts from hull vertices within CONTACT_EPS of the opposing hull
    (both directions), up to four deepest per body pair;
  * sequential impulses with accumulated normal impulse and restitution
    (product-combined) above a speed threshold; penetration depth adds a
    pressure term to the contact impulse that feeds the Coulomb friction
    clamp mu * impulse (mu geometric-mean-combined) but never injects
    separation velocity -- squeezed grips hold through friction without
    sideways jitter;
  * positional projection (averaged over contacts) of leftover penetration
    after integration; opposed penetrations cancel instead of oscillating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

GRAVITY = np.array([0.0, -9810.0, 0.0])  # mm/s^2
SIM_STEPS = 35
SIM_DT = 0.1  # s
STABLE_DISPLACEMENT = 3.0  # mm
SUPPORT_DISTANCE = 10.0  # mm
CONTACT_EPS = 0.5  # mm resting-contact detection
MAX_MANIFOLD = 4
SOLVER_PASSES = 10

DEFAULT_OBJECT_MASS = 1.0  # kg
DEFAULT_OBJECT_RESTITUTION = 0.5
DEFAULT_STATIC_RESTITUTION = 0.0
DEFAULT_SCENE_FRICTION = 3.0
DEFAULT_HAND_FRICTION = 1.2


class DegenerateHullError(ValueError):
    """Fewer than four non-coplanar points."""


@dataclass
class HullMesh:
    """Convex hull with outward-oriented faces and face plane data."""

    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (F, 3)
    face_normals: np.ndarray  # (F, 3) outward unit
    face_offsets: np.ndarray  # (F,) with n . x <= d inside

    def translated(self, t: np.ndarray) -> "HullMesh":
        t = np.asarray(t, dtype=float)
        return HullMesh(
            self.vertices + t,
            self.triangles,
            self.face_normals,
            self.face_offsets + self.face_normals @ t,
        )

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Max face-plane distance: exact inside, lower bound outside."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p @ self.face_normals.T - self.face_offsets).max(axis=1)

    def deepest_face(self, point: np.ndarray) -> int:
        d = self.face_normals @ np.asarray(point, dtype=float) - self.face_offsets
        return int(np.argmax(d))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def convex_hull(points: np.ndarray) -> HullMesh:
    """Exact 3D hull with deterministic ordering (qhull)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateHullError("need at least 4 points")
    try:
        h = ConvexHull(pts)
    except QhullError as e:
        raise DegenerateHullError(str(e)) from e
    verts = pts[h.vertices]
    remap = {int(old): i for i, old in enumerate(h.vertices)}
    tris = np.array([[remap[int(i)] for i in s] for s in h.simplices], dtype=np.int64)
    normals = h.equations[:, :3].copy()
    offsets = -h.equations[:, 3].copy()
    # orient each simplex so its geometric normal matches the plane normal
    for f in range(len(tris)):
        a, b, c = verts[tris[f]]
        if np.dot(np.cross(b - a, c - a), normals[f]) < 0:
            tris[f] = tris[f][[0, 2, 1]]
    return HullMesh(verts, tris, normals, offsets)


def hull_volume(hull: HullMesh) -> float:
    v = hull.vertices
    t = hull.triangles
    return float(
        np.abs(np.einsum("fc,fc->f", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]]))).sum() / 6.0
    )


def closest_point_on_triangle(p, a, b, c):
    """Ericson's closest-point test; returns (point, barycentric)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = float(ab @ ap)
    d2 = float(ac @ ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return a, np.array([1.0, 0.0, 0.0])
    bp = p - b
    d3 = float(ab @ bp)
    d4 = float(ac @ bp)
    if d3 >= 0.0 and d4 <= d3:
        return b, np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 <= d1 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return a + t * ab, np.array([1.0 - t, t, 0.0])
    cp = p - c
    d5 = float(ab @ cp)
    d6 = float(ac @ cp)
    if d6 >= 0.0 and d5 <= d6:
        return c, np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 <= d2 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return a + t * ac, np.array([1.0 - t, 0.0, t])
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + t * (c - b), np.array([0.0, 1.0 - t, t])
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w, np.array([1.0 - v - w, v, w])


def hull_closest_points(a: HullMesh, b: HullMesh) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact distance and witness points between convex hulls via the
    Minkowski-difference hull; distance 0 with face-witnesses on overlap."""
    diff = (a.vertices[:, None, :] - b.vertices[None, :, :]).reshape(-1, 3)
    nb = len(b.vertices)
    try:
        md = convex_hull(diff)
        md_source = np.asarray(
            [np.argmin(np.linalg.norm(diff - v, axis=1)) for v in md.vertices], dtype=int
        )
    except DegenerateHullError:
        # nearly-degenerate difference: fall back to vertex sampling
        i = int(np.argmin(np.linalg.norm(diff, axis=1)))
        ia, ib = divmod(i, nb)
        return (
            float(np.linalg.norm(diff[i])),
            a.vertices[ia].copy(),
            b.vertices[ib].copy(),
        )
    inside = md.signed_distance(np.zeros((1, 3)))[0] <= 0.0
    if inside:
        f = md.deepest_face(np.zeros(3))
        tri = md.triangles[f]
        z, bary = closest_point_on_triangle(np.zeros(3), *md.vertices[tri])
        dist = 0.0
    else:
        best = np.inf
        z = np.zeros(3)
        bary = np.zeros(3)
        tri = md.triangles[0]
        for f in range(len(md.triangles)):
            cand, bc = closest_point_on_triangle(np.zeros(3), *md.vertices[md.triangles[f]])
            d = float(np.linalg.norm(cand))
            if d < best:
                best, z, bary, tri = d, cand, bc, md.triangles[f]
        dist = best
    src = md_source[tri]
    ia, ib = np.divmod(src, nb)
    pa = (bary[:, None] * a.vertices[ia]).sum(axis=0)
    pb = (bary[:, None] * b.vertices[ib]).sum(axis=0)
    return dist, pa, pb


def _closest_on_simplex(pts: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Closest point to the origin on a 1..4-point simplex.

    Returns (point, barycentric weights over kept vertices, kept indices).
    """
    if len(pts) == 1:
        return pts[0], np.array([1.0]), [0]
    if len(pts) == 2:
        a, b = pts
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom < 1e-18 else float(np.clip(-(a @ ab) / denom, 0.0, 1.0))
        if t <= 0.0:
            return a, np.array([1.0]), [0]
        if t >= 1.0:
            return b, np.array([1.0]), [1]
        return a + t * ab, np.array([1.0 - t, t]), [0, 1]
    if len(pts) == 3:
        p, bary = closest_point_on_triangle(np.zeros(3), *pts)
        keep = [i for i in range(3) if bary[i] > 1e-14]
        return p, bary[keep] / bary[keep].sum(), keep
    # tetrahedron: inside -> origin itself; else best of the four faces
    a, b, c, d = pts
    m = np.stack([b - a, c - a, d - a], axis=1)
    det = np.linalg.det(m)
    if abs(det) > 1e-18:
        lam = np.linalg.solve(m, -a)
        bary = np.concatenate([[1.0 - lam.sum()], lam])
        if np.all(bary >= -1e-12):
            return np.zeros(3), bary, [0, 1, 2, 3]
    best = None
    for face in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        p, fb = closest_point_on_triangle(np.zeros(3), pts[face[0]], pts[face[1]], pts[face[2]])
        dd = float(p @ p)
        if best is None or dd < best[0]:
            keep = [face[i] for i in range(3) if fb[i] > 1e-14]
            w = fb[[i for i in range(3) if fb[i] > 1e-14]]
            best = (dd, p, w / w.sum(), keep)
    return best[1], best[2], best[3]


def gjk_closest_points(
    verts_a: np.ndarray, verts_b: np.ndarray, max_iter: int = 200, tol: float = 1e-12
) -> tuple[float, np.ndarray, np.ndarray]:
    """GJK distance between convex vertex sets with witness points.

    Overlapping sets report distance 0 with witnesses from the final
    simplex.  Scales as O(iterations * |V|): usable on fine hulls where the
    Minkowski-difference construction would blow up.
    """
    va = np.asarray(verts_a, dtype=float)
    vb = np.asarray(verts_b, dtype=float)
    ia0 = 0
    ib0 = 0
    w0 = va[ia0] - vb[ib0]
    simplex = [(w0, ia0, ib0)]
    v = w0.copy()
    bary = np.array([1.0])
    for _ in range(max_iter):
        vv = float(v @ v)
        if vv < tol:
            break  # overlap
        d = -v
        ia = int(np.argmax(va @ d))
        ib = int(np.argmax(vb @ -d))
        w = va[ia] - vb[ib]
        if vv - float(v @ w) <= 1e-10 * max(1.0, vv):
            break  # no closer support exists
        if any(ia == sa and ib == sb for _, sa, sb in simplex):
            break
        simplex.append((w, ia, ib))
        pts = [s[0] for s in simplex]
        v, bary, keep = _closest_on_simplex(pts)
        simplex = [simplex[i] for i in keep]
    pa = np.zeros(3)
    pb = np.zeros(3)
    for wgt, (_, sa, sb) in zip(bary, simplex):
        pa += wgt * va[sa]
        pb += wgt * vb[sb]
    return float(np.linalg.norm(v)), pa, pb


@dataclass
class StaticBody:
    hull: HullMesh
    friction: float = DEFAULT_SCENE_FRICTION
    restitution: float = DEFAULT_STATIC_RESTITUTION
    name: str = ""


@dataclass
class RigidBodyScene:
    object_hull: HullMesh
    statics: list[StaticBody]
    object_mass: float = DEFAULT_OBJECT_MASS
    object_friction: float = DEFAULT_HAND_FRICTION
    object_restitution: float = DEFAULT_OBJECT_RESTITUTION
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.object_mass <= 0:
            raise ValueError("object mass must be positive")


@dataclass
class StabilityReport:
    displacement: float  # mm, centroid displacement after the simulation
    stable: bool
    trajectory: np.ndarray | None = None  # (steps+1, 3) centroid offsets


@dataclass
class SupportCandidate:
    part_id: int
    distance: float
    point_on_part: np.ndarray
    point_on_object: np.ndarray


def _gather_contacts(obj: HullMesh, offset: np.ndarray, static: StaticBody):
    """Contact set between the offset object hull and one static hull.

    Returns (normals, depths) with normals pushing the object out.
    """
    normals = []
    depths = []
    overts = obj.vertices + offset
    sd = static.hull.signed_distance(overts)
    idx = np.nonzero(sd <= CONTACT_EPS)[0]
    if len(idx):
        order = idx[np.argsort(sd[idx], kind="stable")][:MAX_MANIFOLD]
        for i in order:
            f = static.hull.deepest_face(overts[i])
            normals.append(static.hull.face_normals[f])
            depths.append(-sd[i])
    # static vertices penetrating the object
    shifted = static.hull.vertices - offset
    sd2 = obj.signed_distance(shifted)
    idx2 = np.nonzero(sd2 <= CONTACT_EPS)[0]
    if len(idx2):
        order2 = idx2[np.argsort(sd2[idx2], kind="stable")][:MAX_MANIFOLD]
        for i in order2:
            f = obj.deepest_face(shifted[i])
            normals.append(-obj.face_normals[f])
            depths.append(-sd2[i])
    return normals, depths


def simulate_drop(
    scene: RigidBodyScene,
    steps: int = SIM_STEPS,
    dt: float = SIM_DT,
    record_trajectory: bool = False,
) -> StabilityReport:
    """Drop the object from rest against the static scene.

    Stability verdict: centroid displacement below STABLE_DISPLACEMENT after
    the fixed number of steps.
    """
    x = np.zeros(3)  # centroid offset from the initial pose
    v = np.zeros(3)
    traj = [x.copy()] if record_trajectory else None
    rest_speed = 2.0 * float(np.linalg.norm(scene.gravity)) * dt
    for _ in range(steps):
        v = v + scene.gravity * dt
        contacts = []
        for body in scene.statics:
            ns, ds = _gather_contacts(scene.object_hull, x, body)
            e = scene.object_restitution * body.restitution
            mu = np.sqrt(scene.object_friction * body.friction)
            for n, d in zip(ns, ds):
                contacts.append([np.asarray(n, dtype=float), float(d), e, mu, 0.0])
        if contacts:
            pre_vn = [float(c[0] @ v) for c in contacts]
            for _ in range(SOLVER_PASSES):
                for k, c in enumerate(contacts):
                    n, depth, e, mu, jn = c
                    vn = float(n @ v)
                    target = -e * pre_vn[k] if pre_vn[k] < -rest_speed else 0.0
                    new_jn = max(0.0, jn + (target - vn))
                    v = v + (new_jn - jn) * n
                    c[4] = new_jn
            # Coulomb clamp: contact pressure = normal impulse + a
            # penetration term (squeezed contacts carry load without
            # having injected any velocity)
            for n, depth, e, mu, jn in contacts:
                pressure = jn + max(0.0, depth - CONTACT_EPS) / dt
                if pressure <= 0.0:
                    continue
                vt = v - float(n @ v) * n
                speed = float(np.linalg.norm(vt))
                if speed < 1e-12:
                    continue
                drop = min(speed, mu * pressure)
                v = v - drop * vt / speed
        x = x + v * dt
        # positional projection of leftover penetration, averaged so that
        # opposed contacts cancel instead of oscillating
        corr = np.zeros(3)
        count = 0
        for body in scene.statics:
            ns, ds = _gather_contacts(scene.object_hull, x, body)
            for n, d in zip(ns, ds):
                if d > CONTACT_EPS:
                    corr = corr + (d - CONTACT_EPS) * np.asarray(n)
                    count += 1
        if count:
            x = x + corr / count
        if traj is not None:
            traj.append(x.copy())
    disp = float(np.linalg.norm(x))
    return StabilityReport(
        disp, disp < STABLE_DISPLACEMENT, np.array(traj) if traj is not None else None
    )


def support_candidates(
    part_hulls: list[tuple[int, HullMesh]],
    object_hull: HullMesh,
    max_distance: float = SUPPORT_DISTANCE,
) -> list[SupportCandidate]:
    """Eligible finger parts close enough to the object to hypothesize
    contact."""
    out = []
    for pid, hull in part_hulls:
        dist, on_part, on_obj = gjk_closest_points(hull.vertices, object_hull.vertices)
        if dist < max_distance:
            out.append(SupportCandidate(pid, dist, on_part, on_obj))
    out.sort(key=lambda c: c.part_id)
    return out


@dataclass
class SupportCombination:
    candidates: list[SupportCandidate]
    displacement: float

    @property
    def part_ids(self) -> tuple[int, ...]:
        return tuple(c.part_id for c in self.candidates)


def select_support_combination(
    candidates: list[SupportCandidate],
    part_hulls: dict[int, HullMesh],
    scene: RigidBodyScene,
    min_size: int = 2,
    max_size: int = 4,
    press_depth: float = CONTACT_EPS,
) -> tuple[SupportCombination | None, list[SupportCombination]]:
    """Try every 2..4-candidate subset: translate those parts onto the object
    surface, simulate, and keep the subset moving the object least.

    Ties keep the earlier (smaller, lexicographically lower) subset.  Returns
    (best or None, all evaluated combinations).
    """
    evaluated: list[SupportCombination] = []
    best: SupportCombination | None = None
    base_statics = list(scene.statics)
    for size in range(min_size, max_size + 1):
        for combo in combinations(candidates, size):
            moved = set(c.part_id for c in combo)
            statics = [s for s in base_statics]
            for c in combo:
                hull = part_hulls[c.part_id]
                gap = c.point_on_object - c.point_on_part
                gap_len = np.linalg.norm(gap)
                if gap_len > 1e-12:
                    shift = gap * (1.0 + press_depth / gap_len)
                else:
                    shift = gap
                statics.append(
                    StaticBody(
                        hull.translated(shift),
                        friction=scene.object_friction,
                        restitution=DEFAULT_STATIC_RESTITUTION,
                        name=f"part{c.part_id}",
                    )
                )
            trial = RigidBodyScene(
                scene.object_hull,
                statics,
                object_mass=scene.object_mass,
                object_friction=scene.object_friction,
                object_restitution=scene.object_restitution,
                gravity=scene.gravity,
            )
            report = simulate_drop(trial)
            sc = SupportCombination(list(combo), report.displacement)
            evaluated.append(sc)
            if best is None or sc.displacement < best.displacement:
                best = sc
    return best, evaluated


def physics_correspondences(
    combination: SupportCombination,
    part_vertices: dict[int, tuple[np.ndarray, np.ndarray]],
    object_hull: HullMesh,
    metric: str = "point_to_point",
    gamma_ph: float = 10.0,
):
    """One contact correspondence per selected part: its closest mesh vertex
    is pulled to the object's closest surface point.

    ``part_vertices`` maps part id -> (global vertex ids, posed positions).
    """
    from .data_terms import P2PLANE, PointCorrespondence

    out = []
    w = np.sqrt(gamma_ph)
    for cand in combination.candidates:
        ids, pos = part_vertices[cand.part_id]
        k = int(np.argmin(np.linalg.norm(pos - cand.point_on_object, axis=1)))
        normal = None
        if metric == P2PLANE:
            f = object_hull.deepest_face(cand.point_on_object)
            normal = object_hull.face_normals[f]
        out.append(
            PointCorrespondence(
                int(ids[k]),
                cand.point_on_object,
                normal,
                metric=metric,
                weight=w,
                source="physics",
            )
        )
    return out
