import numpy as np
import pytest

from handtrack.meshes import box, capsule, icosphere
from handtrack.physics import (
    DegenerateHullError,
    HullMesh,
    RigidBodyScene,
    StaticBody,
    SupportCandidate,
    convex_hull,
    gjk_closest_points,
    hull_closest_points,
    hull_volume,
    physics_correspondences,
    select_support_combination,
    simulate_drop,
    support_candidates,
)

GRAV = 9810.0


def hull_of(mesh_or_pts):
    pts = getattr(mesh_or_pts, "vertices", mesh_or_pts)
    return convex_hull(pts)


def ground_plane(y=0.0, size=2000.0, thickness=300.0, friction=3.0):
    # thick slab: one 0.1 s step falls g*dt^2 = 98 mm and there is no swept
    # collision test, so thin geometry would tunnel
    b = box((size, thickness, size), center=(0.0, y - thickness / 2, 0.0))
    return StaticBody(hull_of(b), friction=friction)


class TestConvexHull:
    def test_cube_corners(self):
        pts = np.array(
            [[x, y, z] for x in (0, 10.0) for y in (0, 10.0) for z in (0, 10.0)]
        )
        h = convex_hull(pts)
        assert len(h.vertices) == 8
        assert len(h.triangles) == 12
        assert hull_volume(h) == pytest.approx(1000.0)

    def test_interior_points_ignored(self):
        rng = np.random.default_rng(0)
        corners = np.array([[x, y, z] for x in (0, 10.0) for y in (0, 10.0) for z in (0, 10.0)])
        inner = rng.random((30, 3)) * 8 + 1
        h = convex_hull(np.vstack([corners, inner]))
        assert len(h.vertices) == 8
        assert hull_volume(h) == pytest.approx(1000.0)

    def test_containment(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((100, 3)) * 40
        h = convex_hull(pts)
        assert h.signed_distance(pts).max() <= 1e-9

    def test_degenerate_rejected(self):
        flat = np.zeros((10, 3))
        flat[:, :2] = np.random.default_rng(2).random((10, 2))
        with pytest.raises(DegenerateHullError):
            convex_hull(flat)

    def test_outward_faces(self):
        h = hull_of(icosphere(radius=10.0, subdivisions=1))
        c = h.centroid()
        for f, tri in enumerate(h.triangles):
            fc = h.vertices[tri].mean(axis=0)
            assert np.dot(h.face_normals[f], fc - c) > 0


class TestHullDistance:
    def test_gjk_matches_minkowski_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(40):
            a = convex_hull(rng.standard_normal((12, 3)) * 20)
            b = convex_hull(rng.standard_normal((12, 3)) * 20 + rng.uniform(-60, 60, 3))
            d_gjk, pa, pb = gjk_closest_points(a.vertices, b.vertices)
            d_mk, _, _ = hull_closest_points(a, b)
            assert d_gjk == pytest.approx(d_mk, abs=1e-6), f"trial {trial}"
            if d_gjk > 1e-9:
                assert np.linalg.norm(pa - pb) == pytest.approx(d_gjk, abs=1e-6)

    def test_witness_points_on_hulls(self):
        a = hull_of(box((10.0, 10, 10), center=(0, 0, 0)))
        b = hull_of(box((10.0, 10, 10), center=(25.0, 0, 0)))
        d, pa, pb = gjk_closest_points(a.vertices, b.vertices)
        assert d == pytest.approx(15.0)
        assert pa[0] == pytest.approx(5.0)
        assert pb[0] == pytest.approx(20.0)


class TestSimulateDrop:
    def test_resting_sphere_stable(self):
        sph = icosphere(radius=50.0, subdivisions=2, center=(0.0, 50.0, 0.0))
        lowest = sph.vertices[:, 1].min()
        scene = RigidBodyScene(hull_of(sph), [ground_plane(y=lowest)])
        rep = simulate_drop(scene)
        assert rep.stable
        assert rep.displacement < 3.0

    def test_free_sphere_closed_form(self):
        sph = icosphere(radius=50.0, subdivisions=2, center=(0.0, 0.0, 0.0))
        scene = RigidBodyScene(hull_of(sph), [])
        rep = simulate_drop(scene)
        expected = GRAV * 0.1**2 * (35 * 36 / 2)  # sum_{k<=35} g dt^2 k
        assert rep.displacement == pytest.approx(expected, rel=0.01)
        assert not rep.stable

    def test_pinched_sphere_held_by_friction(self):
        # plates squeeze 45 mm into a 100 mm sphere: contact pressure
        # (depth/dt) * mu on both sides exceeds the per-step gravity kick
        r = 100.0
        sph = icosphere(radius=r, subdivisions=2, center=(0.0, 0.0, 0.0))
        squeeze = 45.0
        plate_x = r - squeeze
        left = StaticBody(
            hull_of(box((40.0, 400.0, 400.0), center=(-plate_x - 20.0, 0, 0))), friction=1.2
        )
        right = StaticBody(
            hull_of(box((40.0, 400.0, 400.0), center=(plate_x + 20.0, 0, 0))), friction=1.2
        )
        scene = RigidBodyScene(hull_of(sph), [left, right], object_friction=1.2)
        rep = simulate_drop(scene)
        assert rep.stable, f"displacement {rep.displacement}"

    def test_unstable_without_friction(self):
        r = 100.0
        sph = icosphere(radius=r, subdivisions=2, center=(0.0, 0.0, 0.0))
        plate_x = r - 45.0
        mk = lambda cx: StaticBody(
            hull_of(box((40.0, 400.0, 400.0), center=(cx, 0, 0))), friction=0.0
        )
        scene = RigidBodyScene(
            hull_of(sph), [mk(-plate_x - 20.0), mk(plate_x + 20.0)], object_friction=0.0
        )
        rep = simulate_drop(scene)
        assert not rep.stable

    def test_deterministic(self):
        sph = icosphere(radius=50.0, subdivisions=2, center=(0.0, 50.0, 0.0))
        scene = RigidBodyScene(hull_of(sph), [ground_plane(y=0.0)])
        a = simulate_drop(scene, record_trajectory=True)
        b = simulate_drop(scene, record_trajectory=True)
        assert a.displacement == b.displacement
        assert np.array_equal(a.trajectory, b.trajectory)

    def test_support_below_within_1mm_is_stable(self):
        sph = icosphere(radius=50.0, subdivisions=2, center=(0.0, 50.0, 0.0))
        lowest = sph.vertices[:, 1].min()
        scene = RigidBodyScene(hull_of(sph), [ground_plane(y=lowest - 1.0)])
        assert simulate_drop(scene).stable

    def test_no_support_within_1m_unstable(self):
        sph = icosphere(radius=50.0, subdivisions=2, center=(0.0, 50.0, 0.0))
        scene = RigidBodyScene(hull_of(sph), [ground_plane(y=-1100.0)])
        assert not simulate_drop(scene).stable


class TestSupportCandidates:
    def test_touching_part_kept(self):
        obj = hull_of(icosphere(radius=30.0, subdivisions=2, center=(0.0, 0.0, 0.0)))
        part = hull_of(box((10.0, 10, 10), center=(35.0, 0.0, 0.0)))
        cands = support_candidates([(0, part)], obj)
        assert len(cands) == 1
        assert cands[0].distance < 1.0

    def test_far_part_excluded(self):
        obj = hull_of(icosphere(radius=30.0, subdivisions=2))
        part = hull_of(box((10.0, 10, 10), center=(85.0, 0.0, 0.0)))
        assert support_candidates([(0, part)], obj) == []

    def test_capsule_sphere_analytic_distance(self):
        # capsule radius 10 along y, sphere radius 30, axis-to-center gap
        # chosen for a 7 mm surface distance
        cap = capsule(radius=10.0, length=40.0, rings=10, segments=40)
        sphere = icosphere(radius=30.0, subdivisions=4, center=(47.0, 20.0, 0.0))
        cands = support_candidates([(0, hull_of(cap))], hull_of(sphere), max_distance=20.0)
        assert len(cands) == 1
        assert cands[0].distance == pytest.approx(7.0, abs=0.1)


class TestSelectSupportCombination:
    def _scene_and_candidates(self, n):
        obj_mesh = icosphere(radius=30.0, subdivisions=2, center=(0.0, 0.0, 0.0))
        obj = hull_of(obj_mesh)
        parts = {}
        cands = []
        for i in range(n):
            ang = 2 * np.pi * i / max(n, 1)
            center = np.array([38.0 * np.cos(ang), -20.0, 38.0 * np.sin(ang)])
            h = hull_of(box((12.0, 12.0, 12.0), center=center))
            parts[i] = h
            d, pp, po = gjk_closest_points(h.vertices, obj.vertices)
            cands.append(SupportCandidate(i, d, pp, po))
        scene = RigidBodyScene(obj, [])
        return scene, parts, cands

    def test_fewer_than_two_candidates(self):
        scene, parts, cands = self._scene_and_candidates(1)
        best, evaluated = select_support_combination(cands, parts, scene)
        assert best is None
        assert evaluated == []

    def test_two_candidates_one_simulation(self):
        scene, parts, cands = self._scene_and_candidates(2)
        best, evaluated = select_support_combination(cands, parts, scene)
        assert len(evaluated) == 1

    def test_five_candidates_25_simulations(self):
        scene, parts, cands = self._scene_and_candidates(5)
        best, evaluated = select_support_combination(cands, parts, scene)
        assert len(evaluated) == 10 + 10 + 5
        assert best is not None
        assert best.displacement == min(c.displacement for c in evaluated)


class TestPhysicsCorrespondences:
    def test_residual_magnitude_and_count(self):
        obj = hull_of(icosphere(radius=30.0, subdivisions=2))
        ids_a = np.array([100, 101])
        pos_a = np.array([[38.0, 0.0, 0.0], [40.0, 2.0, 0.0]])
        ids_b = np.array([200, 201])
        pos_b = np.array([[-38.0, 0.0, 0.0], [-40.0, -2.0, 0.0]])
        cands = [
            SupportCandidate(0, 8.0, np.array([38.0, 0.0, 0.0]), np.array([30.0, 0.0, 0.0])),
            SupportCandidate(1, 8.0, np.array([-38.0, 0.0, 0.0]), np.array([-30.0, 0.0, 0.0])),
        ]
        from handtrack.physics import SupportCombination

        combo = SupportCombination(cands, 0.0)
        corrs = physics_correspondences(
            combo, {0: (ids_a, pos_a), 1: (ids_b, pos_b)}, obj, gamma_ph=10.0
        )
        assert len(corrs) == 2
        r = corrs[0].weight * (pos_a[0] - corrs[0].target)
        np.testing.assert_allclose(r, np.sqrt(10.0) * np.array([8.0, 0.0, 0.0]))

    def test_touching_part_zero_residual(self):
        obj = hull_of(icosphere(radius=30.0, subdivisions=2))
        ids = np.array([7])
        pos = np.array([[30.0, 0.0, 0.0]])
        cand = SupportCandidate(0, 0.0, np.array([30.0, 0.0, 0.0]), np.array([30.0, 0.0, 0.0]))
        from handtrack.physics import SupportCombination

        corrs = physics_correspondences(SupportCombination([cand], 0.0), {0: (ids, pos)}, obj)
        assert np.linalg.norm(pos[0] - corrs[0].target) == 0.0
