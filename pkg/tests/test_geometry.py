import numpy as np
import pytest

from handtrack.geometry import (
    CameraIntrinsics,
    DepthFrame,
    EmptyMaskError,
    PluckerLine,
    bilateral_smooth_and_normals,
    depth_discontinuities,
    depth_to_cloud,
    distance_transform,
    nearest_neighbor_index,
    pixel_ray,
    render_depth,
)
from handtrack.meshes import icosphere, plane_grid

INTR = CameraIntrinsics(fx=525.0, fy=525.0, cx=32.0, cy=24.0, width=64, height=48)


def constant_frame(depth_mm, intr=INTR):
    return DepthFrame(np.full((intr.height, intr.width), float(depth_mm)), intr)


class TestDepthToCloud:
    def test_principal_point(self):
        intr = CameraIntrinsics(500.0, 500.0, 10.0, 8.0, 21, 17)
        d = np.zeros((17, 21))
        d[8, 10] = 1000.0
        cloud = depth_to_cloud(DepthFrame(d, intr))
        np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 1000.0]])

    def test_pinhole_by_hand(self):
        intr = CameraIntrinsics(10.0, 10.0, 5.0, 5.0, 16, 11)
        d = np.zeros((11, 16))
        d[5, 15] = 500.0  # px = cx + fx
        cloud = depth_to_cloud(DepthFrame(d, intr))
        np.testing.assert_allclose(cloud.points, [[500.0, 0.0, 500.0]])

    def test_all_invalid(self):
        cloud = depth_to_cloud(DepthFrame(np.zeros((INTR.height, INTR.width)), INTR))
        assert len(cloud) == 0

    def test_mask_respected(self):
        f = constant_frame(700.0)
        f.mask = np.zeros_like(f.depth, dtype=bool)
        f.mask[0, 0] = True
        assert len(depth_to_cloud(f)) == 1


class TestBilateralNormals:
    def test_constant_plane_normals(self):
        cloud = bilateral_smooth_and_normals(constant_frame(800.0))
        assert len(cloud) > 0
        np.testing.assert_allclose(cloud.normals, np.tile([0.0, 0.0, -1.0], (len(cloud), 1)), atol=1e-6)

    def test_step_edge_no_bleed(self):
        """1-D profile oracle: with range_sigma=30 a 500 mm step contributes
        weight exp(-500^2/(2*30^2)) ~ 1e-61, so depth 3+ px from the edge
        moves by far less than 1 mm."""
        intr = CameraIntrinsics(500.0, 500.0, 32.0, 5.0, 64, 11)
        d = np.full((11, 64), 500.0)
        d[:, 32:] = 1000.0
        cloud = bilateral_smooth_and_normals(DepthFrame(d, intr), spatial_sigma=3.0, range_sigma=30.0)
        h, w = d.shape
        xs = cloud.pixel_of_point % w
        smoothed = np.full(len(cloud), np.nan)
        # recover smoothed depth: z coordinate equals smoothed depth
        smoothed = cloud.points[:, 2]
        near = (xs <= 28) & (xs >= 3)
        assert np.abs(smoothed[near] - 500.0).max() < 1.0
        far = xs >= 35
        assert np.abs(smoothed[far] - 1000.0).max() < 1.0

    def test_slanted_plane_normal_within_1deg(self):
        intr = CameraIntrinsics(500.0, 500.0, 32.0, 24.0, 64, 48)
        pys, pxs = np.mgrid[0:48, 0:64]
        # plane z = 800 + 0.5 * x  =>  z = 800 + 0.5 * z*(px-cx)/fx
        # solve per pixel: z (1 - 0.5*(px-cx)/fx) = 800
        fac = 1.0 - 0.5 * (pxs - intr.cx) / intr.fx
        d = 800.0 / fac
        cloud = bilateral_smooth_and_normals(DepthFrame(d, intr), spatial_sigma=1.0, range_sigma=1e6)
        # analytic normal of plane x*0.5 - z + 800 = 0 oriented toward camera
        n_true = np.array([0.5, 0.0, -1.0])
        n_true /= np.linalg.norm(n_true)
        # clipped filter windows bias the border band; judge the interior
        xs = cloud.pixel_of_point % intr.width
        ys = cloud.pixel_of_point // intr.width
        interior = (xs >= 4) & (xs < intr.width - 4) & (ys >= 4) & (ys < intr.height - 4)
        dots = np.clip(cloud.normals[interior] @ n_true, -1, 1)
        angles = np.degrees(np.arccos(dots))
        assert angles.max() < 1.0


class TestRenderDepth:
    def test_single_triangle_pixel(self):
        intr = CameraIntrinsics(100.0, 100.0, 8.0, 8.0, 16, 16)
        # fronto-parallel triangle at z=500 covering pixel (8, 8)
        verts = np.array([[-10.0, -10.0, 500.0], [30.0, -10.0, 500.0], [-10.0, 30.0, 500.0]])
        frame, vis = render_depth(verts, np.array([[0, 1, 2]]), intr)
        assert frame.depth[8, 8] == pytest.approx(500.0)

    def test_nearer_triangle_wins(self):
        intr = CameraIntrinsics(100.0, 100.0, 8.0, 8.0, 16, 16)
        big = 60.0
        near = np.array([[-big, -big, 400.0], [big, -big, 400.0], [0.0, big, 400.0]])
        far = np.array([[-big, -big, 800.0], [big, -big, 800.0], [0.0, big, 800.0]])
        verts = np.vstack([near, far])
        frame, vis = render_depth(verts, np.array([[0, 1, 2], [3, 4, 5]]), intr)
        assert frame.depth[8, 8] == pytest.approx(400.0)
        assert not vis[3:].any()

    def test_sphere_roughly_half_visible(self):
        # visible cap fraction from distance d is (1 - r/d)/2, so keep r << d
        intr = CameraIntrinsics(525.0, 525.0, 160.0, 120.0, 320, 240)
        mesh = icosphere(radius=50.0, subdivisions=3, center=(0.0, 0.0, 800.0))
        _, vis = render_depth(mesh.vertices, mesh.triangles, intr)
        frac = vis.mean()
        assert 0.4 <= frac <= 0.6

    def test_roundtrip_points_on_plane(self):
        intr = CameraIntrinsics(525.0, 525.0, 160.0, 120.0, 320, 240)
        mesh = plane_grid(300.0, 300.0, 700.0, nx=8, ny=8)
        frame, _ = render_depth(mesh.vertices, mesh.triangles, intr)
        cloud = depth_to_cloud(frame)
        assert len(cloud) > 1000
        assert np.abs(cloud.points[:, 2] - 700.0).max() < 0.5

    def test_visibility_conservative(self):
        # no vertex flagged visible sits more than 2 mm behind the z-buffer
        intr = CameraIntrinsics(525.0, 525.0, 160.0, 120.0, 320, 240)
        mesh = icosphere(radius=80.0, subdivisions=3, center=(10.0, -5.0, 600.0))
        frame, vis = render_depth(mesh.vertices, mesh.triangles, intr)
        uv = intr.project(mesh.vertices[vis])
        px = np.rint(uv[:, 0]).astype(int)
        py = np.rint(uv[:, 1]).astype(int)
        zb = frame.depth[py, px]
        assert (zb > 0).all()
        assert (mesh.vertices[vis][:, 2] - zb).max() <= 2.0


class TestNearestNeighbor:
    def test_singleton(self):
        nn = nearest_neighbor_index(np.array([[1.0, 2.0, 3.0]]))
        assert nn.query(np.array([1.1, 2.0, 3.0]), radius=1.0) == 0
        assert nn.query(np.array([9.0, 9.0, 9.0]), radius=1.0) == -1

    def test_tie_lower_index(self):
        pts = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        nn = nearest_neighbor_index(pts)
        assert nn.query(np.zeros(3), radius=2.0) == 0
        nn2 = nearest_neighbor_index(pts[::-1].copy())
        assert nn2.query(np.zeros(3), radius=2.0) == 0

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(13)
        pts = rng.random((1000, 3)) * 100
        nn = nearest_neighbor_index(pts)
        qs = rng.random((100, 3)) * 100
        d, idx = nn.query_many(qs, radius=np.inf)
        for q, di, ii in zip(qs, d, idx):
            dd = np.linalg.norm(pts - q, axis=1)
            assert ii == int(np.argmin(dd))
            assert di == pytest.approx(dd.min())


class TestDepthDiscontinuities:
    def test_constant_empty(self):
        mask = depth_discontinuities(constant_frame(700.0))
        assert not mask.any()

    def test_vertical_step_bands(self):
        d = np.full((20, 20), 500.0)
        d[:, 10:] = 600.0
        intr = CameraIntrinsics(100.0, 100.0, 10.0, 10.0, 20, 20)
        mask = depth_discontinuities(DepthFrame(d, intr), jump_thresh=20.0)
        assert mask[:, 9].all() and mask[:, 10].all()
        assert not mask[:, :9].any() and not mask[:, 11:].any()

    def test_sphere_silhouette(self):
        intr = CameraIntrinsics(525.0, 525.0, 160.0, 120.0, 320, 240)
        mesh = icosphere(radius=80.0, subdivisions=3, center=(0.0, 0.0, 600.0))
        frame, _ = render_depth(mesh.vertices, mesh.triangles, intr)
        mask = depth_discontinuities(frame)
        ys, xs = np.nonzero(mask)
        assert len(ys) > 50
        # analytic occluding contour: radius where the view ray is tangent
        # to the sphere, projected from the tangent circle's 3D location
        r, zc = 80.0, 600.0
        sin_a = r / zc
        z_ring = zc - r * sin_a  # depth of the tangent ring
        r_ring = r * np.sqrt(1 - sin_a**2)
        px_radius = intr.fx * r_ring / z_ring
        rad = np.hypot(xs - intr.cx, ys - intr.cy)
        assert np.abs(rad - px_radius).max() <= 2.0


class TestDistanceTransform:
    def test_three_four_five(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[5, 5] = True
        dist, nearest = distance_transform(mask)
        assert dist[9, 8] == pytest.approx(5.0)  # dy=4, dx=3
        assert (nearest == 5 * 16 + 5).all()

    def test_all_marked(self):
        mask = np.ones((8, 8), dtype=bool)
        dist, nearest = distance_transform(mask)
        assert (dist == 0).all()
        np.testing.assert_array_equal(nearest, np.arange(64).reshape(8, 8))

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMaskError):
            distance_transform(np.zeros((4, 4), dtype=bool))

    def test_matches_bruteforce_random(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            mask = rng.random((64, 64)) < 0.02
            if not mask.any():
                mask[0, 0] = True
            dist, nearest = distance_transform(mask)
            ys, xs = np.nonzero(mask)
            ids = ys * 64 + xs
            pys, pxs = np.mgrid[0:64, 0:64]
            d2 = (pys.ravel()[:, None] - ys[None, :]) ** 2 + (pxs.ravel()[:, None] - xs[None, :]) ** 2
            bf_d = np.sqrt(d2.min(axis=1))
            # lowest-id tie rule: ids are sorted by np.nonzero order (row-major)
            bf_id = ids[np.argmin(d2, axis=1)]
            np.testing.assert_allclose(dist.ravel(), bf_d, atol=1e-9)
            np.testing.assert_array_equal(nearest.ravel(), bf_id)


class TestPixelRay:
    def test_principal_point(self):
        line = pixel_ray(INTR.cx, INTR.cy, INTR)
        np.testing.assert_allclose(line.d, [0.0, 0.0, 1.0])
        np.testing.assert_allclose(line.m, np.zeros(3))

    def test_consistent_with_backprojection(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            px = rng.uniform(0, INTR.width - 1)
            py = rng.uniform(0, INTR.height - 1)
            line = pixel_ray(px, py, INTR)
            x = INTR.backproject(np.array(px), np.array(py), np.array(700.0))
            res = np.cross(x, line.d) - line.m
            assert np.linalg.norm(res) <= 1e-6 * np.linalg.norm(x)

    def test_diagonal_pixel(self):
        line = pixel_ray(INTR.cx + INTR.fx, INTR.cy, INTR)
        np.testing.assert_allclose(line.d, np.array([1.0, 0.0, 1.0]) / np.sqrt(2))

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            PluckerLine(np.array([0.0, 0.0, 2.0]), np.zeros(3))
        with pytest.raises(ValueError):
            PluckerLine(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]))


class TestKernelParity:
    """The jitted and pure-NumPy kernel paths must agree exactly."""

    def test_raster_paths_agree(self):
        from handtrack._kernels import raster

        intr = CameraIntrinsics(200.0, 200.0, 40.0, 30.0, 80, 60)
        mesh = icosphere(radius=50.0, subdivisions=2, center=(0.0, 0.0, 300.0))
        v = mesh.vertices
        z = v[:, 2]
        xs = intr.fx * v[:, 0] / z + intr.cx
        ys = intr.fy * v[:, 1] / z + intr.cy
        a = np.full((60, 80), np.inf)
        b = np.full((60, 80), np.inf)
        raster._rasterize_loop(xs, ys, z.copy(), mesh.triangles, 80, 60, a)
        raster._rasterize_numpy(xs, ys, z.copy(), mesh.triangles, 80, 60, b)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)

    def test_bilateral_paths_agree(self):
        from handtrack._kernels import bilateral

        rng = np.random.default_rng(3)
        d = 500.0 + rng.standard_normal((40, 50)) * 5
        d[rng.random((40, 50)) < 0.1] = 0.0
        a = np.zeros_like(d)
        b = np.zeros_like(d)
        bilateral._bilateral_loop(d, 4, 1 / 18.0, 1 / 1800.0, a)
        bilateral._bilateral_numpy(d, 4, 1 / 18.0, 1 / 1800.0, b)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_tritri_paths_agree(self):
        from handtrack._kernels import tritri

        rng = np.random.default_rng(9)
        pa = rng.standard_normal((300, 3, 3))
        pb = rng.standard_normal((300, 3, 3)) * 0.8
        a = np.zeros(300, dtype=bool)
        b = np.zeros(300, dtype=bool)
        tritri._make_batch_loop(tritri._seg_tri_loop)(pa, pb, a)
        tritri._batch_numpy(pb.copy(), pa.copy(), b)  # symmetric test
        np.testing.assert_array_equal(a, b)
