import numpy as np
import pytest

from handtrack.kinematics import (
    InvalidTwistError,
    Joint,
    Pose,
    PoseLengthError,
    RigidTransform,
    Skeleton,
    Twist,
    WeightRowError,
    exp_coords,
    exp_twist,
    forward_kinematics,
    lbs_deform,
    log_transform,
    pose_jacobian,
    se3_left_jacobian,
)


def rodrigues_oracle(axis, theta):
    """Independent Rodrigues evaluation: rotate basis vectors explicitly."""
    axis = np.asarray(axis, dtype=float)
    out = np.empty((3, 3))
    for i, e in enumerate(np.eye(3)):
        par = np.dot(e, axis) * axis
        perp = e - par
        out[:, i] = par + np.cos(theta) * perp + np.sin(theta) * np.cross(axis, e)
    return out


def random_skeleton(rng, n_rev=4):
    joints = [Joint(0, -1, "root")]
    for k in range(n_rev):
        ax = rng.standard_normal(3)
        ax /= np.linalg.norm(ax)
        joints.append(
            Joint(k + 1, k, "revolute", axis=ax, anchor=rng.standard_normal(3) * 50.0)
        )
    return Skeleton(joints)


def identity_rests(skeleton):
    return [RigidTransform.identity() for _ in skeleton.joints]


class TestExpTwist:
    def test_zero_theta_is_identity(self):
        t = Twist(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0, 3.0]), 0.0)
        g = exp_twist(t)
        np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(g.translation, np.zeros(3), atol=1e-15)

    def test_pure_translation(self):
        g = exp_twist(Twist(np.zeros(3), np.array([1.0, 2.0, 3.0]), 1.0))
        np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(g.translation, [1.0, 2.0, 3.0])

    def test_quarter_turn_about_z(self):
        g = exp_twist(Twist(np.array([0.0, 0.0, 1.0]), np.zeros(3), np.pi / 2))
        np.testing.assert_allclose(g.apply(np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(g.translation, np.zeros(3), atol=1e-12)

    def test_rotation_matches_rodrigues_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            ax = rng.standard_normal(3)
            ax /= np.linalg.norm(ax)
            th = rng.uniform(-np.pi, np.pi)
            g = exp_twist(Twist(ax, np.zeros(3), th))
            np.testing.assert_allclose(g.rotation, rodrigues_oracle(ax, th), atol=1e-12)

    def test_non_unit_axis_rejected(self):
        with pytest.raises(InvalidTwistError):
            Twist(np.array([0.0, 0.0, 2.0]), np.zeros(3), 1.0)

    def test_inverse_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            ax = rng.standard_normal(3)
            ax /= np.linalg.norm(ax)
            t = Twist(ax, rng.standard_normal(3), rng.uniform(-3, 3))
            g = exp_twist(t)
            gi = exp_twist(Twist(t.omega, t.u, -t.theta))
            prod = g.compose(gi)
            np.testing.assert_allclose(prod.rotation, np.eye(3), atol=1e-9)
            np.testing.assert_allclose(prod.translation, np.zeros(3), atol=1e-9)

    def test_same_axis_composition(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            ax = rng.standard_normal(3)
            ax /= np.linalg.norm(ax)
            u = rng.standard_normal(3)
            t1, t2 = rng.uniform(-2, 2, size=2)
            a = exp_twist(Twist(ax, u, t1)).compose(exp_twist(Twist(ax, u, t2)))
            b = exp_twist(Twist(ax, u, t1 + t2))
            np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-9)
            np.testing.assert_allclose(a.translation, b.translation, atol=1e-9)


class TestLogExp:
    def test_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            xi = rng.standard_normal(6) * np.array([100, 100, 100, 1, 1, 1])
            g = exp_coords(xi)
            g2 = exp_coords(log_transform(g))
            np.testing.assert_allclose(g2.rotation, g.rotation, atol=1e-9)
            np.testing.assert_allclose(g2.translation, g.translation, atol=1e-7)

    def test_left_jacobian_matches_fd(self):
        rng = np.random.default_rng(12)
        h = 1e-6
        for _ in range(20):
            xi = rng.standard_normal(6)
            jac = se3_left_jacobian(xi)
            for i in range(6):
                d = np.zeros(6)
                d[i] = h
                gp = exp_coords(xi + d).matrix()
                gm = exp_coords(xi - d).matrix()
                num = (gp - gm) / (2 * h) @ np.linalg.inv(exp_coords(xi).matrix())
                col = jac[:, i]
                expected = np.zeros((4, 4))
                expected[:3, :3] = np.array(
                    [[0, -col[5], col[4]], [col[5], 0, -col[3]], [-col[4], col[3], 0]]
                )
                expected[:3, 3] = col[:3]
                np.testing.assert_allclose(num, expected, atol=1e-5)


class TestForwardKinematics:
    def test_zero_pose_all_identity(self):
        rng = np.random.default_rng(0)
        sk = random_skeleton(rng)
        for g in forward_kinematics(sk, np.zeros(sk.dof_count)):
            np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-15)
            np.testing.assert_allclose(g.translation, np.zeros(3), atol=1e-15)

    def test_child_identity_composition(self):
        sk = Skeleton(
            [
                Joint(0, -1, "root"),
                Joint(1, 0, "revolute", axis=np.array([0.0, 0.0, 1.0]), anchor=np.zeros(3)),
            ]
        )
        theta = np.zeros(7)
        theta[5] = np.pi / 2  # rotation about z in the root block
        gs = forward_kinematics(sk, theta)
        np.testing.assert_allclose(gs[1].matrix(), gs[0].matrix(), atol=1e-12)

    def test_matches_hand_multiplied_matrices(self):
        sk = Skeleton(
            [
                Joint(0, -1, "root"),
                Joint(
                    1, 0, "revolute", axis=np.array([0.0, 0.0, 1.0]), anchor=np.array([10.0, 0.0, 0.0])
                ),
            ]
        )
        theta = np.zeros(7)
        theta[6] = np.pi
        g = forward_kinematics(sk, theta)[1]
        # oracle: R = rot_z(pi) about point (10,0,0): x -> (20,0,0) - x rotated
        r = rodrigues_oracle([0, 0, 1], np.pi)
        t = np.array([10.0, 0.0, 0.0]) - r @ np.array([10.0, 0.0, 0.0])
        np.testing.assert_allclose(g.rotation, r, atol=1e-12)
        np.testing.assert_allclose(g.translation, t, atol=1e-12)
        # the anchor stays fixed
        np.testing.assert_allclose(g.apply(np.array([10.0, 0.0, 0.0])), [10.0, 0.0, 0.0], atol=1e-12)

    def test_pose_length_checked(self):
        rng = np.random.default_rng(1)
        sk = random_skeleton(rng)
        with pytest.raises(PoseLengthError):
            forward_kinematics(sk, np.zeros(sk.dof_count + 1))

    def test_pure_function_bitwise(self):
        rng = np.random.default_rng(2)
        sk = random_skeleton(rng)
        theta = rng.standard_normal(sk.dof_count)
        a = forward_kinematics(sk, theta)
        b = forward_kinematics(sk, theta)
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.rotation, gb.rotation)
            assert np.array_equal(ga.translation, gb.translation)


class TestLbs:
    def test_rest_pose_unchanged(self):
        rng = np.random.default_rng(5)
        sk = random_skeleton(rng, n_rev=2)
        rests = identity_rests(sk)
        verts = rng.standard_normal((10, 3)) * 30
        w = rng.random((10, 3))
        w /= w.sum(axis=1, keepdims=True)
        posed = lbs_deform(verts, w, rests, rests)
        np.testing.assert_allclose(posed, verts, atol=1e-12)

    def test_half_half_blend_of_translation(self):
        rests = [RigidTransform.identity(), RigidTransform.identity()]
        moved = [RigidTransform.identity(), RigidTransform(np.eye(3), np.array([2.0, 0.0, 0.0]))]
        v = np.array([[0.0, 0.0, 0.0]])
        posed = lbs_deform(v, np.array([[0.5, 0.5]]), rests, moved)
        np.testing.assert_allclose(posed, [[1.0, 0.0, 0.0]], atol=1e-12)

    def test_single_bone_rotation(self):
        rests = [RigidTransform.identity()]
        g = exp_twist(Twist(np.array([0.0, 0.0, 1.0]), np.zeros(3), np.pi / 2))
        posed = lbs_deform(np.array([[1.0, 0.0, 0.0]]), np.array([[1.0]]), rests, [g])
        np.testing.assert_allclose(posed, [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_weight_row_validation(self):
        rests = [RigidTransform.identity()]
        with pytest.raises(WeightRowError):
            lbs_deform(np.zeros((1, 3)), np.array([[0.9]]), rests, rests)

    def test_partition_of_unity_rigid_motion(self):
        rng = np.random.default_rng(6)
        sk = random_skeleton(rng, n_rev=3)
        rests = identity_rests(sk)
        g = exp_coords(rng.standard_normal(6))
        moved = [g for _ in sk.joints]
        verts = rng.standard_normal((25, 3)) * 40
        w = rng.random((25, 4))
        w /= w.sum(axis=1, keepdims=True)
        posed, nrm = lbs_deform(verts, w, rests, moved, rest_normals=_unit_rows(rng, 25))
        np.testing.assert_allclose(posed, g.apply(verts), atol=1e-9)
        assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-12)


def _unit_rows(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fd_jacobian(sk, theta, verts, weights, rests, h=1e-5):
    """Central finite differences of the LBS-deformed vertices."""
    def f(th):
        gs = forward_kinematics(sk, th)
        return lbs_deform(verts, weights, rests, gs)

    base = f(theta)
    out = np.zeros((verts.shape[0], 3, theta.size))
    for i in range(theta.size):
        d = np.zeros_like(theta)
        d[i] = h
        out[:, :, i] = (f(theta + d) - f(theta - d)) / (2 * h)
    return base, out


class TestPoseJacobian:
    def test_root_translation_columns_identity(self):
        sk = Skeleton([Joint(0, -1, "root")])
        rests = identity_rests(sk)
        verts = np.array([[5.0, -3.0, 8.0]])
        w = np.array([[1.0]])
        jac = pose_jacobian(sk, np.zeros(6), verts, w, rests)
        np.testing.assert_allclose(jac[0][:, :3], np.eye(3), atol=1e-12)

    def test_matches_finite_differences_random(self):
        rng = np.random.default_rng(8)
        for trial in range(100):
            sk = random_skeleton(rng, n_rev=rng.integers(1, 5))
            rests = identity_rests(sk)
            verts = rng.standard_normal((6, 3)) * 60
            w = rng.random((6, len(sk.joints)))
            w /= w.sum(axis=1, keepdims=True)
            theta = rng.standard_normal(sk.dof_count) * 0.5
            jac = pose_jacobian(sk, theta, verts, w, rests)
            _, num = fd_jacobian(sk, theta, verts, w, rests)
            scale = max(1.0, np.abs(num).max())
            assert np.abs(jac - num).max() / scale < 1e-4, f"trial {trial}"

    def test_revolute_column_is_screw_derivative(self):
        axis = np.array([0.0, 1.0, 0.0])
        anchor = np.array([10.0, 0.0, 5.0])
        sk = Skeleton([Joint(0, -1, "root"), Joint(1, 0, "revolute", axis=axis, anchor=anchor)])
        rests = identity_rests(sk)
        verts = np.array([[30.0, 2.0, -4.0]])
        w = np.array([[0.0, 1.0]])  # rigidly attached below the joint
        jac = pose_jacobian(sk, np.zeros(7), verts, w, rests)
        expected = np.cross(axis, verts[0] - anchor)
        np.testing.assert_allclose(jac[0][:, 6], expected, atol=1e-12)

    def test_off_chain_columns_zero(self):
        # two independent chains under one root each
        joints = [
            Joint(0, -1, "root"),
            Joint(1, 0, "revolute", axis=np.array([1.0, 0.0, 0.0]), anchor=np.zeros(3)),
            Joint(2, 0, "revolute", axis=np.array([0.0, 1.0, 0.0]), anchor=np.zeros(3)),
        ]
        sk = Skeleton(joints)
        rests = identity_rests(sk)
        verts = np.array([[1.0, 2.0, 3.0]])
        w = np.array([[0.0, 1.0, 0.0]])  # on joint 1's bone only
        jac = pose_jacobian(sk, np.zeros(8), verts, w, rests)
        np.testing.assert_allclose(jac[0][:, 7], np.zeros(3), atol=1e-15)
