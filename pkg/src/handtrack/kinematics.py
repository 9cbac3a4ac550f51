"""Twist kinematics: exponential maps, forward kinematics, skinning, pose Jacobians.

Rigid motion is parameterized by twists.  A revolute joint contributes one
angle; a root (free-floating) joint contributes 6 twist coordinates laid out
as (u1, u2, u3, w1, w2, w3) = (translational, rotational).  All lengths are
millimeters, all angles radians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-9


class InvalidTwistError(ValueError):
    """Rotation axis of a twist is neither zero nor unit length."""


class PoseLengthError(ValueError):
    """Pose vector length does not match the skeleton's DoF count."""


def _skew(v):
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class Twist:
    """Screw motion: unit rotation axis ``omega``, translational part ``u``,
    magnitude ``theta``.  A pure translation has ``omega == 0`` exactly."""

    omega: np.ndarray
    u: np.ndarray
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        n = np.linalg.norm(self.omega)
        if n != 0.0 and abs(n - 1.0) > UNIT_TOL:
            raise InvalidTwistError(f"rotation axis norm {n} is neither 0 nor 1")

    def scaled(self, theta: float) -> "Twist":
        return Twist(self.omega, self.u, theta)


@dataclass(frozen=True)
class RigidTransform:
    """Element of SE(3): rotation matrix plus translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Joint:
    """One node of the kinematic forest.

    ``kind`` is ``"root"`` (6 free twist coordinates) or ``"revolute"``
    (one angle about ``axis`` through ``anchor``, both in rest-model
    coordinates).  Limits apply to the unwrapped revolute angle.
    """

    id: int
    parent: int  # -1 for roots
    kind: str
    axis: np.ndarray = field(default_factory=lambda: np.zeros(3))
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    lower_limit: float = -np.pi
    upper_limit: float = np.pi
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        if self.kind not in ("root", "revolute"):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        if self.kind == "revolute":
            n = np.linalg.norm(self.axis)
            if abs(n - 1.0) > 1e-6:
                raise ValueError(f"revolute joint {self.id} axis must be unit, got norm {n}")
        if self.lower_limit > self.upper_limit:
            raise ValueError(f"joint {self.id}: lower limit exceeds upper limit")

    def rest_twist(self) -> Twist:
        """Unit twist of the joint in rest coordinates (u = anchor x axis)."""
        if self.kind != "revolute":
            raise ValueError("rest twist is defined for revolute joints only")
        return Twist(self.axis, np.cross(self.anchor, self.axis))


class Skeleton:
    """Ordered joint forest with a fixed DoF layout.

    Layout of a pose vector: a 6-coordinate block per root joint (in joint
    order), then one angle per revolute joint (in joint order).
    """

    def __init__(self, joints: list[Joint]):
        self.joints = list(joints)
        for i, j in enumerate(self.joints):
            if j.id != i:
                raise ValueError("joint ids must equal their list index")
            if j.kind == "root":
                if j.parent != -1:
                    raise ValueError(f"root joint {i} must have parent -1")
            else:
                if not (0 <= j.parent < i):
                    raise ValueError(
                        f"joint {i}: parent {j.parent} must precede it (forest, topological order)"
                    )
        self.roots = [j.id for j in self.joints if j.kind == "root"]
        self.revolute = [j.id for j in self.joints if j.kind == "revolute"]
        if not self.roots:
            raise ValueError("skeleton needs at least one root joint")
        self.dof_count = 6 * len(self.roots) + len(self.revolute)

        # dof bookkeeping
        self._root_block = {r: 6 * k for k, r in enumerate(self.roots)}
        self._angle_index = {j: 6 * len(self.roots) + k for k, j in enumerate(self.revolute)}

        # ancestor_mask[k, j] == True iff joint k is j or an ancestor of j
        n = len(self.joints)
        mask = np.zeros((n, n), dtype=bool)
        for j in range(n):
            k = j
            while k != -1:
                mask[k, j] = True
                k = self.joints[k].parent
        self._ancestor_mask = mask

        # dof -> joint chain mask, shape (dof_count, n_joints)
        dm = np.zeros((self.dof_count, n), dtype=bool)
        for r in self.roots:
            dm[self._root_block[r] : self._root_block[r] + 6, :] = mask[r]
        for j in self.revolute:
            dm[self._angle_index[j], :] = mask[j]
        self._dof_chain_mask = dm

    def root_dof_slice(self, root_id: int) -> slice:
        s = self._root_block[root_id]
        return slice(s, s + 6)

    def angle_dof_index(self, joint_id: int) -> int:
        return self._angle_index[joint_id]

    def angle_dof_indices(self) -> np.ndarray:
        return np.array([self._angle_index[j] for j in self.revolute], dtype=int)

    def dof_chain_mask(self) -> np.ndarray:
        return self._dof_chain_mask

    def check_pose(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dof_count,):
            raise PoseLengthError(
                f"pose length {theta.shape} does not match dof_count {self.dof_count}"
            )
        return theta


@dataclass
class Pose:
    """Pose vector for one skeleton (global twist coordinates + joint angles)."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)

    def copy(self) -> "Pose":
        return Pose(self.theta.copy())


def rodrigues(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rotation matrix about a unit axis."""
    k = _skew(axis)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def exp_twist(t: Twist) -> RigidTransform:
    """Exponential map of a twist scaled by its theta.

    Pure translation (omega == 0) yields identity rotation and translation
    theta * u; otherwise the Rodrigues closed form with
    t = (theta*I + (1-cos)*K + (theta-sin)*K^2) u for K = skew(omega).
    """
    w = t.omega
    if np.linalg.norm(w) == 0.0:
        return RigidTransform(np.eye(3), t.theta * t.u)
    th = t.theta
    k = _skew(w)
    rot = np.eye(3) + np.sin(th) * k + (1.0 - np.cos(th)) * (k @ k)
    trans = (th * np.eye(3) + (1.0 - np.cos(th)) * k + (th - np.sin(th)) * (k @ k)) @ t.u
    return RigidTransform(rot, trans)


def exp_coords(xi: np.ndarray) -> RigidTransform:
    """Exponential map of unnormalized twist coordinates (u, w) in R^6."""
    xi = np.asarray(xi, dtype=float)
    u, w = xi[:3], xi[3:]
    th = np.linalg.norm(w)
    if th < 1e-12:
        return RigidTransform(np.eye(3), u.copy())
    return exp_twist(Twist(w / th, u / th, th))


def log_transform(g: RigidTransform) -> np.ndarray:
    """Inverse of exp_coords; principal branch with rotation angle in [0, pi]."""
    r = g.rotation
    cos_th = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    th = np.arccos(cos_th)
    if th < 1e-9:
        return np.concatenate([g.translation, np.zeros(3)])
    if np.pi - th < 1e-6:
        # axis from the symmetric part; sign fixed by the largest component
        a = np.sqrt(np.maximum(np.diag(r) - cos_th, 0.0) / (1.0 - cos_th))
        i = int(np.argmax(a))
        if a[i] == 0.0:
            a = np.array([1.0, 0.0, 0.0])
        else:
            a[(i + 1) % 3] = r[i, (i + 1) % 3] / (2.0 * a[i] * (1.0 - cos_th)) * (1.0 - cos_th)
            a[(i + 2) % 3] = r[i, (i + 2) % 3] / (2.0 * a[i] * (1.0 - cos_th)) * (1.0 - cos_th)
            a /= np.linalg.norm(a)
        axis = a
    else:
        axis = (
            np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
            / (2.0 * np.sin(th))
        )
    w = th * axis
    jl = _so3_left_jacobian(w)
    u = np.linalg.solve(jl, g.translation)
    return np.concatenate([u, w])


def _so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    th = np.linalg.norm(w)
    k = _skew(w)
    if th < 1e-8:
        return np.eye(3) + 0.5 * k + k @ k / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(th)) / th**2 * k
        + (th - np.sin(th)) / th**3 * (k @ k)
    )


def _se3_q_matrix(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Translation-rotation coupling block of the SE(3) left Jacobian."""
    th = np.linalg.norm(w)
    pu = _skew(u)
    pw = _skew(w)
    if th < 1e-6:
        return 0.5 * pu + (pw @ pu + pu @ pw) / 6.0
    t2, t3, t4, t5 = th**2, th**3, th**4, th**5
    c, s = np.cos(th), np.sin(th)
    a1 = (th - s) / t3
    a2 = (1.0 - t2 / 2.0 - c) / t4
    a3 = 0.5 * (a2 - 3.0 * (th - s - t3 / 6.0) / t5)
    return (
        0.5 * pu
        + a1 * (pw @ pu + pu @ pw + pw @ pu @ pw)
        - a2 * (pw @ pw @ pu + pu @ pw @ pw - 3.0 * pw @ pu @ pw)
        - a3 * (pw @ pu @ pw @ pw + pw @ pw @ pu @ pw)
    )


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    """6x6 left Jacobian of exp_coords at xi = (u, w):
    exp(xi + dxi) ~ exp(J @ dxi) * exp(xi) to first order."""
    xi = np.asarray(xi, dtype=float)
    u, w = xi[:3], xi[3:]
    jl = _so3_left_jacobian(w)
    q = _se3_q_matrix(u, w)
    out = np.zeros((6, 6))
    out[:3, :3] = jl
    out[:3, 3:] = q
    out[3:, 3:] = jl
    return out


def forward_kinematics(
    skeleton: Skeleton,
    pose: Pose | np.ndarray,
    base_transforms: dict[int, RigidTransform] | None = None,
) -> list[RigidTransform]:
    """World transform of every joint: T_j = T_parent(j) . exp(theta_j xi_j).

    Roots evaluate exp of their 6 pose coordinates composed onto an optional
    per-root base transform (identity by default).
    """
    theta = skeleton.check_pose(pose.theta if isinstance(pose, Pose) else pose)
    out: list[RigidTransform] = []
    for j in skeleton.joints:
        if j.kind == "root":
            g = exp_coords(theta[skeleton.root_dof_slice(j.id)])
            if base_transforms and j.id in base_transforms:
                g = g.compose(base_transforms[j.id])
            out.append(g)
        else:
            ang = theta[skeleton.angle_dof_index(j.id)]
            local = exp_twist(j.rest_twist().scaled(ang))
            out.append(out[j.parent].compose(local))
    return out


class WeightRowError(ValueError):
    """A skinning-weight row does not sum to one."""


def lbs_deform(
    rest_vertices: np.ndarray,
    weights: np.ndarray,
    rest_transforms: list[RigidTransform],
    transforms: list[RigidTransform],
    rest_normals: np.ndarray | None = None,
):
    """Linear blend skinning: v = sum_j k_vj T_j T_j(0)^-1 v0.

    ``weights`` is (V, J) with rows summing to 1.  Normals, when given, are
    transformed by the blended rotation and renormalized.  Returns posed
    vertices, or (vertices, normals).
    """
    rest_vertices = np.asarray(rest_vertices, dtype=float)
    weights = np.asarray(weights, dtype=float)
    sums = weights.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise WeightRowError(f"weight row {bad} sums to {sums[bad]}")

    nj = weights.shape[1]
    blended = np.zeros((rest_vertices.shape[0], 3, 4))
    for j in range(nj):
        col = weights[:, j]
        if not np.any(col):
            continue
        m = (transforms[j].compose(rest_transforms[j].inverse())).matrix()[:3, :]
        blended += col[:, None, None] * m
    posed = np.einsum("vij,vj->vi", blended[:, :, :3], rest_vertices) + blended[:, :, 3]
    if rest_normals is None:
        return posed
    nrm = np.einsum("vij,vj->vi", blended[:, :, :3], np.asarray(rest_normals, dtype=float))
    ln = np.linalg.norm(nrm, axis=1)
    ln[ln == 0.0] = 1.0
    return posed, nrm / ln[:, None]


def bone_point_positions(
    rest_points: np.ndarray,
    rest_transforms: list[RigidTransform],
    transforms: list[RigidTransform],
) -> np.ndarray:
    """Per-bone transformed positions y_vj = T_j T_j(0)^-1 v0, shape (V, J, 3)."""
    rest_points = np.asarray(rest_points, dtype=float)
    nj = len(transforms)
    out = np.empty((rest_points.shape[0], nj, 3))
    for j in range(nj):
        m = (transforms[j].compose(rest_transforms[j].inverse())).matrix()[:3, :]
        out[:, j, :] = rest_points @ m[:, :3].T + m[:, 3]
    return out


def dof_screws(
    skeleton: Skeleton,
    pose: Pose | np.ndarray,
    transforms: list[RigidTransform] | None = None,
    base_transforms: dict[int, RigidTransform] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """World-frame screw of every pose coordinate at the current pose.

    Returns (U, W), each (dof_count, 3), such that the velocity of a point y
    rigidly attached below coordinate k is W_k x y + U_k per unit coordinate.
    Root blocks use the SE(3) left Jacobian so the derivative is exact at any
    coordinate value, not only at zero increment.
    """
    theta = skeleton.check_pose(pose.theta if isinstance(pose, Pose) else pose)
    if transforms is None:
        transforms = forward_kinematics(skeleton, theta, base_transforms)
    nd = skeleton.dof_count
    us = np.zeros((nd, 3))
    ws = np.zeros((nd, 3))
    for j in skeleton.joints:
        if j.kind == "root":
            xi = theta[skeleton.root_dof_slice(j.id)]
            jac = se3_left_jacobian(xi)
            s = skeleton.root_dof_slice(j.id)
            us[s] = jac[:3, :].T
            ws[s] = jac[3:, :].T
        else:
            # screw in world frame: adjoint of the parent's world transform
            parent = transforms[j.parent]
            w = parent.rotation @ j.axis
            q = parent.apply(j.anchor)
            us[skeleton.angle_dof_index(j.id)] = np.cross(q, w)
            ws[skeleton.angle_dof_index(j.id)] = w
    return us, ws


def pose_jacobian(
    skeleton: Skeleton,
    pose: Pose | np.ndarray,
    rest_vertices: np.ndarray,
    weights: np.ndarray,
    rest_transforms: list[RigidTransform],
    vertex_ids: np.ndarray | None = None,
    base_transforms: dict[int, RigidTransform] | None = None,
    transforms: list[RigidTransform] | None = None,
) -> np.ndarray:
    """Analytic derivative of LBS-deformed vertices, shape (V, 3, dof_count).

    Exact for LBS: column k is W_k x b_vk + U_k * s_vk with partial blends
    b_vk = sum_{j below k} k_vj y_vj and partial weights s_vk.  Columns for
    coordinates not on any weighted bone's chain are zero.
    """
    theta = skeleton.check_pose(pose.theta if isinstance(pose, Pose) else pose)
    if transforms is None:
        transforms = forward_kinematics(skeleton, theta, base_transforms)
    rest_vertices = np.asarray(rest_vertices, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if vertex_ids is not None:
        rest_vertices = rest_vertices[vertex_ids]
        weights = weights[vertex_ids]

    y = bone_point_positions(rest_vertices, rest_transforms, transforms)  # (V, J, 3)
    us, ws = dof_screws(skeleton, theta, transforms)
    chain = skeleton.dof_chain_mask().astype(float)  # (D, J)

    wy = weights[:, :, None] * y  # (V, J, 3)
    b = np.einsum("dj,vjc->vdc", chain, wy)  # (V, D, 3)
    s = weights @ chain.T  # (V, D)
    jac = np.cross(ws[None, :, :], b) + us[None, :, :] * s[:, :, None]  # (V, D, 3)
    return np.transpose(jac, (0, 2, 1))
