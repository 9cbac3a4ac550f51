"""Skinned tracking models: mesh + skeleton + weights + annotations, and the
combination of several models into one jointly-optimized rig."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import TriangleMesh
from .kinematics import Joint, Pose, RigidTransform, Skeleton, forward_kinematics, lbs_deform
from .salient import FingertipRegion


@dataclass
class SkinnedModel:
    """One tracked entity (hand or object).

    ``part_of_vertex`` assigns each vertex to its dominant bone (used for
    physics part hulls); ``eligible_parts`` lists the bone ids allowed to act
    as grasp supports.
    """

    name: str
    mesh: TriangleMesh
    skeleton: Skeleton
    weights: np.ndarray  # (V, J)
    fingertips: list[FingertipRegion] = field(default_factory=list)
    eligible_parts: list[int] = field(default_factory=list)
    is_object: bool = False
    rest_transforms: list[RigidTransform] | None = None
    part_of_vertex: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        v, j = self.weights.shape
        if v != len(self.mesh.vertices) or j != len(self.skeleton.joints):
            raise ValueError("weights shape must be (n_vertices, n_joints)")
        sums = self.weights.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"weight row {bad} sums to {sums[bad]}")
        if self.rest_transforms is None:
            self.rest_transforms = [RigidTransform.identity() for _ in self.skeleton.joints]
        if self.part_of_vertex is None:
            self.part_of_vertex = np.argmax(self.weights, axis=1)
        else:
            self.part_of_vertex = np.asarray(self.part_of_vertex, dtype=int)

    @property
    def dof_count(self) -> int:
        return self.skeleton.dof_count

    @property
    def articulated(self) -> bool:
        return len(self.skeleton.revolute) > 0

    def zero_pose(self) -> Pose:
        return Pose(np.zeros(self.dof_count))

    def posed(self, pose, base_transforms=None):
        """(vertices, normals, transforms) at the given pose."""
        gs = forward_kinematics(self.skeleton, pose, base_transforms)
        verts, normals = lbs_deform(
            self.mesh.vertices,
            self.weights,
            self.rest_transforms,
            gs,
            rest_normals=self.mesh.vertex_normals,
        )
        return verts, normals, gs

    def part_vertex_ids(self, part: int) -> np.ndarray:
        return np.nonzero(self.part_of_vertex == part)[0]


@dataclass
class ModelSegment:
    """Bookkeeping for one source model inside a combined rig."""

    name: str
    vertex_slice: slice
    joint_offset: int
    dof_indices: np.ndarray  # combined dof index per source dof
    is_object: bool
    articulated: bool


def combine_models(models: list[SkinnedModel]) -> tuple[SkinnedModel, list[ModelSegment]]:
    """Stack models into one rig with a shared pose vector.

    Vertex ids, joint ids, fingertip regions, and part labels are offset into
    the combined numbering.  The combined skeleton keeps every model's roots,
    so the pose layout is (all root blocks in joint order, then all angles).
    """
    if not models:
        raise ValueError("need at least one model")
    if len(models) == 1:
        m = models[0]
        seg = ModelSegment(
            m.name, slice(0, len(m.mesh.vertices)), 0, np.arange(m.dof_count), m.is_object, m.articulated
        )
        return m, [seg]

    joints: list[Joint] = []
    verts = []
    tris = []
    norms = []
    fingertips: list[FingertipRegion] = []
    eligible: list[int] = []
    parts = []
    voff = 0
    segments: list[ModelSegment] = []
    for m in models:
        joff = len(joints)
        for j in m.skeleton.joints:
            joints.append(
                Joint(
                    j.id + joff,
                    j.parent + joff if j.parent != -1 else -1,
                    j.kind,
                    axis=j.axis,
                    anchor=j.anchor,
                    lower_limit=j.lower_limit,
                    upper_limit=j.upper_limit,
                    name=f"{m.name}.{j.name or j.id}",
                )
            )
        nv = len(m.mesh.vertices)
        verts.append(m.mesh.vertices)
        tris.append(m.mesh.triangles + voff)
        norms.append(m.mesh.vertex_normals)
        for tip in m.fingertips:
            fingertips.append(
                FingertipRegion(len(fingertips), tip.vertex_ids + voff)
            )
        eligible.extend(p + joff for p in m.eligible_parts)
        parts.append(m.part_of_vertex + joff)
        segments.append(
            ModelSegment(m.name, slice(voff, voff + nv), joff, np.empty(0, dtype=int), m.is_object, m.articulated)
        )
        voff += nv

    skeleton = Skeleton(joints)
    nj = len(joints)
    weights = np.zeros((voff, nj))
    for m, seg in zip(models, segments):
        weights[seg.vertex_slice, seg.joint_offset : seg.joint_offset + len(m.skeleton.joints)] = m.weights

    # per-model dof map into the combined layout
    for m, seg in zip(models, segments):
        idx = []
        for r in m.skeleton.roots:
            s = skeleton.root_dof_slice(r + seg.joint_offset)
            idx.extend(range(s.start, s.stop))
        for j in m.skeleton.revolute:
            idx.append(skeleton.angle_dof_index(j + seg.joint_offset))
        seg.dof_indices = np.array(idx, dtype=int)

    mesh = TriangleMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(norms))
    combined = SkinnedModel(
        "+".join(m.name for m in models),
        mesh,
        skeleton,
        weights,
        fingertips=fingertips,
        eligible_parts=eligible,
        is_object=False,
        part_of_vertex=np.concatenate(parts),
    )
    return combined, segments


def split_pose(segments: list[ModelSegment], theta: np.ndarray) -> list[np.ndarray]:
    return [np.asarray(theta)[seg.dof_indices] for seg in segments]


def merge_poses(segments: list[ModelSegment], poses: list[np.ndarray], dof_count: int) -> np.ndarray:
    out = np.zeros(dof_count)
    for seg, p in zip(segments, poses):
        out[seg.dof_indices] = p
    return out
