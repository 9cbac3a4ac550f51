"""Procedural test models: capsule-segment hands, ball, box, and a pipe.

The hand is a palm box with capsule-segment fingers.  Each finger chain is
(abduction + flexion) at the knuckle followed by one flexion joint per
further segment; consecutive segment capsules are shortened by a small gap
so the rest pose is free of self-intersections.  The default configuration
(five fingers, five segments, one wrist joint) has 31 revolute joints and
37 DoF.
"""

from __future__ import annotations

import numpy as np

from ..geometry import TriangleMesh, vertex_normals
from ..kinematics import Joint, Skeleton
from ..meshes import box, capsule, icosphere
from ..model import SkinnedModel
from ..salient import FingertipRegion

SEGMENT_GAP = 0.3  # mm clearance on each side of a joint
BLEND_BAND = 3.0  # mm skinning blend half-width around interior joints
SEGMENT_TAPER = 0.12  # per-segment radius shrink; breaks slide symmetry

DEFAULT_SEGMENT_LENGTHS = (30.0, 25.0, 22.0, 20.0, 18.0)


def _finger_segment_mesh(radius: float, length: float) -> TriangleMesh:
    """Capsule occupying [SEGMENT_GAP, length - SEGMENT_GAP] along +y."""
    body = length - 2.0 * SEGMENT_GAP - 2.0 * radius
    if body <= 1.0:
        raise ValueError(f"segment length {length} too short for radius {radius}")
    m = capsule(radius, body, rings=3, segments=8)
    verts = m.vertices + np.array([0.0, SEGMENT_GAP + radius, 0.0])
    return TriangleMesh(verts, m.triangles)


def _tapered_palm(width: float, height: float, depth: float) -> TriangleMesh:
    """Palm box, 25% wider and thicker at the wrist than at the knuckles, so
    sliding the hand along its own axis changes the silhouette."""
    b = box((width, height, depth))
    verts = b.vertices.copy()
    t = (verts[:, 1] / height + 0.5)  # 0 at wrist edge, 1 at knuckles
    scale = 1.125 - 0.25 * t
    verts[:, 0] *= scale
    verts[:, 2] *= scale
    return TriangleMesh(verts, b.triangles)


def make_hand(
    n_fingers: int = 5,
    segments_per_finger: int = 5,
    finger_radius: float = 7.0,
    palm_size: tuple[float, float, float] = (80.0, 60.0, 24.0),
    finger_pitch: float | None = None,
    name: str = "hand",
) -> SkinnedModel:
    if not 2 <= n_fingers <= 5:
        raise ValueError("hand supports 2 to 5 fingers")
    if not 1 <= segments_per_finger <= 5:
        raise ValueError("1 to 5 segments per finger")
    lengths = DEFAULT_SEGMENT_LENGTHS[:segments_per_finger]
    pw, ph, pd = palm_size
    pitch = finger_pitch if finger_pitch is not None else 2.0 * finger_radius + 4.0

    joints: list[Joint] = [Joint(0, -1, "root", name="global")]
    wrist_anchor = np.array([0.0, -ph / 2.0, 0.0])
    joints.append(
        Joint(
            1,
            0,
            "revolute",
            axis=np.array([1.0, 0.0, 0.0]),
            anchor=wrist_anchor,
            lower_limit=np.radians(-60),
            upper_limit=np.radians(60),
            name="wrist",
        )
    )
    wrist_id = 1

    verts_blocks = []
    tris_blocks = []
    weight_rows = []  # (vertex range, joint id pairs with weights)
    part_ids = []
    fingertip_sets: list[np.ndarray] = []
    eligible: list[int] = []

    palm = _tapered_palm(pw, ph, pd)
    verts_blocks.append(palm.vertices)
    tris_blocks.append(palm.triangles)
    weight_rows.append(("solid", wrist_id, None, None))
    part_ids.append(np.full(len(palm.vertices), wrist_id))
    voff = len(palm.vertices)

    for f in range(n_fingers):
        base_x = (f - (n_fingers - 1) / 2.0) * pitch
        base = np.array([base_x, ph / 2.0, 0.0])
        abduct_id = len(joints)
        joints.append(
            Joint(
                abduct_id,
                wrist_id,
                "revolute",
                axis=np.array([0.0, 0.0, 1.0]),
                anchor=base,
                lower_limit=np.radians(-30),
                upper_limit=np.radians(30),
                name=f"f{f}_abduct",
            )
        )
        parent = abduct_id
        y = ph / 2.0
        for s in range(segments_per_finger):
            anchor = np.array([base_x, y, 0.0])
            flex_id = len(joints)
            joints.append(
                Joint(
                    flex_id,
                    parent,
                    "revolute",
                    axis=np.array([1.0, 0.0, 0.0]),
                    anchor=anchor,
                    lower_limit=np.radians(-45),
                    upper_limit=np.radians(110),
                    name=f"f{f}_flex{s}",
                )
            )
            seg = _finger_segment_mesh(finger_radius * (1.0 - SEGMENT_TAPER * s), lengths[s])
            seg_verts = seg.vertices + np.array([base_x, y, 0.0])
            verts_blocks.append(seg_verts)
            tris_blocks.append(seg.triangles + voff)
            n_seg = len(seg_verts)
            # blend with the previous segment's bone around the joint anchor
            prev_bone = flex_id - 1 if s > 0 else None
            weight_rows.append(("blend", flex_id, prev_bone, (voff, y)))
            part_ids.append(np.full(n_seg, flex_id))
            if s == segments_per_finger - 1:
                tip_y = y + lengths[s] * 0.55
                sel = np.nonzero(seg_verts[:, 1] >= tip_y)[0] + voff
                fingertip_sets.append(sel)
            if s >= segments_per_finger - 2:
                eligible.append(flex_id)
            voff += n_seg
            parent = flex_id
            y += lengths[s]

    vertices = np.concatenate(verts_blocks)
    triangles = np.concatenate(tris_blocks)
    skeleton = Skeleton(joints)
    weights = np.zeros((len(vertices), len(joints)))
    cursor = 0
    for block, row in zip(verts_blocks, weight_rows):
        n = len(block)
        kind, bone, prev_bone, meta = row
        if kind == "solid" or prev_bone is None:
            weights[cursor : cursor + n, bone] = 1.0
        else:
            _, anchor_y = meta
            ys = block[:, 1]
            t = np.clip((ys - (anchor_y - BLEND_BAND)) / (2.0 * BLEND_BAND), 0.0, 1.0)
            weights[cursor : cursor + n, bone] = t
            weights[cursor : cursor + n, prev_bone] = 1.0 - t
        cursor += n

    mesh = TriangleMesh(vertices, triangles)
    tips = [FingertipRegion(i, ids) for i, ids in enumerate(fingertip_sets)]
    return SkinnedModel(
        name,
        mesh,
        skeleton,
        weights,
        fingertips=tips,
        eligible_parts=eligible,
        is_object=False,
        part_of_vertex=np.concatenate(part_ids),
    )


def make_ball(radius: float = 30.0, subdivisions: int = 2, name: str = "ball") -> SkinnedModel:
    mesh = icosphere(radius=radius, subdivisions=subdivisions)
    skeleton = Skeleton([Joint(0, -1, "root", name="global")])
    weights = np.ones((len(mesh.vertices), 1))
    return SkinnedModel(name, mesh, skeleton, weights, is_object=True)


def make_box_object(size: float = 50.0, name: str = "cube") -> SkinnedModel:
    mesh = box((size, size, size))
    skeleton = Skeleton([Joint(0, -1, "root", name="global")])
    weights = np.ones((len(mesh.vertices), 1))
    return SkinnedModel(name, mesh, skeleton, weights, is_object=True)


def make_pipe(
    radius: float = 12.0, segment_length: float = 60.0, name: str = "pipe"
) -> SkinnedModel:
    """Three collinear capsule segments, one revolute joint at 2/3 length:
    the root bone carries the first two segments, the child the third."""
    joints = [
        Joint(0, -1, "root", name="global"),
        Joint(
            1,
            0,
            "revolute",
            axis=np.array([1.0, 0.0, 0.0]),
            anchor=np.array([0.0, 2.0 * segment_length, 0.0]),
            lower_limit=np.radians(-80),
            upper_limit=np.radians(80),
            name="bend",
        ),
    ]
    blocks = []
    tris = []
    voff = 0
    for s in range(3):
        seg = _finger_segment_mesh(radius, segment_length)
        blocks.append(seg.vertices + np.array([0.0, s * segment_length, 0.0]))
        tris.append(seg.triangles + voff)
        voff += len(seg.vertices)
    vertices = np.concatenate(blocks)
    mesh = TriangleMesh(vertices, np.concatenate(tris))
    weights = np.zeros((len(vertices), 2))
    ys = vertices[:, 1]
    t = np.clip((ys - (2.0 * segment_length - BLEND_BAND)) / (2.0 * BLEND_BAND), 0.0, 1.0)
    weights[:, 1] = t
    weights[:, 0] = 1.0 - t
    return SkinnedModel(
        name, mesh, Skeleton(joints), weights, is_object=True, part_of_vertex=(t > 0.5).astype(int)
    )
