"""Synthetic sequence generation: smooth pose trajectories, noisy depth
renders, ground-truth joints, and fingertip detections derived from the
ground truth."""

from __future__ import annotations

import numpy as np

from ..geometry import CameraIntrinsics, DepthFrame, render_depth
from ..model import SkinnedModel
from ..solver import joint_positions


def make_trajectory(
    model: SkinnedModel,
    n_frames: int,
    seed: int = 0,
    max_joint_step_deg: float = 2.0,
    max_global_step_mm: float = 5.0,
    start_pose: np.ndarray | None = None,
    joint_amplitude_deg: float = 25.0,
    global_amplitude_mm: float = 40.0,
) -> np.ndarray:
    """Smooth sinusoidal motion bounded per frame in joint and global speed.

    Returns (n_frames, dof) pose rows starting at ``start_pose``.
    """
    rng = np.random.default_rng(seed)
    sk = model.skeleton
    theta0 = np.zeros(sk.dof_count) if start_pose is None else np.asarray(start_pose, dtype=float)
    out = np.tile(theta0, (n_frames, 1))
    t = np.arange(n_frames)

    for k, j in enumerate(sk.revolute):
        joint = sk.joints[j]
        span = joint.upper_limit - joint.lower_limit
        base = theta0[sk.angle_dof_index(j)]
        amp_limit = min(
            np.radians(joint_amplitude_deg),
            base - joint.lower_limit - 0.05 * span,
            joint.upper_limit - base - 0.05 * span,
        )
        # the start-anchored sinusoid sweeps up to 2*amp from the base
        amp = rng.uniform(0.3, 1.0) * max(amp_limit, 0.0) / 2.0
        max_step = np.radians(max_joint_step_deg)
        omega = min(rng.uniform(0.05, 0.25), max_step / max(amp, 1e-9))
        phase = rng.uniform(0, 2 * np.pi)
        out[:, sk.angle_dof_index(j)] = base + amp * (np.sin(omega * t + phase) - np.sin(phase))

    for r in sk.roots:
        s = sk.root_dof_slice(r)
        for axis in range(3):  # translation channels
            amp = rng.uniform(0.3, 1.0) * global_amplitude_mm
            omega = min(rng.uniform(0.05, 0.2), max_global_step_mm / max(amp, 1e-9) / np.sqrt(3))
            phase = rng.uniform(0, 2 * np.pi)
            out[:, s.start + axis] = theta0[s.start + axis] + amp * (
                np.sin(omega * t + phase) - np.sin(phase)
            )
    return out


def generate_synthetic(
    model: SkinnedModel,
    trajectory: np.ndarray,
    intrinsics: CameraIntrinsics,
    noise_mm: float = 0.0,
    seed: int = 0,
) -> tuple[list[DepthFrame], np.ndarray]:
    """Render each trajectory pose and add clamped Gaussian depth noise.

    Returns (frames, ground-truth joint positions (N, J, 3)).
    """
    rng = np.random.default_rng(seed)
    frames = []
    joints = []
    for theta in np.atleast_2d(trajectory):
        verts, _, _ = model.posed(theta)
        frame, _ = render_depth(verts, model.mesh.triangles, intrinsics)
        depth = frame.depth
        if noise_mm > 0:
            valid = depth > 0
            noisy = depth + np.where(valid, rng.normal(0.0, noise_mm, depth.shape), 0.0)
            depth = np.clip(noisy, 0.0, None)
        frames.append(DepthFrame(depth, intrinsics))
        joints.append(joint_positions(model.skeleton, theta))
    return frames, np.array(joints)


def synthetic_detections(
    model: SkinnedModel,
    trajectory: np.ndarray,
    intrinsics: CameraIntrinsics,
    confidence: float = 4.0,
    pad_px: float = 3.0,
) -> list[tuple[int, float, float, float, float, float]]:
    """Fingertip detection records derived from ground-truth poses: the
    bounding box of each visible fingertip region, padded a little."""
    records = []
    for fi, theta in enumerate(np.atleast_2d(trajectory)):
        verts, _, _ = model.posed(theta)
        _, vis = render_depth(verts, model.mesh.triangles, intrinsics)
        for tip in model.fingertips:
            ids = tip.vertex_ids[vis[tip.vertex_ids]]
            if len(ids) < 3:
                continue
            uv = intrinsics.project(verts[ids])
            x0, y0 = uv.min(axis=0) - pad_px
            x1, y1 = uv.max(axis=0) + pad_px
            records.append((fi, float(x0), float(y0), float(x1 - x0), float(y1 - y0), confidence))
    return records
