"""Tracking error metrics: 2D pixel and 3D millimeter joint errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics
from ..model import SkinnedModel
from ..solver import joint_positions


@dataclass
class EvaluationRecord:
    errors_2d: np.ndarray  # (frames, joints) px
    errors_3d: np.ndarray | None  # (frames, joints) mm

    def mean_2d(self) -> float:
        return float(self.errors_2d.mean())

    def std_2d(self) -> float:
        return float(self.errors_2d.std())

    def max_2d(self) -> float:
        return float(self.errors_2d.max())

    def mean_3d(self) -> float:
        return float(self.errors_3d.mean()) if self.errors_3d is not None else float("nan")

    def std_3d(self) -> float:
        return float(self.errors_3d.std()) if self.errors_3d is not None else float("nan")

    def max_3d(self) -> float:
        return float(self.errors_3d.max()) if self.errors_3d is not None else float("nan")

    def summary(self) -> str:
        lines = [
            f"2D error (px): mean {self.mean_2d():.3f}  std {self.std_2d():.3f}  max {self.max_2d():.3f}"
        ]
        if self.errors_3d is not None:
            lines.append(
                f"3D error (mm): mean {self.mean_3d():.3f}  std {self.std_3d():.3f}  max {self.max_3d():.3f}"
            )
        return "\n".join(lines)


def trajectory_joints(model: SkinnedModel, poses: np.ndarray) -> np.ndarray:
    return np.array([joint_positions(model.skeleton, p) for p in np.atleast_2d(poses)])


def evaluate(
    joints: np.ndarray,
    gt_joints: np.ndarray,
    intrinsics: CameraIntrinsics,
    joint_subset: np.ndarray | None = None,
) -> EvaluationRecord:
    """Per-frame per-joint errors between tracked and ground-truth joint
    positions (both (N, J, 3)); 2D errors via projection."""
    joints = np.asarray(joints, dtype=float)
    gt_joints = np.asarray(gt_joints, dtype=float)
    if joints.shape != gt_joints.shape:
        raise ValueError(f"trajectory shape {joints.shape} != ground truth {gt_joints.shape}")
    if joint_subset is not None:
        joints = joints[:, joint_subset]
        gt_joints = gt_joints[:, joint_subset]
    e3 = np.linalg.norm(joints - gt_joints, axis=2)
    n, j, _ = joints.shape
    uv = intrinsics.project(joints.reshape(-1, 3)).reshape(n, j, 2)
    uv_gt = intrinsics.project(gt_joints.reshape(-1, 3)).reshape(n, j, 2)
    e2 = np.linalg.norm(uv - uv_gt, axis=2)
    return EvaluationRecord(e2, e3)


def evaluate_poses(
    model: SkinnedModel,
    poses: np.ndarray,
    gt_poses: np.ndarray,
    intrinsics: CameraIntrinsics,
    joint_subset: np.ndarray | None = None,
) -> EvaluationRecord:
    return evaluate(
        trajectory_joints(model, poses),
        trajectory_joints(model, gt_poses),
        intrinsics,
        joint_subset,
    )
