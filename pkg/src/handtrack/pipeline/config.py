"""Sequence configuration (TOML) and its mapping onto solver settings."""

from __future__ import annotations

import glob
import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..data_terms import P2P, P2PLANE
from ..geometry import CameraIntrinsics
from ..meshes import box
from ..physics import StaticBody, convex_hull
from ..solver import EnergyWeights, TrackConfig

METRIC_NAMES = {"p2p": P2P, "p2plane": P2PLANE}


class ConfigError(ValueError):
    pass


@dataclass
class SequenceConfig:
    base_dir: str
    intrinsics: CameraIntrinsics
    model_paths: list[str]
    object_name: str | None
    frame_paths: list[str]
    depth_threshold: float
    mask_paths: list[str] | None
    detections_path: str | None
    initial_pose: np.ndarray | None
    initial_pose_path: str | None
    output_dir: str
    track: TrackConfig
    seed: int = 0
    joint_subset: np.ndarray | None = None

    def resolve(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"missing '{key}' in [{where}]")
    return table[key]


def load_config(path: str) -> SequenceConfig:
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    base = os.path.dirname(os.path.abspath(path))

    cam = doc.get("camera", {})
    intr = CameraIntrinsics(
        fx=float(_require(cam, "fx", "camera")),
        fy=float(_require(cam, "fy", "camera")),
        cx=float(_require(cam, "cx", "camera")),
        cy=float(_require(cam, "cy", "camera")),
        width=int(_require(cam, "width", "camera")),
        height=int(_require(cam, "height", "camera")),
    )

    models = doc.get("models", {})
    model_paths = [os.path.join(base, p) if not os.path.isabs(p) else p for p in _require(models, "paths", "models")]
    for p in model_paths:
        if not os.path.exists(p):
            raise ConfigError(f"model file not found: {p}")

    frames_tbl = doc.get("frames", {})
    fdir = os.path.join(base, frames_tbl.get("directory", "frames"))
    pattern = frames_tbl.get("pattern", "*.png")
    frame_paths = sorted(glob.glob(os.path.join(fdir, pattern)))
    if "count" in frames_tbl:
        frame_paths = frame_paths[: int(frames_tbl["count"])]
    if not frame_paths:
        raise ConfigError(f"no frames matching {pattern} in {fdir}")
    mask_dir = frames_tbl.get("mask_directory")
    mask_paths = None
    if mask_dir:
        mask_paths = sorted(glob.glob(os.path.join(base, mask_dir, "*.png")))
        if len(mask_paths) != len(frame_paths):
            raise ConfigError(f"{len(mask_paths)} masks for {len(frame_paths)} frames")

    det_tbl = doc.get("detections", {})
    det_path = det_tbl.get("path")
    if det_path:
        det_path = os.path.join(base, det_path)
        if not os.path.exists(det_path):
            raise ConfigError(f"detections file not found: {det_path}")

    tr = doc.get("tracking", {})
    weights = EnergyWeights(
        gamma_c=float(tr.get("gamma_c", 10.0)),
        gamma_ph=float(tr.get("gamma_ph", 10.0)),
        lambda_assign=float(tr.get("lambda", 1.2)),
        salient_weight_mode=tr.get("salient_weight_mode", "confidence"),
    )
    metric_name = tr.get("metric", "p2plane")
    if metric_name not in METRIC_NAMES:
        raise ConfigError(f"unknown metric {metric_name!r} (use p2p or p2plane)")

    statics = []
    for b in doc.get("scene", {}).get("boxes", []):
        hull = convex_hull(box(tuple(b["size"]), center=tuple(b["center"])).vertices)
        statics.append(StaticBody(hull, friction=float(b.get("friction", 3.0))))

    track = TrackConfig(
        metric=METRIC_NAMES[metric_name],
        weights=weights,
        iterations=int(tr.get("iterations", 10)),
        stop_eps_mm=float(tr["stop_eps_mm"]) if "stop_eps_mm" in tr else None,
        max_iterations=int(tr.get("max_iterations", 50)),
        first_frame_iterations=int(tr.get("first_frame_iterations", 50)),
        bilateral_spatial_sigma=float(tr.get("bilateral_spatial_sigma", 3.0)),
        bilateral_range_sigma=float(tr.get("bilateral_range_sigma", 30.0)),
        static_bodies=statics,
        collision_enabled=weights.gamma_c > 0,
        physics_enabled=bool(tr.get("physics", True)) and weights.gamma_ph > 0,
    )

    init = doc.get("init", {})
    pose = np.array(init["pose"], dtype=float) if "pose" in init else None
    subset = doc.get("evaluation", {}).get("joint_subset")

    return SequenceConfig(
        base_dir=base,
        intrinsics=intr,
        model_paths=model_paths,
        object_name=models.get("object"),
        frame_paths=frame_paths,
        depth_threshold=float(frames_tbl.get("depth_threshold", 1500.0)),
        mask_paths=mask_paths,
        detections_path=det_path,
        initial_pose=pose,
        initial_pose_path=init.get("pose_path"),
        output_dir=os.path.join(base, doc.get("output", {}).get("directory", "out")),
        track=track,
        seed=int(tr.get("seed", 0)),
        joint_subset=np.array(subset, dtype=int) if subset else None,
    )
