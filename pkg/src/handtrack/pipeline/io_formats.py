"""File formats: OBJ meshes, JSON model sidecars, 16-bit depth images,
masks, detection records, and pose-trajectory CSVs.

Everything is human-diffable text or plain raster; floats are written with
repr so a save/load round trip is exact.
"""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from ..geometry import CameraIntrinsics, DepthFrame, TriangleMesh
from ..kinematics import Joint, Skeleton
from ..model import SkinnedModel
from ..salient import CONFIDENCE_THRESHOLD, Detection, FingertipRegion


class ModelFileError(ValueError):
    """Malformed mesh or sidecar file."""


def save_mesh_obj(path: str, mesh: TriangleMesh) -> None:
    with open(path, "w") as f:
        f.write("# handtrack mesh\n")
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_mesh_obj(path: str) -> TriangleMesh:
    verts = []
    tris = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ModelFileError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError as e:
                    raise ModelFileError(f"{path}:{lineno}: {e}") from e
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ModelFileError(f"{path}:{lineno}: face needs 3 indices")
                try:
                    idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
                except ValueError as e:
                    raise ModelFileError(f"{path}:{lineno}: {e}") from e
                tris.append(idx)
    if not verts:
        raise ModelFileError(f"{path}: no vertices")
    try:
        return TriangleMesh(np.array(verts), np.array(tris, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise ModelFileError(f"{path}: {e}") from e


def sidecar_path(mesh_path: str) -> str:
    stem, _ = os.path.splitext(mesh_path)
    return stem + ".skel.json"


def save_model(mesh_path: str, model: SkinnedModel) -> None:
    """Mesh as OBJ plus a structured sidecar next to it."""
    save_mesh_obj(mesh_path, model.mesh)
    joints = []
    for j in model.skeleton.joints:
        rec = {"id": j.id, "parent": j.parent, "kind": j.kind, "name": j.name}
        if j.kind == "revolute":
            rec["axis"] = [repr(float(x)) for x in j.axis]
            rec["anchor"] = [repr(float(x)) for x in j.anchor]
            rec["limits"] = [repr(float(j.lower_limit)), repr(float(j.upper_limit))]
        joints.append(rec)
    sparse_weights = []
    for row in model.weights:
        nz = np.nonzero(row)[0]
        sparse_weights.append([[int(k), repr(float(row[k]))] for k in nz])
    doc = {
        "name": model.name,
        "is_object": model.is_object,
        "joints": joints,
        "weights": sparse_weights,
        "fingertips": [t.vertex_ids.tolist() for t in model.fingertips],
        "eligible_parts": list(map(int, model.eligible_parts)),
        "part_of_vertex": model.part_of_vertex.tolist(),
    }
    with open(sidecar_path(mesh_path), "w") as f:
        json.dump(doc, f, indent=1)


def load_model(mesh_path: str) -> SkinnedModel:
    """Mesh + sidecar -> SkinnedModel; validation errors carry context."""
    mesh = load_mesh_obj(mesh_path)
    side = sidecar_path(mesh_path)
    try:
        with open(side) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"{side}:{e.lineno}: {e.msg}") from e
    joints = []
    try:
        for rec in doc["joints"]:
            if rec["kind"] == "revolute":
                lim = [float(x) for x in rec.get("limits", [-np.pi, np.pi])]
                joints.append(
                    Joint(
                        rec["id"],
                        rec["parent"],
                        "revolute",
                        axis=np.array([float(x) for x in rec["axis"]]),
                        anchor=np.array([float(x) for x in rec["anchor"]]),
                        lower_limit=lim[0],
                        upper_limit=lim[1],
                        name=rec.get("name", ""),
                    )
                )
            else:
                joints.append(Joint(rec["id"], rec["parent"], rec["kind"], name=rec.get("name", "")))
        skeleton = Skeleton(joints)
    except (KeyError, ValueError) as e:
        raise ModelFileError(f"{side}: bad skeleton: {e}") from e
    weights = np.zeros((len(mesh.vertices), len(joints)))
    for vi, row in enumerate(doc["weights"]):
        for k, w in row:
            weights[vi, int(k)] = float(w)
    sums = weights.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ModelFileError(f"{side}: weight row {bad} sums to {sums[bad]}")
    tips = [FingertipRegion(i, np.array(ids, dtype=int)) for i, ids in enumerate(doc.get("fingertips", []))]
    try:
        return SkinnedModel(
            doc.get("name", os.path.basename(mesh_path)),
            mesh,
            skeleton,
            weights,
            fingertips=tips,
            eligible_parts=[int(p) for p in doc.get("eligible_parts", [])],
            is_object=bool(doc.get("is_object", False)),
            part_of_vertex=np.array(doc["part_of_vertex"], dtype=int)
            if "part_of_vertex" in doc
            else None,
        )
    except ValueError as e:
        raise ModelFileError(f"{side}: {e}") from e


def save_depth_png(path: str, depth: np.ndarray) -> None:
    """16-bit single-channel PNG in millimeters (0 = invalid)."""
    arr = np.clip(np.rint(depth), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path)


def load_depth_png(path: str, intrinsics: CameraIntrinsics) -> DepthFrame:
    img = Image.open(path)
    arr = np.array(img, dtype=np.float64)
    return DepthFrame(arr, intrinsics)


def save_depth_bin(path: str, depth: np.ndarray) -> None:
    np.clip(np.rint(depth), 0, 65535).astype("<u2").tofile(path)


def load_depth_bin(path: str, intrinsics: CameraIntrinsics) -> DepthFrame:
    arr = np.fromfile(path, dtype="<u2").astype(np.float64)
    if arr.size != intrinsics.width * intrinsics.height:
        raise ValueError(
            f"{path}: {arr.size} samples, expected {intrinsics.width}x{intrinsics.height}"
        )
    return DepthFrame(arr.reshape(intrinsics.height, intrinsics.width), intrinsics)


def load_depth(path: str, intrinsics: CameraIntrinsics) -> DepthFrame:
    if path.endswith(".bin"):
        return load_depth_bin(path, intrinsics)
    return load_depth_png(path, intrinsics)


def save_mask_png(path: str, mask: np.ndarray) -> None:
    Image.fromarray((mask.astype(np.uint8)) * 255, mode="L").save(path)


def load_mask_png(path: str) -> np.ndarray:
    return np.array(Image.open(path).convert("L")) > 127


def save_detections(path: str, records: list[tuple[int, float, float, float, float, float]]) -> None:
    """Line-delimited: frame x y w h confidence."""
    with open(path, "w") as f:
        f.write("# frame x y w h confidence\n")
        for frame, x, y, w, h, c in records:
            f.write(f"{frame} {float(x)!r} {float(y)!r} {float(w)!r} {float(h)!r} {float(c)!r}\n")


def load_detection_records(path: str) -> dict[int, list[tuple[float, float, float, float, float]]]:
    out: dict[int, list] = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            frame = int(parts[0])
            x, y, w, h, c = (float(p) for p in parts[1:6])
            out.setdefault(frame, []).append((x, y, w, h, c))
    return out


def detections_for_frame(
    frame: DepthFrame, records: list[tuple[float, float, float, float, float]], frame_id: int
) -> list[Detection]:
    """Back-project the masked valid pixels inside each confident box."""
    out = []
    valid = frame.valid_mask()
    h, w = valid.shape
    for x, y, bw, bh, conf in records:
        if conf < CONFIDENCE_THRESHOLD:
            continue
        x0, x1 = max(0, int(np.floor(x))), min(w, int(np.ceil(x + bw)) + 1)
        y0, y1 = max(0, int(np.floor(y))), min(h, int(np.ceil(y + bh)) + 1)
        sub = valid[y0:y1, x0:x1]
        if not sub.any():
            continue
        ys, xs = np.nonzero(sub)
        ys = ys + y0
        xs = xs + x0
        pts = frame.intrinsics.backproject(
            xs.astype(float), ys.astype(float), frame.depth[ys, xs]
        )
        out.append(Detection(frame_id, (x, y, bw, bh), conf, pts, pts.mean(axis=0)))
    return out


def save_trajectory(path: str, poses: np.ndarray) -> None:
    """CSV rows: frame index followed by the pose vector."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    with open(path, "w") as f:
        f.write("frame," + ",".join(f"theta{i}" for i in range(poses.shape[1])) + "\n")
        for i, row in enumerate(poses):
            f.write(str(i) + "," + ",".join(repr(float(x)) for x in row) + "\n")


def load_trajectory(path: str) -> np.ndarray:
    rows = []
    with open(path) as f:
        header = f.readline()
        for line in f:
            parts = line.strip().split(",")
            if len(parts) < 2:
                continue
            rows.append([float(x) for x in parts[1:]])
    return np.array(rows)


def save_joints_csv(path: str, joints: np.ndarray) -> None:
    """CSV rows: frame, joint, x, y, z."""
    with open(path, "w") as f:
        f.write("frame,joint,x,y,z\n")
        for fi, frame in enumerate(joints):
            for ji, p in enumerate(frame):
                f.write(f"{fi},{ji},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}\n")


def load_joints_csv(path: str) -> np.ndarray:
    data = {}
    with open(path) as f:
        f.readline()
        for line in f:
            parts = line.strip().split(",")
            if len(parts) < 5:
                continue
            fi, ji = int(parts[0]), int(parts[1])
            data[(fi, ji)] = [float(x) for x in parts[2:5]]
    if not data:
        return np.zeros((0, 0, 3))
    nf = max(k[0] for k in data) + 1
    nj = max(k[1] for k in data) + 1
    out = np.zeros((nf, nj, 3))
    for (fi, ji), p in data.items():
        out[fi, ji] = p
    return out
