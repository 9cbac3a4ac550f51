"""Command-line interface: track, synth, eval, assign, simulate."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..model import combine_models
from ..physics import RigidBodyScene, StaticBody, convex_hull, simulate_drop
from ..salient import solve_assignment
from ..solver import track_sequence
from . import io_formats as io
from .config import ConfigError, load_config
from .evaluate import evaluate, trajectory_joints
from .models import make_ball, make_box_object, make_hand, make_pipe
from .preprocess import preprocess
from .synth import generate_synthetic, make_trajectory, synthetic_detections


def _cmd_track(args) -> int:
    cfg = load_config(args.config)
    if args.metric:
        from .config import METRIC_NAMES

        cfg.track.metric = METRIC_NAMES[args.metric]
    if args.iterations is not None:
        cfg.track.iterations = args.iterations
        cfg.track.stop_eps_mm = None
    if args.stop_eps is not None:
        cfg.track.stop_eps_mm = args.stop_eps
    if args.gamma_c is not None:
        cfg.track.weights.gamma_c = args.gamma_c
        cfg.track.collision_enabled = args.gamma_c > 0
    if args.gamma_ph is not None:
        cfg.track.weights.gamma_ph = args.gamma_ph
        cfg.track.physics_enabled = args.gamma_ph > 0
    if args.lambda_assign is not None:
        cfg.track.weights.lambda_assign = args.lambda_assign
    if args.first_frame_iterations is not None:
        cfg.track.first_frame_iterations = args.first_frame_iterations
    out_dir = args.output or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)

    models = [io.load_model(p) for p in cfg.model_paths]
    if cfg.object_name:
        for m in models:
            m.is_object = m.name == cfg.object_name
    combined, segments = combine_models(models)

    frames = []
    for i, p in enumerate(cfg.frame_paths):
        frame = io.load_depth(p, cfg.intrinsics)
        mask = io.load_mask_png(cfg.mask_paths[i]) if cfg.mask_paths else None
        frames.append(preprocess(frame, cfg.depth_threshold, mask))

    detections = None
    if cfg.detections_path:
        records = io.load_detection_records(cfg.detections_path)
        detections = [
            io.detections_for_frame(frames[i], records.get(i, []), i) for i in range(len(frames))
        ]

    if cfg.initial_pose is not None:
        init = cfg.initial_pose
    elif cfg.initial_pose_path:
        init = io.load_trajectory(cfg.resolve(cfg.initial_pose_path))[0]
    else:
        print("error: no initial pose in config ([init] pose or pose_path)", file=sys.stderr)
        return 2
    if init.shape != (combined.dof_count,):
        print(
            f"error: initial pose has {init.size} values, rig needs {combined.dof_count}",
            file=sys.stderr,
        )
        return 2

    poses, reports = track_sequence(combined, segments, frames, detections, init, cfg.track)
    io.save_trajectory(os.path.join(out_dir, "poses.csv"), poses)
    io.save_joints_csv(
        os.path.join(out_dir, "joints.csv"), trajectory_joints(combined, poses)
    )
    report = {
        "frames": len(frames),
        "iterations": [r.iterations for r in reports],
        "final_energy": [r.final_energy for r in reports],
        "converged": [r.converged for r in reports],
        "errors": [r.per_frame_error for r in reports],
    }
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=1)
    n_err = sum(1 for r in reports if r.per_frame_error)
    print(f"tracked {len(frames)} frames -> {out_dir} ({n_err} frame errors)")
    return 0


MODEL_MAKERS = {
    "hand": make_hand,
    "ball": make_ball,
    "cube": make_box_object,
    "pipe": make_pipe,
}


def _cmd_synth(args) -> int:
    os.makedirs(args.output, exist_ok=True)
    frames_dir = os.path.join(args.output, "frames")
    os.makedirs(frames_dir, exist_ok=True)

    if args.model == "hand":
        model = make_hand(n_fingers=args.fingers, segments_per_finger=args.segments)
    else:
        model = MODEL_MAKERS[args.model]()
    mesh_path = os.path.join(args.output, f"{model.name}.obj")
    io.save_model(mesh_path, model)

    from ..geometry import CameraIntrinsics

    w, h = (int(x) for x in args.resolution.split("x"))
    intr = CameraIntrinsics(fx=args.focal, fy=args.focal, cx=w / 2.0, cy=h / 2.0, width=w, height=h)

    start = np.zeros(model.dof_count)
    start[:3] = [0.0, -40.0, args.distance]
    traj = make_trajectory(
        model,
        args.frames,
        seed=args.seed,
        max_joint_step_deg=args.max_joint_step,
        max_global_step_mm=args.max_global_step,
        start_pose=start,
    )
    frames, gt_joints = generate_synthetic(model, traj, intr, noise_mm=args.noise, seed=args.seed)
    for i, frame in enumerate(frames):
        io.save_depth_png(os.path.join(frames_dir, f"frame_{i:04d}.png"), frame.depth)
    io.save_trajectory(os.path.join(args.output, "gt_poses.csv"), traj)
    io.save_joints_csv(os.path.join(args.output, "gt_joints.csv"), gt_joints)
    if model.fingertips:
        recs = synthetic_detections(model, traj, intr)
        io.save_detections(os.path.join(args.output, "detections.txt"), recs)

    cfg_lines = [
        "[camera]",
        f"fx = {args.focal}",
        f"fy = {args.focal}",
        f"cx = {w / 2.0}",
        f"cy = {h / 2.0}",
        f"width = {w}",
        f"height = {h}",
        "",
        "[models]",
        f'paths = ["{model.name}.obj"]',
        "",
        "[frames]",
        'directory = "frames"',
        'pattern = "frame_*.png"',
        f"depth_threshold = {args.distance + 400.0}",
        "",
    ]
    if model.fingertips:
        cfg_lines += ["[detections]", 'path = "detections.txt"', ""]
    cfg_lines += [
        "[tracking]",
        'metric = "p2plane"',
        "iterations = 10",
        "first_frame_iterations = 50",
        "gamma_c = 10.0",
        "gamma_ph = 10.0",
        '"lambda" = 1.2',
        "",
        "[init]",
        "pose = [" + ", ".join(repr(float(x)) for x in traj[0]) + "]",
        "",
        "[output]",
        'directory = "out"',
    ]
    with open(os.path.join(args.output, "config.toml"), "w") as f:
        f.write("\n".join(cfg_lines) + "\n")
    print(f"wrote {len(frames)} frames, model, ground truth, and config.toml to {args.output}")
    return 0


def _cmd_eval(args) -> int:
    if not args.ground_truth and not args.ground_truth_joints:
        print("error: need --ground-truth or --ground-truth-joints", file=sys.stderr)
        return 2
    cfg = load_config(args.config)
    models = [io.load_model(p) for p in cfg.model_paths]
    combined, _ = combine_models(models)
    poses = io.load_trajectory(args.trajectory)
    if args.ground_truth_joints:
        gt_j = io.load_joints_csv(args.ground_truth_joints)
    else:
        gt = io.load_trajectory(args.ground_truth)
        gt_j = trajectory_joints(combined, gt)
    got_j = trajectory_joints(combined, poses)
    n = min(len(got_j), len(gt_j))
    rec = evaluate(got_j[:n], gt_j[:n], cfg.intrinsics, cfg.joint_subset)
    print(rec.summary())
    return 0


def _cmd_assign(args) -> int:
    with open(args.costs) as f:
        doc = json.load(f)
    w_st = np.array(doc["w_st"], dtype=float).reshape(len(doc["w_st"]), -1)
    w_s = np.array(doc.get("w_s", [1.0] * len(w_st)), dtype=float)
    lam = args.lambda_assign if args.lambda_assign is not None else float(doc.get("lambda", 1.2))
    sol = solve_assignment(w_st, w_s, lam)
    print("assignments (detection -> fingertip):", sol.pairs())
    print("false positives:", np.nonzero(sol.alpha)[0].tolist())
    print("unassigned fingertips:", np.nonzero(sol.beta)[0].tolist())
    print(f"objective: {sol.objective!r}")
    return 0


def _cmd_simulate(args) -> int:
    with open(args.scene) as f:
        doc = json.load(f)
    obj = convex_hull(np.array(doc["object"]["points"], dtype=float))
    statics = []
    for b in doc.get("statics", []):
        statics.append(
            StaticBody(
                convex_hull(np.array(b["points"], dtype=float)),
                friction=float(b.get("friction", 3.0)),
                restitution=float(b.get("restitution", 0.0)),
            )
        )
    scene = RigidBodyScene(
        obj,
        statics,
        object_mass=float(doc["object"].get("mass", 1.0)),
        object_friction=float(doc["object"].get("friction", 1.2)),
        object_restitution=float(doc["object"].get("restitution", 0.5)),
    )
    rep = simulate_drop(scene, steps=args.steps, dt=args.dt)
    print(f"displacement: {rep.displacement:.3f} mm")
    print(f"stable: {rep.stable}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="handtrack",
        description="Articulated hand/object pose tracking from depth frames.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="track a configured sequence")
    t.add_argument("--config", required=True)
    t.add_argument("--metric", choices=["p2p", "p2plane"])
    t.add_argument("--iterations", type=int)
    t.add_argument("--stop-eps", type=float, dest="stop_eps", metavar="MM")
    t.add_argument("--gamma-c", type=float, dest="gamma_c")
    t.add_argument("--gamma-ph", type=float, dest="gamma_ph")
    t.add_argument("--lambda", type=float, dest="lambda_assign")
    t.add_argument("--first-frame-iterations", type=int, dest="first_frame_iterations")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output", metavar="DIR")
    t.set_defaults(func=_cmd_track)

    s = sub.add_parser("synth", help="generate a synthetic sequence")
    s.add_argument("--output", required=True, metavar="DIR")
    s.add_argument("--model", choices=sorted(MODEL_MAKERS), default="hand")
    s.add_argument("--fingers", type=int, default=3)
    s.add_argument("--segments", type=int, default=3)
    s.add_argument("--frames", type=int, default=50)
    s.add_argument("--noise", type=float, default=1.0, metavar="MM")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--resolution", default="640x480")
    s.add_argument("--focal", type=float, default=525.0)
    s.add_argument("--distance", type=float, default=550.0, metavar="MM")
    s.add_argument("--max-joint-step", type=float, default=2.0, metavar="DEG")
    s.add_argument("--max-global-step", type=float, default=5.0, metavar="MM")
    s.set_defaults(func=_cmd_synth)

    e = sub.add_parser("eval", help="evaluate a trajectory against ground truth")
    e.add_argument("--config", required=True)
    e.add_argument("--trajectory", required=True)
    e.add_argument("--ground-truth", dest="ground_truth")
    e.add_argument("--ground-truth-joints", dest="ground_truth_joints")
    e.set_defaults(func=_cmd_eval)

    a = sub.add_parser("assign", help="solve one detection-fingertip assignment")
    a.add_argument("--costs", required=True, help="JSON with w_st, w_s, lambda")
    a.add_argument("--lambda", type=float, dest="lambda_assign")
    a.set_defaults(func=_cmd_assign)

    m = sub.add_parser("simulate", help="run the stability oracle on a scene file")
    m.add_argument("--scene", required=True, help="JSON scene description")
    m.add_argument("--steps", type=int, default=35)
    m.add_argument("--dt", type=float, default=0.1)
    m.set_defaults(func=_cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, io.ModelFileError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
