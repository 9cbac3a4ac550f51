"""Seven-term stacked least squares and the alternating track loop.

Each outer iteration renders the models, rebuilds every correspondence set
at the current pose, assembles residual rows with their sqrt-weight scaling,
and takes one damped Gauss-Newton step.  Root motion re-linearizes every
iteration: accepted global increments compose onto per-root base transforms
so twist coordinates stay near zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import collision as coll
from . import physics as phys
from .data_terms import (
    P2P,
    P2PLANE,
    GatingParams,
    LineCorrespondence,
    PointCorrespondence,
    data_to_model,
    model_to_data,
)
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    bilateral_smooth_and_normals,
    depth_discontinuities,
    render_depth,
)
from .kinematics import (
    Pose,
    RigidTransform,
    exp_coords,
    forward_kinematics,
    lbs_deform,
    log_transform,
    pose_jacobian,
)
from .model import ModelSegment, SkinnedModel
from .salient import (
    Detection,
    assignment_costs,
    salient_correspondences,
    solve_assignment,
)


class InsufficientObservationsError(RuntimeError):
    """The assembled system has no residual rows at all."""


@dataclass
class EnergyWeights:
    """Term weights; the anatomy/regularization weights scale with the
    current total correspondence count C_all."""

    gamma_c: float = 10.0
    gamma_ph: float = 10.0
    gamma_a_per_corr: float = 0.0015
    gamma_r_per_corr: float = 0.02
    lambda_assign: float = 1.2
    limit_sharpness: float = 10.0  # p in the joint-limit exponentials
    salient_weight_mode: str = "confidence"

    def __post_init__(self):
        for name in ("gamma_c", "gamma_ph", "gamma_a_per_corr", "gamma_r_per_corr", "lambda_assign"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def anatomy_residuals(
    theta: np.ndarray, skeleton, gamma_a: float, p: float = 10.0
) -> tuple[np.ndarray, np.ndarray]:
    """Two rows per revolute joint: sqrt(g)*exp(p(l-th)/2), sqrt(g)*exp(p(th-u)/2).

    Squared and summed they reproduce g*(exp(p(l-th)) + exp(p(th-u))).
    Returns (rows, jacobian rows over the full dof vector).
    """
    angle_idx = skeleton.angle_dof_indices()
    n = len(angle_idx)
    rows = np.zeros(2 * n)
    jac = np.zeros((2 * n, skeleton.dof_count))
    w = np.sqrt(gamma_a)
    for k, j in enumerate(skeleton.revolute):
        a = theta[angle_idx[k]]
        lo = skeleton.joints[j].lower_limit
        hi = skeleton.joints[j].upper_limit
        # exponent cap keeps rejected trial poses finite in the energy
        low = w * np.exp(min(p * (lo - a) / 2.0, 60.0))
        high = w * np.exp(min(p * (a - hi) / 2.0, 60.0))
        rows[2 * k] = low
        rows[2 * k + 1] = high
        jac[2 * k, angle_idx[k]] = -p / 2.0 * low
        jac[2 * k + 1, angle_idx[k]] = p / 2.0 * high
    return rows, jac


def regularization_residuals(
    theta: np.ndarray, theta_tilde_angles: np.ndarray, skeleton, gamma_r: float
) -> tuple[np.ndarray, np.ndarray]:
    """sqrt(g)*(theta_k - theta~_k) over revolute joint angles."""
    angle_idx = skeleton.angle_dof_indices()
    w = np.sqrt(gamma_r)
    rows = w * (theta[angle_idx] - theta_tilde_angles)
    jac = np.zeros((len(angle_idx), skeleton.dof_count))
    for k, c in enumerate(angle_idx):
        jac[k, c] = w
    return rows, jac


@dataclass
class ResidualSystem:
    """Stacked residuals over a frozen correspondence set.

    ``residuals``/``jacobian`` re-evaluate at any pose (the correspondence
    data itself stays fixed), which is what the damping loop and the
    finite-difference checks differentiate.
    """

    model: SkinnedModel
    base_transforms: dict[int, RigidTransform]
    point_corrs: list[PointCorrespondence]
    line_corrs: list[LineCorrespondence]
    theta_tilde_angles: np.ndarray
    gamma_a: float
    gamma_r: float
    limit_sharpness: float
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        ids = sorted(
            {c.vertex_id for c in self.point_corrs} | {c.vertex_id for c in self.line_corrs}
        )
        self._vids = np.array(ids, dtype=int)
        self._vslot = {v: i for i, v in enumerate(ids)}
        self._compute_spans()

    def _compute_spans(self):
        start = 0
        spans = {}
        by_source: dict[str, int] = {}
        for c in self.point_corrs:
            by_source[c.source] = by_source.get(c.source, 0) + (3 if c.metric == P2P else 1)
        order = ["m2d", "collision", "salient", "physics"]
        for name in order:
            n = by_source.get(name, 0)
            spans[name] = (start, start + n)
            start += n
        n_line = 3 * len(self.line_corrs)
        spans["d2m"] = (start, start + n_line)
        start += n_line
        n_anat = 2 * len(self.model.skeleton.revolute)
        spans["anatomy"] = (start, start + n_anat)
        start += n_anat
        n_reg = len(self.model.skeleton.revolute)
        spans["regularization"] = (start, start + n_reg)
        start += n_reg
        self.spans = spans
        self.n_rows = start

    @property
    def correspondence_count(self) -> int:
        return len(self.point_corrs) + len(self.line_corrs)

    def _posed_subset(self, theta: np.ndarray):
        gs = forward_kinematics(self.model.skeleton, theta, self.base_transforms)
        if len(self._vids):
            verts = lbs_deform(
                self.model.mesh.vertices[self._vids],
                self.model.weights[self._vids],
                self.model.rest_transforms,
                gs,
            )
        else:
            verts = np.zeros((0, 3))
        return verts, gs

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        verts, _ = self._posed_subset(theta)
        out = np.zeros(self.n_rows)
        cursor = {name: s for name, (s, _) in self.spans.items()}
        for c in self.point_corrs:
            v = verts[self._vslot[c.vertex_id]]
            i = cursor[c.source]
            if c.metric == P2P:
                out[i : i + 3] = c.weight * (v - c.target)
                cursor[c.source] = i + 3
            else:
                out[i] = c.weight * float(c.normal @ (v - c.target))
                cursor[c.source] = i + 1
        i = cursor["d2m"]
        for c in self.line_corrs:
            v = verts[self._vslot[c.vertex_id]]
            out[i : i + 3] = c.weight * (np.cross(v, c.line.d) - c.line.m)
            i += 3
        a_rows, _ = anatomy_residuals(theta, self.model.skeleton, self.gamma_a, self.limit_sharpness)
        s, e = self.spans["anatomy"]
        out[s:e] = a_rows
        r_rows, _ = regularization_residuals(
            theta, self.theta_tilde_angles, self.model.skeleton, self.gamma_r
        )
        s, e = self.spans["regularization"]
        out[s:e] = r_rows
        return out

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        gs = forward_kinematics(self.model.skeleton, theta, self.base_transforms)
        out = np.zeros((self.n_rows, self.model.skeleton.dof_count))
        if len(self._vids):
            jv = pose_jacobian(
                self.model.skeleton,
                theta,
                self.model.mesh.vertices,
                self.model.weights,
                self.model.rest_transforms,
                vertex_ids=self._vids,
                transforms=gs,
            )
        cursor = {name: s for name, (s, _) in self.spans.items()}
        for c in self.point_corrs:
            j = jv[self._vslot[c.vertex_id]]
            i = cursor[c.source]
            if c.metric == P2P:
                out[i : i + 3] = c.weight * j
                cursor[c.source] = i + 3
            else:
                out[i] = c.weight * (c.normal @ j)
                cursor[c.source] = i + 1
        i = cursor["d2m"]
        for c in self.line_corrs:
            j = jv[self._vslot[c.vertex_id]]
            d = c.line.d
            dx = np.array([[0.0, -d[2], d[1]], [d[2], 0.0, -d[0]], [-d[1], d[0], 0.0]])
            out[i : i + 3] = c.weight * (-dx @ j)
            i += 3
        _, a_jac = anatomy_residuals(theta, self.model.skeleton, self.gamma_a, self.limit_sharpness)
        s, e = self.spans["anatomy"]
        out[s:e] = a_jac
        _, r_jac = regularization_residuals(
            theta, self.theta_tilde_angles, self.model.skeleton, self.gamma_r
        )
        s, e = self.spans["regularization"]
        out[s:e] = r_jac
        return out

    def energy(self, theta: np.ndarray) -> float:
        r = self.residuals(theta)
        return float(r @ r)


def assemble(
    model: SkinnedModel,
    base_transforms: dict[int, RigidTransform],
    point_corrs: list[PointCorrespondence],
    line_corrs: list[LineCorrespondence],
    theta_tilde_angles: np.ndarray,
    weights: EnergyWeights,
) -> ResidualSystem:
    """Stack all term rows; anatomy/regularization weights scale with the
    correspondence count (floored at one so the temporal prior survives an
    empty frame)."""
    c_all = max(1, len(point_corrs) + len(line_corrs))
    system = ResidualSystem(
        model,
        base_transforms,
        point_corrs,
        line_corrs,
        np.asarray(theta_tilde_angles, dtype=float),
        gamma_a=weights.gamma_a_per_corr * c_all,
        gamma_r=weights.gamma_r_per_corr * c_all,
        limit_sharpness=weights.limit_sharpness,
    )
    if system.n_rows == 0:
        raise InsufficientObservationsError("no residual rows: nothing observes the pose")
    return system


def apply_step(skeleton, theta: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Compose root increments multiplicatively; add joint angles."""
    out = theta + delta
    for r in skeleton.roots:
        s = skeleton.root_dof_slice(r)
        g = exp_coords(delta[s]).compose(exp_coords(theta[s]))
        out[s] = log_transform(g)
    return out


MU_INIT = 1e-6
MU_MIN = 1e-12
MAX_RETRIES = 5


@dataclass
class StepResult:
    theta: np.ndarray
    mu: float
    accepted: bool
    energy_before: float
    energy_after: float
    retries: int


def gauss_newton_step(system: ResidualSystem, theta: np.ndarray, mu: float = MU_INIT) -> StepResult:
    """One damped step: solve (J^T J + mu I) d = -J^T r, retry with mu*10 on
    energy increase, divide mu by 10 on success."""
    r = system.residuals(theta)
    jac = system.jacobian(theta)
    e0 = float(r @ r)
    jtj = jac.T @ jac
    jtr = jac.T @ r
    n = len(theta)
    for retry in range(MAX_RETRIES + 1):
        try:
            delta = np.linalg.solve(jtj + mu * np.eye(n), -jtr)
        except np.linalg.LinAlgError:
            mu *= 10.0
            continue
        cand = apply_step(system.model.skeleton, theta, delta)
        e1 = system.energy(cand)
        if np.isfinite(e1) and e1 <= e0 + 1e-12 * max(1.0, e0):
            return StepResult(cand, max(mu / 10.0, MU_MIN), True, e0, e1, retry)
        mu *= 10.0
    return StepResult(theta.copy(), mu, False, e0, e0, MAX_RETRIES + 1)


@dataclass
class TrackConfig:
    metric: str = P2PLANE
    weights: EnergyWeights = field(default_factory=EnergyWeights)
    gating: GatingParams = field(default_factory=GatingParams)
    iterations: int = 10
    stop_eps_mm: float | None = None  # switch to the displacement criterion
    max_iterations: int = 50
    first_frame_iterations: int = 50
    bilateral_spatial_sigma: float = 3.0
    bilateral_range_sigma: float = 30.0
    static_bodies: list = field(default_factory=list)
    collision_enabled: bool = True
    salient_enabled: bool = True
    physics_enabled: bool = True
    scene_friction: float = phys.DEFAULT_SCENE_FRICTION
    hand_object_friction: float = phys.DEFAULT_HAND_FRICTION


@dataclass
class SolveReport:
    iterations: int
    final_energy: float
    energy_trace: list[tuple[float, float]]
    mean_joint_displacement: float
    converged: bool
    correspondence_counts: dict[str, int] = field(default_factory=dict)
    per_frame_error: str | None = None


def joint_positions(skeleton, theta, base_transforms=None) -> np.ndarray:
    """World positions of joint anchors (roots: their frame origin)."""
    gs = forward_kinematics(skeleton, theta, base_transforms)
    out = np.zeros((len(skeleton.joints), 3))
    for j in skeleton.joints:
        if j.kind == "root":
            out[j.id] = gs[j.id].translation
        else:
            out[j.id] = gs[j.id].apply(j.anchor)
    return out


def _absorb_roots(skeleton, theta: np.ndarray) -> tuple[np.ndarray, dict[int, RigidTransform]]:
    """Move root twist coordinates into base transforms, zeroing the blocks."""
    theta = np.asarray(theta, dtype=float).copy()
    bases: dict[int, RigidTransform] = {}
    for r in skeleton.roots:
        s = skeleton.root_dof_slice(r)
        bases[r] = exp_coords(theta[s])
        theta[s] = 0.0
    return theta, bases


def _emit_pose(skeleton, theta: np.ndarray, bases: dict[int, RigidTransform]) -> np.ndarray:
    """Fold base transforms back into root twist coordinates."""
    out = theta.copy()
    for r in skeleton.roots:
        s = skeleton.root_dof_slice(r)
        g = exp_coords(theta[s]).compose(bases[r])
        out[s] = log_transform(g)
    return out


class FrameTracker:
    """Bundles the per-frame correspondence construction for one rig."""

    def __init__(
        self,
        model: SkinnedModel,
        segments: list[ModelSegment],
        intrinsics: CameraIntrinsics,
        config: TrackConfig,
    ):
        self.model = model
        self.segments = segments
        self.intrinsics = intrinsics
        self.config = config
        self.object_segment = next((s for s in segments if s.is_object), None)

    def _split_meshes(self, posed_vertices):
        out = []
        for seg in self.segments:
            verts = posed_vertices[seg.vertex_slice]
            tris = self.model.mesh.triangles
            lo, hi = seg.vertex_slice.start, seg.vertex_slice.stop
            sel = (tris[:, 0] >= lo) & (tris[:, 0] < hi)
            out.append((verts, tris[sel] - lo))
        return out

    def _collision_corrs(self, posed_vertices, posed_normals):
        meshes = self._split_meshes(posed_vertices)
        pairs = coll.find_collisions(meshes)
        if not pairs:
            return []
        face_points = posed_vertices[self.model.mesh.triangles]
        return coll.collision_correspondences(
            pairs,
            face_points,
            self.model.mesh.triangles,
            posed_normals,
            posed_vertices,
            metric=self.config.metric,
            gamma_c=self.config.weights.gamma_c,
        )

    def _salient_corrs(self, detections, posed_vertices, visible):
        if not detections or not self.model.fingertips:
            return []
        w_st, w_s = assignment_costs(
            detections,
            self.model.fingertips,
            posed_vertices,
            visible,
            self.config.weights.salient_weight_mode,
        )
        # assignment economics run in meters: in millimeters every detection
        # beyond lambda*(w_s+1) ~ 2.4 would be discarded as a false positive,
        # below the 10 mm no-correspondence rule, and the term could never
        # fire
        sol = solve_assignment(w_st / 1000.0, w_s, self.config.weights.lambda_assign)
        return salient_correspondences(
            sol,
            detections,
            self.model.fingertips,
            posed_vertices,
            visible,
            self.intrinsics,
            w_st,
            metric=self.config.metric,
        )

    def _physics_corrs(self, posed_vertices):
        seg = self.object_segment
        if seg is None or seg.articulated or self.config.weights.gamma_ph <= 0:
            return []
        try:
            obj_hull = phys.convex_hull(posed_vertices[seg.vertex_slice])
        except phys.DegenerateHullError:
            return []
        part_hulls: dict[int, phys.HullMesh] = {}
        part_verts: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        statics = list(self.config.static_bodies)
        for part in sorted(set(self.model.eligible_parts)):
            ids = self.model.part_vertex_ids(part)
            if len(ids) < 4:
                continue
            try:
                h = phys.convex_hull(posed_vertices[ids])
            except phys.DegenerateHullError:
                continue
            part_hulls[part] = h
            part_verts[part] = (ids, posed_vertices[ids])
        # every non-object part is part of the static scene for the check
        for seg2 in self.segments:
            if seg2.is_object:
                continue
            for part in np.unique(self.model.part_of_vertex[seg2.vertex_slice]):
                ids = self.model.part_vertex_ids(int(part))
                if len(ids) < 4:
                    continue
                try:
                    statics.append(
                        phys.StaticBody(
                            phys.convex_hull(posed_vertices[ids]),
                            friction=self.config.hand_object_friction,
                        )
                    )
                except phys.DegenerateHullError:
                    continue
        scene = phys.RigidBodyScene(
            obj_hull,
            statics,
            object_friction=self.config.hand_object_friction,
        )
        if phys.simulate_drop(scene).stable:
            return []
        cands = phys.support_candidates(sorted(part_hulls.items()), obj_hull)
        if len(cands) < 2:
            return []
        best, _ = phys.select_support_combination(cands, part_hulls, scene)
        if best is None:
            return []
        return phys.physics_correspondences(
            best, part_verts, obj_hull, metric=self.config.metric, gamma_ph=self.config.weights.gamma_ph
        )

    def build_system(self, theta, bases, frame, cloud, observed_edges, detections, theta_tilde_angles):
        posed, normals, _ = self.model.posed(theta, bases)
        rendered, visible = render_depth(posed, self.model.mesh.triangles, self.intrinsics)
        point_corrs: list[PointCorrespondence] = []
        point_corrs += model_to_data(
            posed, normals, visible, cloud, self.config.gating, metric=self.config.metric
        )
        if self.config.collision_enabled and self.config.weights.gamma_c > 0:
            point_corrs += self._collision_corrs(posed, normals)
        if self.config.salient_enabled:
            point_corrs += self._salient_corrs(detections, posed, visible)
        if self.config.physics_enabled:
            point_corrs += self._physics_corrs(posed)
        line_corrs = data_to_model(
            frame,
            rendered,
            posed,
            visible,
            self.intrinsics,
            self.config.gating,
            observed_edges=observed_edges,
        )
        return assemble(
            self.model, bases, point_corrs, line_corrs, theta_tilde_angles, self.config.weights
        )


def track_frame(
    model: SkinnedModel,
    segments: list[ModelSegment],
    frame: DepthFrame,
    detections: list[Detection],
    previous_pose: np.ndarray,
    config: TrackConfig,
    first_frame: bool = False,
) -> tuple[np.ndarray, SolveReport]:
    """Alternate correspondence search and damped Gauss-Newton on one frame."""
    skeleton = model.skeleton
    previous_pose = skeleton.check_pose(previous_pose)
    theta, bases = _absorb_roots(skeleton, previous_pose)
    theta_tilde_angles = theta[skeleton.angle_dof_indices()].copy()

    cloud = bilateral_smooth_and_normals(
        frame, config.bilateral_spatial_sigma, config.bilateral_range_sigma
    )
    observed_edges = depth_discontinuities(frame)
    tracker = FrameTracker(model, segments, frame.intrinsics, config)

    if first_frame:
        n_iter, use_eps = config.first_frame_iterations, False
    elif config.stop_eps_mm is not None:
        n_iter, use_eps = config.max_iterations, True
    else:
        n_iter, use_eps = config.iterations, False

    mu = MU_INIT
    trace: list[tuple[float, float]] = []
    counts: dict[str, int] = {}
    converged = False
    disp = np.inf
    iterations = 0
    for i in range(n_iter):
        system = tracker.build_system(
            theta, bases, frame, cloud, observed_edges, detections, theta_tilde_angles
        )
        for name, (s, e) in system.spans.items():
            counts[name] = e - s
        if system.correspondence_count == 0:
            # nothing observes the pose: the temporal prior keeps the
            # previous estimate exactly rather than letting the joint-limit
            # prior drift it
            e0 = system.energy(theta)
            trace.append((e0, e0))
            iterations = i + 1
            converged = True
            disp = 0.0
            break
        joints_before = joint_positions(skeleton, theta, bases)
        step = gauss_newton_step(system, theta, mu)
        mu = step.mu
        iterations = i + 1
        trace.append((step.energy_before, step.energy_after))
        if step.accepted:
            theta = step.theta
            # re-linearize roots about the new estimate
            for r in skeleton.roots:
                s = skeleton.root_dof_slice(r)
                bases[r] = exp_coords(theta[s]).compose(bases[r])
                theta[s] = 0.0
        joints_after = joint_positions(skeleton, theta, bases)
        disp = float(np.linalg.norm(joints_after - joints_before, axis=1).mean())
        if use_eps and disp < config.stop_eps_mm:
            converged = True
            break
        if not step.accepted:
            break

    final_pose = _emit_pose(skeleton, theta, bases)
    energy = trace[-1][1] if trace else 0.0
    report = SolveReport(iterations, energy, trace, disp, converged, counts)
    return final_pose, report


def track_sequence(
    model: SkinnedModel,
    segments: list[ModelSegment],
    frames: list[DepthFrame],
    detections_per_frame: list[list[Detection]] | None,
    initial_pose: np.ndarray,
    config: TrackConfig,
) -> tuple[np.ndarray, list[SolveReport]]:
    """Sequential tracking: each frame starts from the previous estimate.

    Per-frame failures are recorded in the report and the previous pose is
    carried forward.
    """
    poses = []
    reports = []
    prev = np.asarray(initial_pose, dtype=float)
    for fi, frame in enumerate(frames):
        dets = detections_per_frame[fi] if detections_per_frame else []
        try:
            pose, report = track_frame(
                model, segments, frame, dets, prev, config, first_frame=(fi == 0)
            )
        except InsufficientObservationsError as e:
            pose = prev.copy()
            report = SolveReport(0, np.nan, [], np.nan, False, {}, per_frame_error=str(e))
        poses.append(pose)
        reports.append(report)
        prev = pose
    return np.array(poses), reports
