import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
from scipy.optimize import minimize

from artigen.articulation import Plane, face_residual, fit_plane
from artigen.contact import ContactTrajectory, nocs_map
from artigen.error_handling import DegenerateCloud, FrameMismatch, OptimizationDiverged
from artigen.geometry import LabeledPointCloud, RigidTransform, invert
from artigen.models import JointKind, JointModel, ReplacementParams, ReplayResult, SolverConfig

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

SCALE_BOUNDS = (0.1, 10.0)
STAGE2_ANCHOR = 1e-3


@dataclass(frozen=True, eq=False)
class ReplacementAsset:
    """Substitute articulated object; parts and joint live in the asset frame."""
    part_move: LabeledPointCloud
    part_static: LabeledPointCloud
    joint: JointModel
    base_pose: RigidTransform

    def __post_init__(self):
        self.part_move.require_nonempty("replacement movable part")
        self.part_static.require_nonempty("replacement static part")


def _articulate_many(point, center, axis, thetas, kind: JointKind) -> np.ndarray:
    """One point articulated by each value in thetas, shape (n, 3)."""
    thetas = np.asarray(thetas, dtype=float)[:, None]
    if kind == JointKind.PRISMATIC:
        return point + thetas * axis
    p = point - center
    cross = np.cross(axis, p)
    # Rodrigues rotation
    return center + p * np.cos(thetas) + cross * np.sin(thetas) + np.outer(1.0 - np.cos(thetas[:, 0]), axis * (axis @ p))


def _articulate_cloud(points: np.ndarray, center, axis, theta: float, kind: JointKind) -> np.ndarray:
    if theta == 0.0:
        return points
    if kind == JointKind.PRISMATIC:
        return points + theta * axis
    p = points - center
    c, s = np.cos(theta), np.sin(theta)
    return center + p * c + np.cross(axis, p) * s + np.outer(p @ axis, axis) * (1.0 - c)


def _offset_vector(g: ReplacementParams) -> np.ndarray:
    return np.array([g.offset[0], g.offset[1], 0.0])


def place_asset(asset: ReplacementAsset, g: ReplacementParams, theta: float,
                in_scene: bool = True) -> Tuple[np.ndarray, np.ndarray, JointModel]:
    """Scale about the asset origin, articulate by theta, offset in x/y, then pose in the scene.

    Returns movable points, static points and the joint in the scene frame
    (or in the asset frame when ``in_scene`` is False).
    """
    kind = asset.joint.kind
    axis, center = asset.joint.axis(), g.s * asset.joint.origin()
    move = _articulate_cloud(g.s * asset.part_move.points, center, axis, theta, kind)
    static = g.s * asset.part_static.points
    offset = _offset_vector(g)
    move, static, center = move + offset, static + offset, center + offset
    if in_scene:
        move, static = asset.base_pose.apply(move), asset.base_pose.apply(static)
        center, axis = asset.base_pose.apply(center), asset.base_pose.apply_vector(axis)
    return move, static, JointModel(kind=kind, direction=tuple(axis), center=tuple(center))


def apply_params(asset: ReplacementAsset, g: ReplacementParams) -> ReplacementAsset:
    """Asset with g baked in: scaled, pre-articulated by r_init and offset (asset frame)."""
    move, static, joint = place_asset(asset, g, g.r_init, in_scene=False)
    return replace(
        asset,
        part_move=asset.part_move.with_points(move),
        part_static=asset.part_static.with_points(static),
        joint=joint,
    )


def map_contact(asset: ReplacementAsset, original_move: LabeledPointCloud, pc_move,
                object_pose: RigidTransform) -> np.ndarray:
    """NOCS-map the original contact onto the asset's movable part, in the asset frame."""
    to_object = invert(object_pose)
    return nocs_map(to_object.apply(original_move.points), asset.part_move.points,
                    to_object.apply(np.asarray(pc_move, dtype=float)))


def asset_face(asset: ReplacementAsset, pc_map, face_radius: float) -> Plane:
    points = asset.part_move.points
    near = points[np.linalg.norm(points - np.asarray(pc_map, dtype=float), axis=1) <= face_radius]
    if len(near) < 3:
        raise DegenerateCloud(f"Only {len(near)} asset points within {face_radius} m of the mapped contact")
    return fit_plane(near)


def constant_speed_schedule(r_init: float, n: int) -> np.ndarray:
    return r_init * np.arange(n) / (n - 1)


def _check_window(traj: ContactTrajectory, frames: Tuple[int, int]) -> int:
    start, end = frames
    if end <= start:
        raise OptimizationDiverged(f"Motion window {start}..{end} has zero length",
                                   details={"start": start, "end": end})
    if len(traj) != end - start + 1:
        raise FrameMismatch(f"Trajectory has {len(traj)} points for window {start}..{end}")
    return end - start + 1


def _unpack(x: np.ndarray) -> Tuple[float, float, np.ndarray, float]:
    s = float(np.clip(x[0], *SCALE_BOUNDS))
    penalty = 1e3 * (x[0] - s) ** 2
    return s, float(x[1]), np.array([x[2], x[3], 0.0]), penalty


def expected_motion(asset: ReplacementAsset, traj: ContactTrajectory) -> float:
    """Total motion implied by the trajectory, measured against the asset's joint axis."""
    pts = invert(asset.base_pose).apply(traj.points)
    axis = asset.joint.axis()
    if asset.joint.kind == JointKind.PRISMATIC:
        return max(abs(float((pts[-1] - pts[0]) @ axis)), 1e-3)
    flat = pts - np.outer(pts @ axis, axis)
    first, last = flat[1] - flat[0], flat[-1] - flat[-2]
    norms = np.linalg.norm(first) * np.linalg.norm(last)
    if norms < 1e-12:
        return 0.1
    # tangent turning angle of a circular arc equals the swept angle
    return max(float(np.arccos(np.clip(first @ last / norms, -1.0, 1.0))), 0.1)


def stage1_objective(x, asset: ReplacementAsset, pc_map: np.ndarray, traj: ContactTrajectory) -> float:
    s, r_init, offset, penalty = _unpack(x)
    n = len(traj)
    local = _articulate_many(s * pc_map, s * asset.joint.origin(), asset.joint.axis(),
                             constant_speed_schedule(r_init, n), asset.joint.kind)
    placed = asset.base_pose.apply(local + offset)
    return float(np.linalg.norm(placed - traj.points, axis=1).sum()) + penalty


def stage2_objective(x, asset: ReplacementAsset, face: Plane, traj: ContactTrajectory) -> float:
    s, r_init, offset, penalty = _unpack(x)
    n = len(traj)
    axis, center = asset.joint.axis(), s * asset.joint.origin()
    points = _articulate_many(s * face.point, center, axis, constant_speed_schedule(r_init, n), asset.joint.kind)
    if asset.joint.kind == JointKind.REVOLUTE:
        normals = _articulate_many(face.normal, np.zeros(3), axis, constant_speed_schedule(r_init, n), asset.joint.kind)
    else:
        normals = np.tile(face.normal, (n, 1))
    points = asset.base_pose.apply(points + offset)
    normals = asset.base_pose.apply_vector(normals)

    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(traj.points, axis=0), axis=1))])
    total = sum(face_residual(Plane(points[k], normals[k]), traj.points, k, arc) for k in range(n))
    return float(total) + penalty


def _nelder_mead(f, x0, cfg: SolverConfig):
    return minimize(f, np.asarray(x0, dtype=float), method="Nelder-Mead",
                    options={"xatol": cfg.xatol, "fatol": cfg.fatol, "maxiter": cfg.max_iter,
                             "maxfev": 4 * cfg.max_iter, "adaptive": False})


def stage1_starts(expected: float, cfg: SolverConfig) -> List[np.ndarray]:
    starts = [np.array([s, sign * expected, 0.0, 0.0]) for s in cfg.multistart_scales for sign in (1.0, -1.0)]
    starts += [np.array([1.0, sign * expected / 2.0, 0.0, 0.0]) for sign in (1.0, -1.0)]
    return starts


def fit_stage1(pc_map, asset: ReplacementAsset, traj: ContactTrajectory, frames: Tuple[int, int],
               kind: JointKind, cfg: SolverConfig = SolverConfig()) -> ReplacementParams:
    """Constant-speed point fit of g = [s, r_init, offset_x, offset_y] from several starts."""
    _check_window(traj, frames)
    if JointKind(kind) != asset.joint.kind:
        logger.warning(f"Requested {JointKind(kind).value} fit for a {asset.joint.kind.value} asset")
    pc_map = np.asarray(pc_map, dtype=float)
    starts = stage1_starts(expected_motion(asset, traj), cfg)

    def objective(x):
        return stage1_objective(x, asset, pc_map, traj)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda x0: _nelder_mead(objective, x0, cfg), starts))
    else:
        results = [_nelder_mead(objective, x0, cfg) for x0 in starts]

    # lowest objective wins, ties go to the earlier start
    best = min(range(len(results)), key=lambda i: (results[i].fun, i))
    value = float(results[best].fun)
    bound = cfg.diverge_factor * max(traj.length(), 1e-3)
    if not np.isfinite(value) or value > bound:
        raise OptimizationDiverged(f"Stage-1 objective {value:.4f} exceeds {bound:.4f}",
                                   details={"objective": value, "bound": bound})

    g = ReplacementParams.from_vector(results[best].x)
    logger.info(f"Stage 1: s={g.s:.4f}, r_init={g.r_init:.4f}, offset=({g.offset_x:.4f}, {g.offset_y:.4f}), "
                f"objective={value:.2e}")
    return g


def fit_stage2(asset: ReplacementAsset, traj: ContactTrajectory, g0: ReplacementParams, kind: JointKind,
               contact_face, face_radius: float = 0.03, cfg: SolverConfig = SolverConfig()) -> ReplacementParams:
    """Refine g with the slip-tolerant face-plane objective, never worsening it."""
    face = asset_face(asset, contact_face, face_radius)
    x0 = g0.as_vector()

    def f2(x):
        return stage2_objective(x, asset, face, traj)

    def anchored(x):
        # the plane family cannot see motion along the face; keep such directions at g0
        return f2(x) + STAGE2_ANCHOR * float(np.sum((np.asarray(x) - x0) ** 2))

    start_value = f2(x0)
    result = _nelder_mead(anchored, x0, cfg)
    value = f2(result.x)
    if not np.isfinite(value):
        raise OptimizationDiverged("Stage-2 objective is not finite", details={"x": result.x.tolist()})
    if value > start_value:
        logger.info(f"Stage 2 kept the stage-1 result ({start_value:.2e} <= {value:.2e})")
        return g0

    g = ReplacementParams.from_vector(result.x)
    logger.info(f"Stage 2: s={g.s:.4f}, r_init={g.r_init:.4f}, objective {start_value:.2e} -> {value:.2e}")
    return g


def stage2_value(asset: ReplacementAsset, traj: ContactTrajectory, g: ReplacementParams,
                 contact_face, face_radius: float = 0.03) -> float:
    return stage2_objective(g.as_vector(), asset, asset_face(asset, contact_face, face_radius), traj)


def replay_check(asset: ReplacementAsset, g: ReplacementParams, traj: ContactTrajectory, trace,
                 tol: float = 0.01, pc_map=None, face_radius: float = 0.03) -> ReplayResult:
    """Replay the trace on the placed asset and test every contact point against the face patch."""
    theta = np.asarray(trace.theta, dtype=float)
    if len(theta) != len(traj) or trace.start_frame != traj.start_frame:
        raise FrameMismatch(f"Trace frames {trace.start_frame}..{trace.end_frame} do not match "
                            f"trajectory frames {traj.start_frame}..{traj.end_frame}")
    if pc_map is None:
        pc_map = nearest_asset_point(asset, g, traj.points[0])
    pc_map = np.asarray(pc_map, dtype=float)
    face = asset_face(asset, pc_map, face_radius)

    kind, axis, center = asset.joint.kind, asset.joint.axis(), g.s * asset.joint.origin()
    offset = _offset_vector(g)
    anchors = asset.base_pose.apply(_articulate_many(g.s * pc_map, center, axis, theta, kind) + offset)
    points = asset.base_pose.apply(_articulate_many(g.s * face.point, center, axis, theta, kind) + offset)
    if kind == JointKind.REVOLUTE:
        normals = _articulate_many(face.normal, np.zeros(3), axis, theta, kind)
    else:
        normals = np.tile(face.normal, (len(theta), 1))
    normals = asset.base_pose.apply_vector(normals)

    rel = traj.points - points
    plane_dist = np.abs(np.einsum("ij,ij->i", rel, normals))
    in_plane = traj.points - anchors
    in_plane = in_plane - np.einsum("ij,ij->i", in_plane, normals)[:, None] * normals
    overshoot = np.maximum(0.0, np.linalg.norm(in_plane, axis=1) - g.s * face_radius)
    errors = np.sqrt(plane_dist ** 2 + overshoot ** 2)

    max_error = float(errors.max())
    return ReplayResult(success=bool(max_error <= tol), max_error=max_error)


def nearest_asset_point(asset: ReplacementAsset, g: ReplacementParams, scene_point) -> np.ndarray:
    """Asset-frame movable point that lands closest to scene_point under g at zero articulation."""
    move, _, _ = place_asset(asset, g, 0.0)
    idx = int(np.argmin(np.linalg.norm(move - np.asarray(scene_point, dtype=float), axis=1)))
    return asset.part_move.points[idx].copy()
