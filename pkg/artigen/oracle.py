import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from artigen.contact import ContactTrajectory
from artigen.error_handling import BadConfig, FrameMismatch
from artigen.geometry import (
    LABEL_MOVABLE,
    LABEL_STATIC,
    LabeledPointCloud,
    RigidTransform,
    axis_transform,
    compose,
    point_line_distance,
    robot_label,
)
from artigen.keyframes import MaskFrame, MaskSequence
from artigen.models import (
    ArticulationTrace,
    EvalReport,
    GroundTruth,
    JointKind,
    JointModel,
    NoiseConfig,
    ReplacementParams,
    SceneConfig,
)
from artigen.replacement import ReplacementAsset
from artigen.retarget import EeTrajectory, default_chain, fk, home_configuration, reinterpolate_segment

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

PROFILES = ("uniform", "ease-in-out", "piecewise")
CAMPAIGN_PROFILES = ("uniform", "ease-in-out")
# outward normal angle of each base side in the object frame; the robot sits on the front (-x) side
SIDE_ANGLE = {"back": 0.0, "left": math.pi / 2, "front": math.pi, "right": -math.pi / 2}
CANONICAL_SIDE = {JointKind.REVOLUTE: "back", JointKind.PRISMATIC: "front"}
DEFAULT_SCALE = {JointKind.REVOLUTE: 1500.0, JointKind.PRISMATIC: 2000.0}

MIN_POINTS_PER_PART = 2000
BLOB_HALF = 0.01
BLOB_DEPTH = (0.002, 0.022)
RETREAT_DISTANCE = 0.1
MASK_MARGIN_PX = 20
GRID_SPACING_PX = 0.9

# independent random streams per scene
STREAM_SAMPLING, STREAM_NOISE, STREAM_JITTER, STREAM_CONFIG = range(4)


def scene_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


# Motion profiles
def profile_fraction(profile: str, u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    if profile == "uniform":
        return u
    if profile == "ease-in-out":
        return u * u * (3.0 - 2.0 * u)
    if profile == "piecewise":
        # slow, fast, slow
        return np.interp(u, [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], [0.0, 1.0 / 6.0, 5.0 / 6.0, 1.0])
    raise BadConfig(f"Unknown motion profile '{profile}'", details={"profiles": list(PROFILES)})


def motion_window(cfg: SceneConfig) -> Tuple[int, int]:
    return cfg.lead_in, cfg.frames - 1 - cfg.lead_out


def theta_schedule(cfg: SceneConfig) -> np.ndarray:
    start, end = motion_window(cfg)
    u = (np.arange(cfg.frames) - start) / (end - start)
    return cfg.motion_magnitude() * profile_fraction(cfg.profile, u)


# Orthographic camera
@dataclass(frozen=True, eq=False)
class OrthoCamera:
    axis: np.ndarray
    center: np.ndarray
    scale: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", axis / np.linalg.norm(axis))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def basis(self) -> Tuple[np.ndarray, np.ndarray]:
        ref = np.array([0.0, 0.0, 1.0]) if abs(self.axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = np.cross(ref, self.axis)
        u /= np.linalg.norm(u)
        return u, np.cross(self.axis, u)

    def image_coords(self, points) -> np.ndarray:
        """Continuous (x right, y up) image-plane coordinates in pixels, origin at the center."""
        u, v = self.basis()
        rel = np.asarray(points, dtype=float).reshape(-1, 3) - self.center
        return np.column_stack([rel @ u, rel @ v]) * self.scale


def render_mask(points, camera: OrthoCamera, resolution: Tuple[int, int]) -> MaskFrame:
    """Orthographic occupancy mask, dilated by one pixel."""
    width, height = resolution
    bits = np.zeros((height, width), dtype=bool)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts):
        xy = camera.image_coords(pts)
        cols = np.floor(xy[:, 0] + width / 2.0).astype(np.int64)
        rows = np.floor(height / 2.0 - xy[:, 1]).astype(np.int64)
        inside = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
        bits[rows[inside], cols[inside]] = True
        bits = ndimage.binary_dilation(bits, structure=np.ones((3, 3), dtype=bool))
    return MaskFrame(bits)


def jitter_mask(mask: MaskFrame, amount: int) -> MaskFrame:
    if amount > 0:
        return MaskFrame(ndimage.binary_dilation(mask.bits, iterations=amount))
    if amount < 0:
        return MaskFrame(ndimage.binary_erosion(mask.bits, iterations=-amount))
    return mask


# Geometry sampling
def sample_box_surface(rng: np.random.Generator, lo, hi, count: int,
                       skip: Iterable[Tuple[int, int]] = (),
                       reject: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Uniform samples over the box faces not listed in skip, as (axis, side) pairs."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    ext = hi - lo
    skip = set(skip)
    faces = [(k, side) for k in range(3) for side in (0, 1) if (k, side) not in skip]
    areas = np.array([np.prod(np.delete(ext, k)) for k, _ in faces])

    chunks, have = [], 0
    while have < count:
        need = count - have
        draw = need * 2 if reject is not None else need
        which = rng.choice(len(faces), size=draw, p=areas / areas.sum())
        pts = lo + rng.random((draw, 3)) * ext
        for f, (k, side) in enumerate(faces):
            pts[which == f, k] = hi[k] if side else lo[k]
        if reject is not None:
            pts = pts[~reject(pts)]
        pts = pts[:need]
        chunks.append(pts)
        have += len(pts)
    return np.vstack(chunks)


def face_grid(origin, e1, e2, spacing: float) -> np.ndarray:
    """Dense grid over the parallelogram origin + a*e1 + b*e2, a, b in [0, 1]."""
    e1, e2 = np.asarray(e1, dtype=float), np.asarray(e2, dtype=float)
    n1 = int(np.ceil(np.linalg.norm(e1) / spacing)) + 1
    n2 = int(np.ceil(np.linalg.norm(e2) / spacing)) + 1
    a, b = np.meshgrid(np.linspace(0.0, 1.0, n1), np.linspace(0.0, 1.0, n2), indexing="ij")
    return np.asarray(origin, dtype=float) + a.reshape(-1, 1) * e1 + b.reshape(-1, 1) * e2


def box_grid(lo, hi, spacing: float) -> np.ndarray:
    axes = [np.linspace(l, h, int(np.ceil((h - l) / spacing)) + 1) for l, h in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class ObjectLayout:
    """Canonical object-frame geometry of one articulated object."""
    kind: JointKind
    base_lo: np.ndarray
    base_hi: np.ndarray
    part_lo: np.ndarray
    part_hi: np.ndarray
    joint: JointModel
    contact: np.ndarray
    approach: np.ndarray
    tool_rotation: np.ndarray
    slip_direction: np.ndarray


def object_layout(cfg: SceneConfig) -> ObjectLayout:
    bx, by, bz = cfg.base_size
    lx, ly, lz = cfg.lid_size
    if cfg.kind == JointKind.REVOLUTE:
        # lid covers the base top, hinge on the back top edge, positive angle lifts the front
        return ObjectLayout(
            kind=cfg.kind,
            base_lo=np.zeros(3), base_hi=np.array([bx, by, bz]),
            part_lo=np.array([0.0, 0.0, bz]), part_hi=np.array([bx, by, bz + lz]),
            joint=JointModel(kind=cfg.kind, direction=(0.0, 1.0, 0.0), center=(bx, by / 2, bz)),
            contact=np.array([cfg.contact_inset, by / 2, bz + lz]),
            approach=np.array([0.0, 0.0, -1.0]),
            tool_rotation=np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]),
            slip_direction=np.array([-1.0, 0.0, 0.0]),
        )
    # drawer box in front of the base, sliding out along -x
    y0, z0 = (by - ly) / 2, (bz - lz) / 2
    return ObjectLayout(
        kind=cfg.kind,
        base_lo=np.zeros(3), base_hi=np.array([bx, by, bz]),
        part_lo=np.array([-lx, y0, z0]), part_hi=np.array([0.0, y0 + ly, z0 + lz]),
        joint=JointModel(kind=cfg.kind, direction=(-1.0, 0.0, 0.0), center=(0.0, y0 + ly / 2, z0 + lz / 2)),
        contact=np.array([-lx, y0 + ly / 2, z0 + lz / 2]),
        approach=np.array([1.0, 0.0, 0.0]),
        tool_rotation=np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
        slip_direction=np.array([0.0, 0.0, 1.0]),
    )


def validate_scene_config(cfg: SceneConfig) -> None:
    problems = []
    if cfg.frames < 10:
        problems.append(f"frames must be >= 10 (got {cfg.frames})")
    if cfg.lead_in < 1 or cfg.lead_out < 1:
        problems.append("lead_in and lead_out must be >= 1")
    elif cfg.frames - cfg.lead_in - cfg.lead_out < 3:
        problems.append("motion window needs at least 3 frames")
    if min(cfg.base_size) <= 0 or min(cfg.lid_size) <= 0:
        problems.append("sizes must be positive")
    if cfg.profile not in PROFILES:
        problems.append(f"profile must be one of {PROFILES}")
    edge = cfg.joint_edge or CANONICAL_SIDE[cfg.kind]
    if edge not in SIDE_ANGLE:
        problems.append(f"joint_edge must be one of {sorted(SIDE_ANGLE)}")
    if cfg.points_per_part < MIN_POINTS_PER_PART:
        problems.append(f"points_per_part must be >= {MIN_POINTS_PER_PART}")
    if cfg.kind == JointKind.REVOLUTE and not 0 < cfg.contact_inset < cfg.base_size[0]:
        problems.append("contact_inset must lie inside the lid")
    if cfg.kind == JointKind.PRISMATIC and (cfg.lid_size[1] > cfg.base_size[1] or cfg.lid_size[2] > cfg.base_size[2]):
        problems.append("drawer must fit the base front face")
    if problems:
        raise BadConfig("Invalid scene configuration: " + "; ".join(problems), details={"problems": problems})


def object_pose(cfg: SceneConfig) -> RigidTransform:
    """Object frame to world: side rotation about the footprint center, then yaw and position."""
    edge = cfg.joint_edge or CANONICAL_SIDE[cfg.kind]
    turn = SIDE_ANGLE[edge] - SIDE_ANGLE[CANONICAL_SIDE[cfg.kind]]
    footprint = np.array([cfg.base_size[0] / 2, cfg.base_size[1] / 2, 0.0])
    side = axis_transform(footprint, (0.0, 0.0, 1.0), turn)
    return compose(RigidTransform.from_yaw(cfg.object_yaw, cfg.object_position), side)


def articulation_transform(joint: JointModel, theta: float) -> RigidTransform:
    if joint.kind == JointKind.REVOLUTE:
        return axis_transform(joint.origin(), joint.axis(), theta)
    return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), theta * joint.axis())


def world_joint(joint: JointModel, pose: RigidTransform) -> JointModel:
    return JointModel(kind=joint.kind, direction=tuple(pose.apply_vector(joint.axis())),
                      center=tuple(pose.apply(joint.origin())))


@dataclass(frozen=True, eq=False)
class SceneBundle:
    """Everything one synthetic demonstration produces."""
    config: SceneConfig
    clouds: Tuple[LabeledPointCloud, ...]
    masks: MaskSequence
    trajectory: EeTrajectory
    contact_trajectory: ContactTrajectory
    truth: GroundTruth
    object_pose: RigidTransform
    # clean object-frame parts at zero articulation and the object-frame joint
    parts: Tuple[LabeledPointCloud, LabeledPointCloud]
    object_joint: JointModel


def _sample_parts(cfg: SceneConfig, layout: ObjectLayout, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    n = cfg.points_per_part
    if cfg.kind == JointKind.REVOLUTE:
        static = sample_box_surface(rng, layout.base_lo, layout.base_hi, n, skip=[(2, 0), (2, 1)])
        move = sample_box_surface(rng, layout.part_lo, layout.part_hi, n, skip=[(2, 0)])
    else:
        lo, hi = layout.part_lo, layout.part_hi

        def behind_drawer(p: np.ndarray) -> np.ndarray:
            return ((np.abs(p[:, 0]) < 1e-12) & (p[:, 1] > lo[1]) & (p[:, 1] < hi[1])
                    & (p[:, 2] > lo[2]) & (p[:, 2] < hi[2]))

        static = sample_box_surface(rng, layout.base_lo, layout.base_hi, n, skip=[(2, 0)], reject=behind_drawer)
        move = sample_box_surface(rng, lo, hi, n, skip=[(0, 1)])
    # the contact point is part of the scan so the fingertip touches a sampled point
    return static, np.vstack([layout.contact, move])


def _mask_face(cfg: SceneConfig, layout: ObjectLayout) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Origin and spanning vectors of the movable face the camera sees."""
    lo, hi = layout.part_lo, layout.part_hi
    if cfg.kind == JointKind.REVOLUTE:
        # side face, seen along the hinge
        return lo.copy(), np.array([hi[0] - lo[0], 0.0, 0.0]), np.array([0.0, 0.0, hi[2] - lo[2]])
    # top face, seen from above
    return np.array([lo[0], lo[1], hi[2]]), np.array([hi[0] - lo[0], 0.0, 0.0]), np.array([0.0, hi[1] - lo[1], 0.0])


def _tool_poses(cfg: SceneConfig, layout: ObjectLayout, pose: RigidTransform,
                theta: np.ndarray) -> Tuple[List[RigidTransform], np.ndarray]:
    start, end = motion_window(cfg)
    contact_frames = []
    contact_points = []
    tool_local = RigidTransform.from_matrix(np.block([[layout.tool_rotation, np.zeros((3, 1))],
                                                      [np.zeros((1, 3)), np.ones((1, 1))]]))
    for t in range(start, end + 1):
        slip = cfg.noise.slip_m * (t - start) / (end - start)
        local = RigidTransform(tool_local.rotation, layout.contact + slip * layout.slip_direction)
        moved = compose(articulation_transform(layout.joint, theta[t]), local)
        world = compose(pose, moved)
        contact_frames.append(world)
        contact_points.append(world.translation)

    chain = default_chain()
    home = fk(chain, home_configuration(chain))
    approach = reinterpolate_segment(home, contact_frames[0], start + 1)
    retreat_pose = compose(contact_frames[-1], RigidTransform(np.array([1.0, 0, 0, 0]), [0.0, 0.0, -RETREAT_DISTANCE]))
    retreat = reinterpolate_segment(contact_frames[-1], retreat_pose, cfg.frames - end)
    poses = list(approach.poses) + contact_frames[1:] + list(retreat.poses[1:])
    return poses, np.array(contact_points)


def _robot_blob(rng: np.random.Generator) -> np.ndarray:
    lo = np.array([-BLOB_HALF, -BLOB_HALF, -BLOB_DEPTH[1]])
    hi = np.array([BLOB_HALF, BLOB_HALF, -BLOB_DEPTH[0]])
    # fingertip at the tool origin first
    return np.vstack([np.zeros(3), sample_box_surface(rng, lo, hi, 200)])


def gen_scene(cfg: SceneConfig) -> SceneBundle:
    """Deterministic synthetic demonstration with exact ground truth."""
    validate_scene_config(cfg)
    layout = object_layout(cfg)
    pose = object_pose(cfg)
    theta = theta_schedule(cfg)
    start, end = motion_window(cfg)

    sampling, noise_rng, jitter_rng = (scene_rng(cfg.seed, s) for s in (STREAM_SAMPLING, STREAM_NOISE, STREAM_JITTER))
    static_obj, move_obj = _sample_parts(cfg, layout, sampling)
    blob = _robot_blob(sampling)
    poses, contact_points = _tool_poses(cfg, layout, pose, theta)

    scale = cfg.camera.scale or DEFAULT_SCALE[cfg.kind]
    spacing = GRID_SPACING_PX / scale
    origin, e1, e2 = _mask_face(cfg, layout)
    face = face_grid(origin, e1, e2, spacing)
    corners = np.array([origin, origin + e1, origin + e2, origin + e1 + e2])
    blob_grid = box_grid([-BLOB_HALF, -BLOB_HALF, -BLOB_DEPTH[1]], [BLOB_HALF, BLOB_HALF, -BLOB_DEPTH[0]], spacing)

    truth_joint = world_joint(layout.joint, pose)
    part_motion = [compose(pose, articulation_transform(layout.joint, th)) for th in theta]
    camera, resolution = _camera(cfg, truth_joint, [m.apply(corners) for m in part_motion], scale)

    static_world = pose.apply(static_obj)
    clouds, frames = [], []
    for t in range(cfg.frames):
        move_world = part_motion[t].apply(move_obj)
        robot_world = poses[t].apply(blob)
        pts = np.vstack([static_world, move_world, robot_world])
        if cfg.noise.point_noise_m > 0:
            pts = pts + noise_rng.normal(0.0, cfg.noise.point_noise_m, pts.shape)
        labels = np.concatenate([np.full(len(static_world), LABEL_STATIC), np.full(len(move_world), LABEL_MOVABLE),
                                 np.full(len(robot_world), robot_label(0))])
        clouds.append(LabeledPointCloud(pts, labels))

        robot_mask = render_mask(poses[t].apply(blob_grid), camera, resolution)
        movable_mask = MaskFrame(render_mask(part_motion[t].apply(face), camera, resolution).bits & ~robot_mask.bits)
        if cfg.noise.mask_jitter_px:
            j = int(jitter_rng.integers(-cfg.noise.mask_jitter_px, cfg.noise.mask_jitter_px + 1))
            movable_mask = jitter_mask(movable_mask, j)
        frames.append((movable_mask, robot_mask))

    truth = GroundTruth(
        joint=truth_joint,
        theta_true=theta.tolist(),
        contact_true=tuple(contact_points[0]),
        start_true=start,
        end_true=end,
        object_position=cfg.object_position,
        object_yaw=cfg.object_yaw,
    )
    logger.info(f"Generated {cfg.kind.value} scene seed={cfg.seed}: {cfg.frames} frames, "
                f"motion {start}..{end}, masks {resolution[0]}x{resolution[1]}")
    return SceneBundle(
        config=cfg,
        clouds=tuple(clouds),
        masks=MaskSequence(tuple(frames)),
        trajectory=EeTrajectory(tuple(poses)),
        contact_trajectory=ContactTrajectory(contact_points, start_frame=start),
        truth=truth,
        object_pose=pose,
        parts=(LabeledPointCloud.uniform(move_obj, LABEL_MOVABLE), LabeledPointCloud.uniform(static_obj, LABEL_STATIC)),
        object_joint=layout.joint,
    )


def _camera(cfg: SceneConfig, joint: JointModel, face_corners: Sequence[np.ndarray],
            scale: float) -> Tuple[OrthoCamera, Tuple[int, int]]:
    if cfg.camera.axis is not None:
        axis = np.asarray(cfg.camera.axis, dtype=float)
    elif cfg.kind == JointKind.REVOLUTE:
        axis = joint.axis()
    else:
        axis = np.array([0.0, 0.0, 1.0])

    draft = OrthoCamera(axis, np.zeros(3), scale)
    xy = draft.image_coords(np.vstack(face_corners))
    u, v = draft.basis()
    mid = 0.5 * (xy.min(axis=0) + xy.max(axis=0)) / scale
    center = np.asarray(cfg.camera.center, dtype=float) if cfg.camera.center is not None else mid[0] * u + mid[1] * v
    extent = xy.max(axis=0) - xy.min(axis=0)
    width = cfg.camera.width or int(np.ceil(extent[0])) + 2 * MASK_MARGIN_PX
    height = cfg.camera.height or int(np.ceil(extent[1])) + 2 * MASK_MARGIN_PX
    return OrthoCamera(axis, center, scale), (width, height)


def random_scene_config(kind: JointKind, seed: int, noise: Optional[NoiseConfig] = None) -> SceneConfig:
    """Randomized object sizes, motion and placement for campaigns."""
    kind = JointKind(kind)
    rng = scene_rng(seed, STREAM_CONFIG)

    def jitter(value: float) -> float:
        return float(value * rng.uniform(0.8, 1.2))

    if kind == JointKind.REVOLUTE:
        base = (jitter(0.3), jitter(0.3), jitter(0.2))
        lid = (base[0], base[1], max(0.03, jitter(0.04)))
        magnitude = float(np.radians(rng.uniform(60.0, 100.0)))
        position = (float(rng.uniform(0.45, 0.6)), float(rng.uniform(-0.25, 0.0)), 0.0)
        yaw = float(np.radians(rng.uniform(-30.0, 30.0)))
    else:
        base = (jitter(0.3), jitter(0.4), jitter(0.3))
        lid = (jitter(0.2), min(jitter(0.3), 0.9 * base[1]), min(jitter(0.12), 0.8 * base[2]))
        magnitude = float(rng.uniform(0.15, 0.2))
        position = (float(rng.uniform(0.6, 0.75)), float(rng.uniform(-0.25, 0.0)), 0.0)
        yaw = float(np.radians(rng.uniform(-20.0, 20.0)))
    profile = str(rng.choice(CAMPAIGN_PROFILES))

    return SceneConfig(
        kind=kind,
        profile=profile,
        base_size=base,
        lid_size=lid,
        magnitude=magnitude,
        object_position=position,
        object_yaw=yaw,
        contact_inset=0.08 * base[0] / 0.3,
        noise=noise or NoiseConfig(),
        seed=seed,
    )


def build_replacement_asset(bundle: SceneBundle, g_true: ReplacementParams) -> ReplacementAsset:
    """Asset that reproduces the scene object when placed with g_true."""
    move, static = bundle.parts
    offset = np.array([g_true.offset[0], g_true.offset[1], 0.0])
    joint = bundle.object_joint
    return ReplacementAsset(
        part_move=move.with_points((move.points - offset) / g_true.s),
        part_static=static.with_points((static.points - offset) / g_true.s),
        joint=JointModel(kind=joint.kind, direction=joint.direction, center=tuple((joint.origin() - offset) / g_true.s)),
        base_pose=bundle.object_pose,
    )


@dataclass
class Estimate:
    joint: JointModel
    trace: ArticulationTrace
    keyframes: Tuple[int, int]
    params: Optional[ReplacementParams] = None
    replay_success: bool = False
    replay_max_error: float = 0.0


def evaluate(estimated: Estimate, truth: GroundTruth, seed: int = 0) -> EvalReport:
    """Score an estimate against ground truth (sign-insensitive on the joint axis)."""
    true_dir, est_dir = truth.joint.axis(), estimated.joint.axis()
    dot = float(np.dot(true_dir, est_dir))
    direction_err = math.degrees(math.acos(min(1.0, abs(dot))))
    if truth.joint.kind == JointKind.REVOLUTE:
        center_err = float(point_line_distance(estimated.joint.origin(), truth.joint.origin(), true_dir))
    else:
        center_err = 0.0

    trace = estimated.trace
    if trace.start_frame < 0 or trace.end_frame >= len(truth.theta_true):
        raise FrameMismatch(f"Trace frames {trace.start_frame}..{trace.end_frame} outside "
                            f"{len(truth.theta_true)} ground-truth frames")
    sign = 1.0 if dot >= 0 else -1.0
    true_theta = np.asarray(truth.theta_true[trace.start_frame:trace.end_frame + 1])
    true_theta = true_theta - true_theta[0]
    rmse = float(np.sqrt(np.mean((sign * np.asarray(trace.theta) - true_theta) ** 2)))

    start, end = estimated.keyframes
    return EvalReport(
        seed=seed,
        kind=truth.joint.kind,
        direction_err_deg=direction_err,
        center_axis_dist_m=center_err,
        theta_rmse=rmse,
        keyframe_offsets=(abs(start - truth.start_true), abs(end - truth.end_true)),
        replay_success=estimated.replay_success,
        replay_max_error=estimated.replay_max_error,
    )


def random_replacement_params(seed: int, motion: float) -> ReplacementParams:
    """Known g for replacement-fitting checks: scale 0.6 to 1.4, offsets within 3 cm."""
    rng = scene_rng(seed, STREAM_CONFIG + 1)
    return ReplacementParams(
        s=float(rng.uniform(0.6, 1.4)),
        r_init=float(motion),
        offset=(float(rng.uniform(-0.03, 0.03)), float(rng.uniform(-0.03, 0.03))),
    )


def replacement_errors(g: ReplacementParams, g_true: ReplacementParams) -> dict:
    """Relative scale error, initial-state error and largest offset error of a fit."""
    return {
        "scale_err_rel": abs(g.s - g_true.s) / g_true.s,
        "r_init_err": abs(g.r_init - g_true.r_init),
        "offset_err_m": float(np.max(np.abs(np.subtract(g.offset, g_true.offset)))),
    }
