import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from artigen.config import CONTACT_RADIUS, DEFAULT_SEED

Vec3T = Tuple[float, float, float]


class JointKind(str, Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


# Pydantic models for JSON payloads and run configuration.
class JointModel(BaseModel):
    kind: JointKind
    direction: Vec3T
    center: Vec3T = (0.0, 0.0, 0.0)

    @field_validator("direction")
    @classmethod
    def _unit_direction(cls, value: Vec3T) -> Vec3T:
        norm = math.sqrt(sum(v * v for v in value))
        if norm < 1e-12:
            raise ValueError("joint direction must be nonzero")
        if abs(norm - 1.0) > 1e-9:
            value = tuple(v / norm for v in value)
        return value

    def axis(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)

    def origin(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


class EdgeSelectionConfig(BaseModel):
    lambda1: float = Field(1.0, gt=0.0)
    lambda2: float = Field(0.3, ge=0.0)
    lambda3: float = Field(0.3, ge=0.0)
    K: int = Field(50, ge=1)
    # None means 5% of the movable box diagonal
    epsilon: Optional[float] = Field(None, gt=0.0)
    epsilon_relaxations: int = Field(3, ge=0)


class FilterConfig(BaseModel):
    window: int = 11
    order: int = 3
    edge_fraction: float = Field(0.5, ge=0.0, lt=1.0)


class MotionConfig(BaseModel):
    face_radius: float = Field(0.03, gt=0.0)
    warm_start: bool = True
    warm_window: float = Field(0.3, gt=0.0)
    tol: float = Field(1e-5, gt=0.0)
    accept_residual: float = Field(1e-3, gt=0.0)
    # warm solutions above this residual trigger the full-range search
    restart_residual: float = Field(0.01, gt=0.0)
    warm_samples: int = Field(31, ge=3)
    global_samples: int = Field(181, ge=3)
    max_candidates: int = Field(8, ge=1)
    # extra cost per unit of motion away from the previous frame, relative to the residual slope
    continuity_weight: float = Field(0.1, ge=0.0, lt=1.0)
    refine_center: bool = True
    circle_tol: float = Field(1e-3, gt=0.0)
    max_center_shift: float = Field(0.02, gt=0.0)
    min_sweep: float = Field(0.1, gt=0.0)


class SolverConfig(BaseModel):
    xatol: float = Field(1e-6, gt=0.0)
    fatol: float = Field(1e-12, gt=0.0)
    max_iter: int = Field(4000, ge=10)
    multistart_scales: List[float] = [0.7, 1.0, 1.3]
    diverge_factor: float = Field(10.0, gt=0.0)
    jobs: int = Field(1, ge=1)


class PoseRanges(BaseModel):
    tx_range: Tuple[float, float] = (-0.05, 0.3)
    ty_range: Tuple[float, float] = (-0.05, 0.05)
    yaw_range: Tuple[float, float] = (-math.pi / 4, math.pi / 4)

    @model_validator(mode="after")
    def _ordered(self) -> "PoseRanges":
        for name in ("tx_range", "ty_range", "yaw_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        return self


class ContactPair(BaseModel):
    pc_robot: Vec3T
    pc_move: Vec3T
    frame: int
    ee_dir: Vec3T

    def distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.pc_robot, self.pc_move)))


class MotionScoreSeries(BaseModel):
    raw: List[float]
    smoothed: List[float]
    baseline_B: float
    sigma_noise: float
    threshold_mu: float
    labels: List[bool]
    start_frame: int
    end_frame: int


class TraceFrame(BaseModel):
    frame: int
    theta: float
    residual: float


class ArticulationTrace(BaseModel):
    start_frame: int
    theta: List[float]
    residuals: List[float]

    @model_validator(mode="after")
    def _aligned(self) -> "ArticulationTrace":
        if len(self.theta) != len(self.residuals):
            raise ValueError("theta and residuals must have equal length")
        return self

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.theta) - 1

    def frames(self) -> List[TraceFrame]:
        return [TraceFrame(frame=self.start_frame + i, theta=t, residual=r)
                for i, (t, r) in enumerate(zip(self.theta, self.residuals))]


class ReplacementParams(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    s: float = Field(1.0, ge=0.1, le=10.0)
    r_init: float = 0.0
    offset: Tuple[float, float] = (0.0, 0.0)

    @property
    def offset_x(self) -> float:
        return self.offset[0]

    @property
    def offset_y(self) -> float:
        return self.offset[1]

    def as_vector(self) -> np.ndarray:
        return np.array([self.s, self.r_init, self.offset[0], self.offset[1]], dtype=float)

    @classmethod
    def from_vector(cls, g) -> "ReplacementParams":
        g = np.asarray(g, dtype=float)
        return cls(s=float(np.clip(g[0], 0.1, 10.0)), r_init=float(g[1]),
                   offset=(float(g[2]), float(g[3])))


class ReplayResult(BaseModel):
    success: bool
    max_error: float


class CameraConfig(BaseModel):
    # None means: hinge axis for revolute scenes, world z for prismatic scenes
    axis: Optional[Vec3T] = None
    # pixels per meter; None picks a per-kind default
    scale: Optional[float] = Field(None, gt=0.0)
    # None sizes the image to the swept region
    width: Optional[int] = Field(None, ge=8)
    height: Optional[int] = Field(None, ge=8)
    # None means: centered on the movable part's swept region
    center: Optional[Vec3T] = None


class NoiseConfig(BaseModel):
    mask_jitter_px: int = Field(0, ge=0)
    slip_m: float = Field(0.0, ge=0.0)
    point_noise_m: float = Field(0.0, ge=0.0)


class SceneConfig(BaseModel):
    kind: JointKind = JointKind.REVOLUTE
    base_size: Vec3T = (0.3, 0.3, 0.2)
    lid_size: Vec3T = (0.3, 0.3, 0.04)
    # side of the base carrying the hinge or drawer: back, front, left, right.
    # None means back for lids and front for drawers
    joint_edge: Optional[str] = None
    profile: str = "uniform"
    magnitude: Optional[float] = None
    frames: int = 50
    lead_in: int = 10
    lead_out: int = 10
    camera: CameraConfig = CameraConfig()
    noise: NoiseConfig = NoiseConfig()
    object_position: Vec3T = (0.45, -0.15, 0.0)
    object_yaw: float = 0.0
    contact_inset: float = 0.08
    points_per_part: int = 3000
    seed: int = 0

    def motion_magnitude(self) -> float:
        if self.magnitude is not None:
            return self.magnitude
        return math.pi / 2 if self.kind == JointKind.REVOLUTE else 0.2


class GroundTruth(BaseModel):
    joint: JointModel
    theta_true: List[float]
    contact_true: Vec3T
    start_true: int
    end_true: int
    object_position: Vec3T
    object_yaw: float


class DHRow(BaseModel):
    a: float
    alpha: float
    d: float
    theta_offset: float = 0.0
    lo: float = -math.pi
    hi: float = math.pi

    @model_validator(mode="after")
    def _limits(self) -> "DHRow":
        if not self.lo < self.hi:
            raise ValueError(f"joint limits must satisfy lo < hi (got {self.lo}, {self.hi})")
        return self


class KinematicChain(BaseModel):
    dh: List[DHRow]
    home: Optional[List[float]] = None

    @model_validator(mode="after")
    def _non_empty(self) -> "KinematicChain":
        if not self.dh:
            raise ValueError("a kinematic chain needs at least one joint")
        if self.home is not None and len(self.home) != len(self.dh):
            raise ValueError("home configuration length must match the joint count")
        return self


class EvalReport(BaseModel):
    seed: int = 0
    kind: JointKind = JointKind.REVOLUTE
    direction_err_deg: float = 0.0
    center_axis_dist_m: float = 0.0
    # center distance over the object diagonal
    center_axis_rel: float = 0.0
    theta_rmse: float = 0.0
    keyframe_offsets: Tuple[int, int] = (0, 0)
    replay_success: bool = False
    replay_max_error: float = 0.0
    # fitted replacement against the known placement, when a fit ran
    scale_err_rel: Optional[float] = None
    r_init_err: Optional[float] = None
    offset_err_m: Optional[float] = None
    error: Optional[str] = None


class CampaignReport(BaseModel):
    kind: JointKind
    count: int
    success_rate: float
    scenes: List[EvalReport]


class PipelineConfig(BaseModel):
    bundle_dir: Optional[str] = None
    output_dir: Optional[str] = None
    kind: JointKind = JointKind.REVOLUTE
    contact_radius: float = Field(CONTACT_RADIUS, gt=0.0)
    filter: FilterConfig = FilterConfig()
    edges: EdgeSelectionConfig = EdgeSelectionConfig()
    motion: MotionConfig = MotionConfig()
    solver: SolverConfig = SolverConfig()
    ranges: PoseRanges = PoseRanges()
    replay_tol: float = Field(0.01, gt=0.0)
    stage1_only: bool = False
    seed: int = DEFAULT_SEED


# On-disk payloads
class TrajectoryPayload(BaseModel):
    # rows of [tx, ty, tz, qw, qx, qy, qz] with an optional gripper value
    frames: List[List[float]]

    @field_validator("frames")
    @classmethod
    def _row_width(cls, value: List[List[float]]) -> List[List[float]]:
        for i, row in enumerate(value):
            if len(row) not in (7, 8):
                raise ValueError(f"frame {i} has {len(row)} values, expected 7 or 8")
        return value


class JointTrajectoryPayload(BaseModel):
    joints: List[List[float]]
    success: bool = True
    failed_frame: Optional[int] = None


class RetargetEntry(BaseModel):
    index: int
    seed: int
    tx: float
    ty: float
    yaw: float
    success: bool
    failed_frame: Optional[int] = None
    error: Optional[str] = None


class RetargetReport(BaseModel):
    master_seed: int
    count: int
    success_rate: float
    samples: List[RetargetEntry]


class ReplayEntry(BaseModel):
    seed: int
    success: bool
    max_error: float


class ReplayCampaignReport(BaseModel):
    kind: JointKind
    success_rate: float
    scenes: List[ReplayEntry]


class ObjectPayload(BaseModel):
    """Oracle-only scene facts needed to rebuild replacement assets from a bundle."""
    # [tx, ty, tz, qw, qx, qy, qz]
    object_pose: List[float]
    object_joint: JointModel
    contact_start: int
    contact_points: List[Vec3T]


class AssetPayload(BaseModel):
    # asset-frame joint and the asset frame's pose in the scene, [tx, ty, tz, qw, qx, qy, qz]
    joint: JointModel
    base_pose: List[float]
