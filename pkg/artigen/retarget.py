import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from artigen.error_handling import (
    BadSplit,
    DimensionMismatch,
    IkNoConvergence,
    JointLimit,
    ValidationError,
)
from artigen.geometry import RigidTransform, compose, slerp
from artigen.models import DHRow, KinematicChain, PoseRanges

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

EePose = RigidTransform

IK_DAMPING = 0.05
IK_JACOBIAN_STEP = 1e-6
IK_POSITION_TOL = 1e-4
IK_ANGLE_TOL = math.radians(0.1)
IK_MAX_STEP = 0.2


@dataclass(frozen=True, eq=False)
class EeTrajectory:
    """End-effector poses with an optional per-frame gripper channel."""
    poses: Tuple[RigidTransform, ...]
    gripper: Optional[np.ndarray] = None

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(poses) < 2:
            raise ValidationError(f"A trajectory needs at least 2 poses, got {len(poses)}")
        object.__setattr__(self, "poses", poses)
        if self.gripper is not None:
            gripper = np.asarray(self.gripper, dtype=float).reshape(-1)
            if len(gripper) != len(poses):
                raise DimensionMismatch(f"Gripper channel has {len(gripper)} values for {len(poses)} poses")
            object.__setattr__(self, "gripper", gripper)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, index: int) -> RigidTransform:
        return self.poses[index]

    def segment(self, first: int, last: int) -> "EeTrajectory":
        """Frames first..last inclusive."""
        gripper = None if self.gripper is None else self.gripper[first:last + 1]
        return EeTrajectory(self.poses[first:last + 1], gripper)

    def translations(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses])

    def quaternions(self) -> np.ndarray:
        return np.array([p.rotation for p in self.poses])

    def to_array(self) -> np.ndarray:
        rows = np.hstack([self.translations(), self.quaternions()])
        if self.gripper is not None:
            rows = np.hstack([rows, self.gripper[:, None]])
        return rows

    @classmethod
    def from_array(cls, rows) -> "EeTrajectory":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] not in (7, 8):
            raise DimensionMismatch(f"Trajectory rows must have 7 or 8 values, got shape {rows.shape}")
        poses = [RigidTransform(r[3:7], r[:3]) for r in rows]
        return cls(tuple(poses), rows[:, 7] if rows.shape[1] == 8 else None)


def split_trajectory(tau: EeTrajectory, start_frame: int, end_frame: int) -> Tuple[EeTrajectory, EeTrajectory, EeTrajectory]:
    """Approach, interaction and retreat segments; boundary frames are shared."""
    if not 0 < start_frame < end_frame < len(tau) - 1:
        raise BadSplit(f"Keyframes {start_frame}, {end_frame} do not split a {len(tau)}-frame trajectory",
                       details={"start": start_frame, "end": end_frame, "frames": len(tau)})
    return (tau.segment(0, start_frame),
            tau.segment(start_frame, end_frame),
            tau.segment(end_frame, len(tau) - 1))


def concatenate(segments: Sequence[EeTrajectory]) -> EeTrajectory:
    poses = list(segments[0].poses)
    grippers = [segments[0].gripper]
    for seg in segments[1:]:
        poses.extend(seg.poses[1:])
        grippers.append(None if seg.gripper is None else seg.gripper[1:])
    gripper = None if any(g is None for g in grippers) else np.concatenate(grippers)
    return EeTrajectory(tuple(poses), gripper)


def transform_segment(seg: EeTrajectory, t_ao: RigidTransform) -> EeTrajectory:
    return EeTrajectory(tuple(compose(t_ao, p) for p in seg.poses), seg.gripper)


def reinterpolate_segment(p_start: RigidTransform, p_end: RigidTransform, n_frames: int) -> EeTrajectory:
    """Linear translation and shortest-arc slerp rotation between two poses."""
    if n_frames < 2:
        raise ValidationError(f"Re-interpolation needs at least 2 frames, got {n_frames}")
    u = np.arange(n_frames) / (n_frames - 1)
    translations = p_start.translation + u[:, None] * (p_end.translation - p_start.translation)
    rotations = slerp(p_start.rotation, p_end.rotation, u)
    poses = [RigidTransform(q, t) for q, t in zip(rotations, translations)]
    poses[0], poses[-1] = p_start, p_end
    return EeTrajectory(tuple(poses))


def retarget(tau: EeTrajectory, start: int, end: int, t_ao: RigidTransform) -> EeTrajectory:
    tau1, tau2, tau3 = split_trajectory(tau, start, end)
    moved = transform_segment(tau2, t_ao)
    approach = reinterpolate_segment(tau1[0], moved[0], len(tau1))
    retreat = reinterpolate_segment(moved[len(moved) - 1], tau3[len(tau3) - 1], len(tau3))
    result = concatenate([approach, moved, retreat])
    # frame count is unchanged, so the gripper channel copies across index for index
    return EeTrajectory(result.poses, tau.gripper)


# Kinematics
def dh_matrix(row: DHRow, q: float) -> np.ndarray:
    theta = q + row.theta_offset
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array([
        [ct, -st * ca, st * sa, row.a * ct],
        [st, ct * ca, -ct * sa, row.a * st],
        [0.0, sa, ca, row.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _fk_matrix(chain: KinematicChain, joints: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    for row, q in zip(chain.dh, joints):
        m = m @ dh_matrix(row, q)
    return m


def joint_limits(chain: KinematicChain) -> Tuple[np.ndarray, np.ndarray]:
    return np.array([r.lo for r in chain.dh]), np.array([r.hi for r in chain.dh])


def _check_joints(chain: KinematicChain, joints) -> np.ndarray:
    q = np.asarray(joints, dtype=float).reshape(-1)
    if len(q) != len(chain.dh):
        raise DimensionMismatch(f"Chain has {len(chain.dh)} joints, got {len(q)} values")
    lo, hi = joint_limits(chain)
    outside = np.flatnonzero((q < lo - 1e-12) | (q > hi + 1e-12))
    if outside.size:
        raise JointLimit(f"Joint {int(outside[0])} value {q[outside[0]]:.4f} outside "
                         f"[{lo[outside[0]]:.4f}, {hi[outside[0]]:.4f}]",
                         details={"joints": outside.tolist()})
    return q


def fk(chain: KinematicChain, joints) -> RigidTransform:
    return RigidTransform.from_matrix(_fk_matrix(chain, _check_joints(chain, joints)))


def _pose_error(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    rot = Rotation.from_matrix(target[:3, :3] @ current[:3, :3].T).as_rotvec()
    return np.concatenate([target[:3, 3] - current[:3, 3], rot])


def _jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    cols = []
    for i in range(len(q)):
        step = np.zeros(len(q))
        step[i] = IK_JACOBIAN_STEP
        plus, minus = _fk_matrix(chain, q + step), _fk_matrix(chain, q - step)
        cols.append(_pose_error(plus, minus) / (2 * IK_JACOBIAN_STEP))
    return np.column_stack(cols)


def ik(chain: KinematicChain, target: RigidTransform, seed, max_iters: int = 300,
       damping: float = IK_DAMPING) -> np.ndarray:
    """Damped least squares on the 6-D pose error, clamped to joint limits."""
    q = _check_joints(chain, seed).copy()
    lo, hi = joint_limits(chain)
    goal = target.as_matrix()

    best_q, best_err = q.copy(), (np.inf, np.inf)
    for _ in range(max_iters + 1):
        err = _pose_error(goal, _fk_matrix(chain, q))
        pos_err, ang_err = float(np.linalg.norm(err[:3])), float(np.linalg.norm(err[3:]))
        if pos_err + ang_err < best_err[0] + best_err[1]:
            best_q, best_err = q.copy(), (pos_err, ang_err)
        if pos_err < IK_POSITION_TOL and ang_err < IK_ANGLE_TOL:
            return q
        j = _jacobian(chain, q)
        dq = j.T @ np.linalg.solve(j @ j.T + damping ** 2 * np.eye(6), err)
        norm = np.linalg.norm(dq)
        if norm > IK_MAX_STEP:
            dq *= IK_MAX_STEP / norm
        q = np.clip(q + dq, lo, hi)

    raise IkNoConvergence(
        f"IK stopped at position error {best_err[0]:.2e} m, orientation error {math.degrees(best_err[1]):.3f} deg",
        details={"best": best_q.tolist(), "position_error": best_err[0],
                 "orientation_error_deg": math.degrees(best_err[1])},
    )


def solve_trajectory(chain: KinematicChain, tau: EeTrajectory, seed=None) -> np.ndarray:
    """Joint angles per frame, each IK warm-started from the previous frame.

    A failing frame raises IkNoConvergence with its index under details["frame"].
    """
    q = np.asarray(seed if seed is not None else home_configuration(chain), dtype=float)
    rows = []
    for frame, pose in enumerate(tau.poses):
        try:
            q = ik(chain, pose, q)
        except IkNoConvergence as e:
            e.details = {**(e.details or {}), "frame": frame}
            raise
        rows.append(q)
    return np.array(rows)


def home_configuration(chain: KinematicChain) -> np.ndarray:
    if chain.home is not None:
        return np.asarray(chain.home, dtype=float)
    lo, hi = joint_limits(chain)
    return 0.5 * (lo + hi)


def default_chain() -> KinematicChain:
    """Six-axis industrial arm (UR10 Denavit-Hartenberg table), home pose above the table in front."""
    home = [math.pi, -math.pi / 2, math.pi / 2, -math.pi / 2, -math.pi / 2, 0.0]
    table = [
        (0.0, math.pi / 2, 0.1273),
        (-0.612, 0.0, 0.0),
        (-0.5723, 0.0, 0.0),
        (0.0, math.pi / 2, 0.163941),
        (0.0, -math.pi / 2, 0.1157),
        (0.0, 0.0, 0.0922),
    ]
    rows = [DHRow(a=a, alpha=alpha, d=d, lo=h - math.pi, hi=h + math.pi)
            for (a, alpha, d), h in zip(table, home)]
    return KinematicChain(dh=rows, home=home)


# Pose perturbation
def sample_pose_perturbation(ranges: PoseRanges, seed: int, pivot=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Tabletop perturbation: yaw about the vertical through pivot, then an x/y shift."""
    rng = np.random.Generator(np.random.Philox(seed))
    tx = rng.uniform(*ranges.tx_range)
    ty = rng.uniform(*ranges.ty_range)
    yaw = rng.uniform(*ranges.yaw_range)
    pivot = np.asarray(pivot, dtype=float)
    rot = Rotation.from_euler("z", yaw)
    translation = pivot + np.array([tx, ty, 0.0]) - rot.apply(pivot)
    translation[2] = 0.0
    return RigidTransform.from_rotation(rot, translation)


def sample_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


@dataclass
class RetargetSample:
    index: int
    seed: int
    transform: RigidTransform
    trajectory: EeTrajectory
    joints: Optional[np.ndarray] = None
    error: Optional[dict] = None
    failed_frame: Optional[int] = None

    @property
    def success(self) -> bool:
        return self.error is None


def _one_sample(tau: EeTrajectory, start: int, end: int, ranges: PoseRanges, master_seed: int,
                index: int, chain: Optional[KinematicChain], pivot) -> RetargetSample:
    seed = sample_seed(master_seed, index)
    t_ao = sample_pose_perturbation(ranges, seed, pivot)
    trajectory = retarget(tau, start, end, t_ao)
    sample = RetargetSample(index=index, seed=seed, transform=t_ao, trajectory=trajectory)
    if chain is None:
        return sample

    try:
        sample.joints = solve_trajectory(chain, trajectory)
    except IkNoConvergence as e:
        sample.error, sample.failed_frame = e.to_dict(), e.details["frame"]
    return sample


def generate_samples(tau: EeTrajectory, start: int, end: int, ranges: PoseRanges, master_seed: int,
                     count: int, chain: Optional[KinematicChain] = None, pivot=(0.0, 0.0, 0.0),
                     jobs: int = 1) -> List[RetargetSample]:
    """Retarget the demonstration to `count` perturbed object poses, one RNG stream per sample."""
    split_trajectory(tau, start, end)

    def run(i: int) -> RetargetSample:
        return _one_sample(tau, start, end, ranges, master_seed, i, chain, pivot)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(run, range(count)))
    else:
        samples = [run(i) for i in range(count)]

    failures = sum(not s.success for s in samples)
    logger.info(f"Retargeted {count} samples, {failures} IK failure(s)")
    return samples
