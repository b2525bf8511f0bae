import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from artigen.config import CONTACT_RADIUS
from artigen.error_handling import (
    DegenerateCloud,
    DegeneratePart,
    FrameMismatch,
    NoContact,
    ValidationError,
)
from artigen.geometry import LabeledPointCloud, RigidTransform, compose, invert
from artigen.models import ContactPair

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

MIN_EXTENT = 1e-6
BOUNDS_MARGIN = 0.10


@dataclass(frozen=True, eq=False)
class ContactTrajectory:
    """Contact point positions for frames start_frame .. start_frame + len - 1."""
    points: np.ndarray
    start_frame: int = 0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(points) < 2:
            raise ValidationError(f"A contact trajectory needs at least 2 points, got {len(points)}")
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.points) - 1

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


def _points(cloud) -> np.ndarray:
    if isinstance(cloud, LabeledPointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def approach_direction(pose: RigidTransform) -> np.ndarray:
    """Tool z axis of an end-effector pose."""
    return pose.matrix[:, 2].copy()


def detect_contact(robot_points_t, movable, ee_dir, frame: int,
                   radius: float = CONTACT_RADIUS) -> ContactPair:
    robot, move = _points(robot_points_t), _points(movable)
    if len(robot) == 0 or len(move) == 0:
        raise DegenerateCloud("Contact detection needs nonempty robot and movable clouds",
                              details={"robot": len(robot), "movable": len(move)})

    dist, idx = cKDTree(move).query(robot)
    best = int(np.argmin(dist))
    if dist[best] > radius:
        raise NoContact(f"Closest robot/movable distance {dist[best]:.4f} m exceeds radius {radius} m",
                        details={"frame": frame, "distance": float(dist[best])})

    ee = np.asarray(ee_dir, dtype=float)
    ee = ee / np.linalg.norm(ee)
    return ContactPair(
        pc_robot=tuple(robot[best]),
        pc_move=tuple(move[idx[best]]),
        frame=int(frame),
        ee_dir=tuple(ee),
    )


def contact_trajectory(ee_poses: Sequence[RigidTransform], contact: ContactPair,
                       start: int, end: int) -> ContactTrajectory:
    """Carry PC_r rigidly with the end effector from the start frame to every later frame."""
    if not 0 <= start < end < len(ee_poses):
        raise FrameMismatch(f"Motion window {start}..{end} does not fit {len(ee_poses)} poses")
    anchor = invert(ee_poses[start])
    pc_r = np.asarray(contact.pc_robot, dtype=float)
    points = [compose(ee_poses[t], anchor).apply(pc_r) for t in range(start, end + 1)]
    return ContactTrajectory(np.array(points), start_frame=start)


def _unit_cube_bounds(points: np.ndarray, what: str) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = points.min(axis=0), points.max(axis=0)
    extent = hi - lo
    if np.any(extent < MIN_EXTENT):
        raise DegeneratePart(f"{what} is flat along axis {int(np.argmin(extent))}",
                             details={"extent": extent.tolist()})
    return lo, extent


def nocs_map(part_src, part_dst, pc_src) -> np.ndarray:
    """Map a point of one part onto another through per-axis unit-cube normalization."""
    src, dst = _points(part_src), _points(part_dst)
    if len(src) == 0 or len(dst) == 0:
        raise DegenerateCloud("NOCS mapping needs nonempty parts")
    lo_s, ext_s = _unit_cube_bounds(src, "source part")
    lo_d, ext_d = _unit_cube_bounds(dst, "target part")

    u = (np.asarray(pc_src, dtype=float) - lo_s) / ext_s
    if np.any(u < -BOUNDS_MARGIN) or np.any(u > 1.0 + BOUNDS_MARGIN):
        raise ValidationError("Contact point lies outside the source part bounds",
                              details={"normalized": u.tolist()})

    _, idx = cKDTree((dst - lo_d) / ext_d).query(u)
    mapped = dst[int(idx)]
    logger.debug(f"NOCS mapped {np.round(pc_src, 4).tolist()} -> {np.round(mapped, 4).tolist()}")
    return mapped.copy()
