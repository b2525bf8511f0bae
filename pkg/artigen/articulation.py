import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from artigen.contact import ContactTrajectory
from artigen.error_handling import (
    DegenerateCloud,
    InsufficientPairs,
    NoIntersection,
    ValidationError,
)
from artigen.geometry import (
    Edge,
    LabeledPointCloud,
    OrientedBoundingBox,
    obb_edges,
    obb_fit,
    point_line_distance,
    rotate_about_axis,
)
from artigen.models import (
    ArticulationTrace,
    ContactPair,
    EdgeSelectionConfig,
    JointKind,
    JointModel,
    MotionConfig,
)

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

EDGE_SAMPLES = 16
ANGLE_WEIGHT = 0.8
DISTANCE_WEIGHT = 0.2
ON_PART_TOL = 1e-3


def _points(cloud) -> np.ndarray:
    if isinstance(cloud, LabeledPointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# Joint estimation
def edge_score(e_static: Edge, e_move: Edge, norm_scale: float) -> float:
    if norm_scale <= 0:
        raise ValidationError(f"Edge score normalization must be positive, got {norm_scale}")
    parallelism = abs(float(np.dot(e_static.direction(), e_move.direction())))
    a, b = e_static.sample(EDGE_SAMPLES), e_move.sample(EDGE_SAMPLES)
    # pair samples in whichever order makes the score independent of edge orientation
    mean_dist = min(np.linalg.norm(a - b, axis=1).mean(), np.linalg.norm(a - b[::-1], axis=1).mean())
    return (1.0 - parallelism) * ANGLE_WEIGHT + DISTANCE_WEIGHT * float(mean_dist) / norm_scale


def select_edge_pair(b_static: OrientedBoundingBox, b_move: OrientedBoundingBox, ee_dir, pc_move,
                     kind: JointKind, cfg: EdgeSelectionConfig = EdgeSelectionConfig()) -> Tuple[Edge, Edge]:
    """Pick the (static, movable) edge pair that most plausibly carries the joint.

    The approach-alignment term is added for revolute joints and subtracted for
    prismatic ones. The contact-distance term always favors movable edges far
    from the contact.
    """
    static_edges, move_edges = obb_edges(b_static), obb_edges(b_move)
    norm_scale, move_diag = b_static.diagonal(), b_move.diagonal()
    ee = _unit(ee_dir)
    sign = 1.0 if JointKind(kind) == JointKind.REVOLUTE else -1.0

    # lambda3 is subtracted for both kinds: hinges and slides sit away from the grasp
    move_terms = [
        sign * cfg.lambda2 * abs(float(np.dot(e.direction(), ee)))
        - cfg.lambda3 * float(e.distance_to_point(pc_move)) / move_diag
        for e in move_edges
    ]

    best, best_cost = (0, 0), np.inf
    for i, e_s in enumerate(static_edges):
        for j, e_m in enumerate(move_edges):
            cost = cfg.lambda1 * edge_score(e_s, e_m, norm_scale) + move_terms[j]
            if cost < best_cost - 1e-12:
                best, best_cost = (i, j), cost
    logger.debug(f"Selected edge pair {best} with cost {best_cost:.4f}")
    return static_edges[best[0]], move_edges[best[1]]


def joint_direction(e_move: Edge) -> np.ndarray:
    d = e_move.direction()
    if d[int(np.argmax(np.abs(d)))] < 0:
        d = -d
    return d


def joint_center(part_move, part_static, e_move: Edge, e_static: Edge,
                 cfg: EdgeSelectionConfig = EdgeSelectionConfig(),
                 epsilon: Optional[float] = None) -> np.ndarray:
    """Mean midpoint of the K closest movable/static pairs near the selected edges."""
    move, static = _points(part_move), _points(part_static)
    eps = epsilon if epsilon is not None else cfg.epsilon
    if eps is None:
        eps = 0.05 * obb_fit(move).diagonal()

    near_move = move[e_move.distance_to_point(move) <= eps]
    near_static = static[e_static.distance_to_point(static) <= eps]
    if len(near_move) < cfg.K or len(near_static) == 0:
        raise InsufficientPairs(
            f"Only {len(near_move)} movable points within {eps:.4f} m of the joint edge (K={cfg.K})",
            details={"candidates": int(len(near_move)), "K": cfg.K, "epsilon": float(eps)},
        )

    dist, idx = cKDTree(near_static).query(near_move)
    order = np.argsort(dist, kind="stable")[:cfg.K]
    midpoints = 0.5 * (near_move[order] + near_static[idx[order]])
    return midpoints.mean(axis=0)


def estimate_joint(part_move, part_static, contact: ContactPair, kind: JointKind,
                   cfg: EdgeSelectionConfig = EdgeSelectionConfig()) -> JointModel:
    """Boxes, edge pair, direction and center in one call; epsilon doubles on too few pairs."""
    kind = JointKind(kind)
    b_move, b_static = obb_fit(_points(part_move)), obb_fit(_points(part_static))
    e_static, e_move = select_edge_pair(b_static, b_move, contact.ee_dir, contact.pc_move, kind, cfg)
    direction = joint_direction(e_move)

    if kind == JointKind.PRISMATIC:
        center = e_move.midpoint()
    else:
        eps = cfg.epsilon if cfg.epsilon is not None else 0.05 * b_move.diagonal()
        for attempt in range(cfg.epsilon_relaxations + 1):
            try:
                center = joint_center(part_move, part_static, e_move, e_static, cfg, epsilon=eps)
                break
            except InsufficientPairs:
                if attempt == cfg.epsilon_relaxations:
                    raise
                eps *= 2.0
                logger.info(f"Relaxing edge proximity to {eps:.4f} m")

    joint = JointModel(kind=kind, direction=tuple(direction), center=tuple(center))
    logger.info(f"Estimated {kind.value} joint: direction={np.round(direction, 4).tolist()}, "
                f"center={np.round(center, 4).tolist()}")
    return joint


# Motion recovery
@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def signed_distance(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.point) @ self.normal


def fit_plane(points) -> Plane:
    pts = _points(points)
    if len(pts) < 3:
        raise DegenerateCloud(f"Plane fit needs at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    _, singular, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if singular.size < 2 or singular[1] <= 1e-9 * max(singular[0], 1e-300):
        raise DegenerateCloud("Face points are collinear")
    return Plane(centroid, vt[-1] / np.linalg.norm(vt[-1]))


def articulate_points(points, joint: JointModel, theta: float) -> np.ndarray:
    if joint.kind == JointKind.REVOLUTE:
        return rotate_about_axis(points, joint.origin(), joint.axis(), theta)
    return np.asarray(points, dtype=float) + theta * joint.axis()


def articulate_plane(plane: Plane, joint: JointModel, theta: float) -> Plane:
    if joint.kind == JointKind.REVOLUTE:
        point = rotate_about_axis(plane.point, joint.origin(), joint.axis(), theta)
        normal = rotate_about_axis(plane.normal, np.zeros(3), joint.axis(), theta)
        return Plane(point, normal)
    return Plane(plane.point + theta * joint.axis(), plane.normal)


def intersect_plane_polyline(plane: Plane, polyline: np.ndarray, near_arc: float) -> np.ndarray:
    """Crossing of the plane with the polyline closest in arc length to near_arc."""
    seg_len = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = plane.signed_distance(polyline)
    s0, s1 = s[:-1], s[1:]
    crossing = np.flatnonzero(s0 * s1 <= 0.0)
    if crossing.size == 0:
        raise NoIntersection("Face plane does not meet the contact trajectory")

    denom = s0[crossing] - s1[crossing]
    flat = np.abs(denom) < 1e-15
    u = np.where(flat, 0.0, s0[crossing] / np.where(flat, 1.0, denom))
    if np.any(flat):
        # segment lies in the plane: take the point nearest the requested arc position
        within = (near_arc - cum[crossing]) / np.where(seg_len[crossing] > 0, seg_len[crossing], 1.0)
        u = np.where(flat, np.clip(within, 0.0, 1.0), u)
    u = np.clip(u, 0.0, 1.0)
    arcs = cum[crossing] + u * seg_len[crossing]
    k = int(np.argmin(np.abs(arcs - near_arc)))
    i = crossing[k]
    return polyline[i] + u[k] * (polyline[i + 1] - polyline[i])


def face_residual(plane: Plane, polyline: np.ndarray, index: int, arc: Optional[np.ndarray] = None) -> float:
    """Distance between trajectory point `index` and the plane/trajectory crossing."""
    if arc is None:
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(polyline, axis=0), axis=1))])
    target = polyline[index]
    try:
        ip = intersect_plane_polyline(plane, polyline, arc[index])
    except NoIntersection:
        return abs(float(plane.signed_distance(target)))
    return float(np.linalg.norm(target - ip))


def contact_face(part_move, pc_move, face_radius: float) -> Plane:
    move = _points(part_move)
    pc = np.asarray(pc_move, dtype=float)
    dist = np.linalg.norm(move - pc, axis=1)
    if dist.size == 0 or dist.min() > ON_PART_TOL:
        raise ValidationError("Contact point is not on the movable part",
                              details={"distance": float(dist.min()) if dist.size else None})
    return fit_plane(move[dist <= face_radius])


def motion_bounds(part_move, joint: JointModel) -> Tuple[float, float]:
    if joint.kind == JointKind.REVOLUTE:
        return -np.pi, np.pi
    move = _points(part_move)
    limit = 2.0 * float(np.linalg.norm(move.max(axis=0) - move.min(axis=0)))
    return -limit, limit


def _bounded_min(f, lo: float, hi: float, tol: float) -> Tuple[float, float]:
    # bounded Brent keeps the golden-section bracket contract with fewer evaluations
    result = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(result.x), float(result.fun)


def _grid_minima(f, lo: float, hi: float, samples: int, tol: float, limit: int,
                 near: float = 0.0) -> List[Tuple[float, float]]:
    """Local minima of f on a uniform grid over [lo, hi], each refined inside its grid bracket.

    The lowest ``limit`` are kept; equal values go to the ones closest to ``near``.
    """
    if hi - lo <= tol:
        x = 0.5 * (lo + hi)
        return [(x, float(f(x)))]
    grid = np.linspace(lo, hi, samples)
    values = np.array([f(x) for x in grid])
    left = np.concatenate([[np.inf], values[:-1]])
    right = np.concatenate([values[1:], [np.inf]])
    minima = np.flatnonzero((values <= left) & (values <= right))
    minima = minima[np.lexsort((np.abs(grid[minima] - near), values[minima]))][:limit]

    found = []
    for i in minima:
        x, fx = _bounded_min(f, grid[max(i - 1, 0)], grid[min(i + 1, samples - 1)], tol)
        found.append((x, fx) if fx < values[i] else (float(grid[i]), float(values[i])))
    return found


def solve_frame(f, bounds: Tuple[float, float], cfg: MotionConfig,
                previous: Optional[float] = None, scale: float = 1.0) -> Tuple[float, float]:
    """Joint value for one frame and its residual.

    Minima near the previous value are tried first; the full range is searched
    only when none of them gets below ``restart_residual``. Every candidate is a
    minimum of f itself, the continuity cost only chooses between them.
    """
    lo, hi = bounds
    if previous is None:
        return min(_grid_minima(f, lo, hi, cfg.global_samples, cfg.tol, cfg.max_candidates), key=lambda c: c[1])

    weight = cfg.continuity_weight * scale

    def cost(candidate: Tuple[float, float]) -> float:
        return candidate[1] + weight * abs(candidate[0] - previous)

    a, b = max(lo, previous - cfg.warm_window), min(hi, previous + cfg.warm_window)
    best = min(_grid_minima(f, a, b, cfg.warm_samples, cfg.tol, cfg.max_candidates, previous), key=cost)
    if best[1] <= cfg.restart_residual:
        return best
    wide = _grid_minima(f, lo, hi, cfg.global_samples, cfg.tol, cfg.max_candidates, previous)
    return min([best] + wide, key=cost)


def _perpendicular_basis(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def fit_axis_circle(points, joint: JointModel) -> Tuple[np.ndarray, float]:
    """Least-squares circle of the points seen along the joint axis.

    Returns the circle center, placed in the plane through the joint center,
    and the radius.
    """
    pts = _points(points)
    axis, origin = joint.axis(), joint.origin()
    u, v = _perpendicular_basis(axis)
    rel = pts - origin
    xy = np.column_stack([rel @ u, rel @ v])
    design = np.column_stack([xy, np.ones(len(xy))])
    if len(xy) < 3 or np.linalg.matrix_rank(design, tol=1e-9) < 3:
        raise DegenerateCloud("Points do not span a circle about the joint axis")

    coef, *_ = np.linalg.lstsq(design, -(xy ** 2).sum(axis=1), rcond=None)
    c = -0.5 * coef[:2]
    r2 = float(c @ c - coef[2])
    if r2 <= 0.0:
        raise DegenerateCloud("Circle fit has no real radius")
    return origin + c[0] * u + c[1] * v, float(np.sqrt(r2))


def _swept_angle(points: np.ndarray, center: np.ndarray, axis: np.ndarray) -> float:
    a, b = points[0] - center, points[-1] - center
    a, b = a - (a @ axis) * axis, b - (b @ axis) * axis
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))


def refine_revolute_center(joint: JointModel, polyline: np.ndarray,
                           cfg: MotionConfig = MotionConfig()) -> JointModel:
    """Joint moved onto the axis of the contact arc when the arc pins it down.

    Frames off the arc are dropped before the final fit. The estimated joint is
    returned unchanged for short, irregular or far-off arcs.
    """
    axis = joint.axis()
    try:
        center, radius = fit_axis_circle(polyline, joint)
        on_arc = np.abs(point_line_distance(polyline, center, axis) - radius) <= cfg.circle_tol
        if on_arc.sum() < max(3, len(polyline) // 2):
            return joint
        arc = polyline[on_arc]
        center, radius = fit_axis_circle(arc, joint)
    except DegenerateCloud as e:
        logger.debug(f"Keeping the estimated joint center: {e.message}")
        return joint

    worst = float(np.max(np.abs(point_line_distance(arc, center, axis) - radius)))
    shift = float(point_line_distance(center, joint.origin(), axis))
    sweep = _swept_angle(arc, center, axis)
    if worst > cfg.circle_tol or shift > cfg.max_center_shift or sweep < cfg.min_sweep:
        logger.debug(f"Arc does not support a new center (worst {worst:.2e} m, shift {shift:.4f} m, "
                     f"sweep {sweep:.3f} rad)")
        return joint
    logger.info(f"Joint center moved {shift * 1000:.2f} mm onto the contact arc axis")
    return JointModel(kind=joint.kind, direction=joint.direction, center=tuple(center))


def recover_motion(part_move, joint: JointModel, contact: ContactPair, traj: ContactTrajectory,
                   cfg: MotionConfig = MotionConfig()) -> ArticulationTrace:
    """Per-frame joint parameter that puts the contact face through the contact trajectory."""
    face = contact_face(part_move, contact.pc_move, cfg.face_radius)
    polyline = traj.points
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(polyline, axis=0), axis=1))])
    bounds = motion_bounds(part_move, joint)
    if joint.kind == JointKind.REVOLUTE:
        if cfg.refine_center:
            joint = refine_revolute_center(joint, polyline, cfg)
        # residual change per radian near the solution
        scale = max(float(point_line_distance(contact.pc_move, joint.origin(), joint.axis())), 1e-3)
    else:
        scale = 1.0

    theta = [0.0]
    residuals = [face_residual(face, polyline, 0, arc)]
    for k in range(1, len(polyline)):
        def objective(value, k=k):
            return face_residual(articulate_plane(face, joint, value), polyline, k, arc)

        previous = theta[-1] if cfg.warm_start else None
        value, residual = solve_frame(objective, bounds, cfg, previous, scale)
        theta.append(value)
        residuals.append(max(residual, 0.0))

    worst = max(residuals)
    logger.info(f"Recovered {len(theta)} frames, final theta {theta[-1]:.4f}, max residual {worst:.2e} m")
    if worst > cfg.accept_residual:
        logger.warning(f"Motion recovery residual {worst:.4f} m exceeds {cfg.accept_residual} m")
    return ArticulationTrace(start_frame=traj.start_frame, theta=theta, residuals=residuals)
