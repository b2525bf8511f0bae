import logging
from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.transform import Rotation, Slerp

from artigen.error_handling import DegenerateCloud

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# Point labels as stored in the PLY `label` property
LABEL_STATIC = 0
LABEL_MOVABLE = 1
LABEL_ROBOT_BASE = 100

PLANARITY_TOL = 1e-6


def robot_label(link: int) -> int:
    return LABEL_ROBOT_BASE + int(link)


# Quaternions are stored (w, x, y, z); scipy uses (x, y, z, w).
def canonical_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    norm = np.linalg.norm(q)
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError(f"Invalid quaternion: {q}")
    q = q / norm
    if q[0] < 0:
        q = -q
    return q


def quat_to_rotation(q) -> Rotation:
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])


def rotation_to_quat(rot: Rotation) -> np.ndarray:
    x, y, z, w = rot.as_quat()
    return canonical_quat([w, x, y, z])


def quat_about_axis(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return rotation_to_quat(Rotation.from_rotvec(axis * angle))


def quat_angle(q1, q2) -> float:
    """Rotation angle between two orientations, in [0, pi]."""
    dot = abs(float(np.dot(canonical_quat(q1), canonical_quat(q2))))
    return 2.0 * float(np.arccos(min(1.0, dot)))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", canonical_quat(self.rotation))
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError(f"Non-finite translation: {t}")
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rotation(cls, rot: Rotation, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(rotation_to_quat(rot), np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls.from_rotation(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls.from_rotation(Rotation.from_euler("z", yaw), translation)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(quat_about_axis(axis, angle), np.asarray(translation, dtype=float))

    @property
    def rot(self) -> Rotation:
        return quat_to_rotation(self.rotation)

    @property
    def matrix(self) -> np.ndarray:
        return self.rot.as_matrix()

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.matrix
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.matrix.T + self.translation

    def apply_vector(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def angle(self) -> float:
        return quat_angle(self.rotation, [1.0, 0.0, 0.0, 0.0])

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self) -> str:
        return f"RigidTransform(q={np.round(self.rotation, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def compose(t1: RigidTransform, t2: RigidTransform) -> RigidTransform:
    """Transform applying t2 first, then t1."""
    r1 = t1.rot
    return RigidTransform.from_rotation(r1 * t2.rot, r1.apply(t2.translation) + t1.translation)


def invert(t: RigidTransform) -> RigidTransform:
    r_inv = t.rot.inv()
    return RigidTransform.from_rotation(r_inv, -r_inv.apply(t.translation))


def transform_distance(t1: RigidTransform, t2: RigidTransform) -> Tuple[float, float]:
    """(rotation angle in radians, translation distance in meters) between two transforms."""
    return (quat_angle(t1.rotation, t2.rotation),
            float(np.linalg.norm(t1.translation - t2.translation)))


def slerp(q0, q1, fractions) -> np.ndarray:
    """Spherical interpolation along the shorter arc, returned as (n, 4) wxyz rows."""
    key_rots = Rotation.from_quat(np.stack([
        np.roll(canonical_quat(q0), -1),
        np.roll(canonical_quat(q1), -1),
    ]))
    interpolated = Slerp([0.0, 1.0], key_rots)(np.clip(np.atleast_1d(fractions), 0.0, 1.0))
    return np.array([rotation_to_quat(r) for r in interpolated])


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(points) != len(labels):
            raise ValueError(f"Points ({len(points)}) and labels ({len(labels)}) differ in length")
        if not np.all(np.isfinite(points)):
            raise ValueError("Point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def uniform(cls, points, label: int) -> "LabeledPointCloud":
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(points, np.full(len(points), label, dtype=np.int64))

    @classmethod
    def concat(cls, clouds: Iterable["LabeledPointCloud"]) -> "LabeledPointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
        return cls(np.vstack([c.points for c in clouds]), np.concatenate([c.labels for c in clouds]))

    def __len__(self) -> int:
        return len(self.points)

    def select(self, *labels: int) -> "LabeledPointCloud":
        mask = np.isin(self.labels, labels)
        return LabeledPointCloud(self.points[mask], self.labels[mask])

    def movable(self) -> "LabeledPointCloud":
        return self.select(LABEL_MOVABLE)

    def static(self) -> "LabeledPointCloud":
        return self.select(LABEL_STATIC)

    def robot(self) -> "LabeledPointCloud":
        mask = self.labels >= LABEL_ROBOT_BASE
        return LabeledPointCloud(self.points[mask], self.labels[mask])

    def with_points(self, points) -> "LabeledPointCloud":
        return LabeledPointCloud(points, self.labels)

    def require_nonempty(self, what: str = "point cloud") -> "LabeledPointCloud":
        if len(self) == 0:
            raise DegenerateCloud(f"{what} is empty")
        return self


def transform_cloud(t: RigidTransform, pc: LabeledPointCloud) -> LabeledPointCloud:
    pc.require_nonempty()
    return pc.with_points(t.apply(pc.points))


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, LabeledPointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def check_spread(points: np.ndarray, what: str = "points") -> None:
    """Raise DegenerateCloud unless the points span three dimensions."""
    if len(points) < 4:
        raise DegenerateCloud(f"{what}: need at least 4 points, got {len(points)}",
                              details={"count": int(len(points))})
    singular = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if singular[0] <= 0 or singular[-1] / singular[0] < PLANARITY_TOL:
        raise DegenerateCloud(f"{what} are coplanar or collinear",
                              details={"singular_values": singular.tolist()})


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source rows onto target rows."""
    cs, ct = source.mean(axis=0), target.mean(axis=0)
    h = (source - cs).T @ (target - ct)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform.from_rotation(Rotation.from_matrix(r), ct - r @ cs)


def _principal_axes(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    axes = vecs[:, ::-1]
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    return axes


def _icp_run(src: np.ndarray, tree: cKDTree, dst: np.ndarray, init: RigidTransform,
             max_iters: int, tol: float) -> Tuple[RigidTransform, float]:
    current = init
    prev_rms = np.inf
    for _ in range(max_iters):
        moved = current.apply(src)
        dist, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(dist ** 2)))
        if prev_rms - rms < tol:
            break
        prev_rms = rms
        current = compose(kabsch(moved, dst[idx]), current)
    dist, _ = tree.query(current.apply(src))
    return current, float(np.sqrt(np.mean(dist ** 2)))


def icp_align(source, target, max_iters: int = 50, tol: float = 1e-10) -> RigidTransform:
    """Point-to-point ICP returning T such that T·source overlays target.

    Starts from identity, from the centroid-aligning translation and from the
    four proper principal-axis alignments; the lowest final RMS wins.
    """
    src, dst = _as_points(source), _as_points(target)
    check_spread(src, "ICP source")
    check_spread(dst, "ICP target")

    tree = cKDTree(dst)
    cs, ct = src.mean(axis=0), dst.mean(axis=0)
    starts = [RigidTransform.identity()]
    if not np.allclose(cs, ct):
        starts.append(RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), ct - cs))
    axes_s, axes_d = _principal_axes(src), _principal_axes(dst)
    for signs in ((1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1)):
        r = axes_d @ np.diag(signs) @ axes_s.T
        starts.append(RigidTransform.from_rotation(Rotation.from_matrix(r), ct - r @ cs))

    best, best_rms = None, np.inf
    for start in starts:
        candidate, rms = _icp_run(src, tree, dst, start, max_iters, tol)
        if rms < best_rms - 1e-15:
            best, best_rms = candidate, rms
    logger.debug(f"ICP converged with RMS {best_rms:.3e} over {len(starts)} starts")
    return best


@dataclass(frozen=True, eq=False)
class Edge:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(3)
        b = np.asarray(self.b, dtype=float).reshape(3)
        if np.linalg.norm(b - a) <= 1e-9:
            raise ValueError("Edge endpoints coincide")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def direction(self) -> np.ndarray:
        d = self.b - self.a
        return d / np.linalg.norm(d)

    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.a + self.b)

    def sample(self, n: int = 16) -> np.ndarray:
        u = np.linspace(0.0, 1.0, n)[:, None]
        return self.a + u * (self.b - self.a)

    def distance_to_point(self, points) -> np.ndarray:
        """Distance from each point to the segment."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.b - self.a
        u = np.clip((p - self.a) @ d / (d @ d), 0.0, 1.0)
        dist = np.linalg.norm(p - (self.a + u[:, None] * d), axis=1)
        return dist if np.ndim(points) > 1 else dist[0]


@dataclass(frozen=True, eq=False)
class OrientedBoundingBox:
    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        half = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(half <= 0):
            raise ValueError(f"Box half extents must be positive: {half}")
        object.__setattr__(self, "half_extents", half)
        object.__setattr__(self, "rotation", canonical_quat(self.rotation))

    @property
    def axes(self) -> np.ndarray:
        """Box axes as matrix columns, world frame."""
        return quat_to_rotation(self.rotation).as_matrix()

    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def diagonal(self) -> float:
        return float(2.0 * np.linalg.norm(self.half_extents))

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.center) @ self.axes

    def contains(self, points, inflate: float = 1e-6) -> np.ndarray:
        local = np.abs(np.atleast_2d(self.to_local(points)))
        return np.all(local <= self.half_extents + inflate, axis=1)

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return self.center + (signs * self.half_extents) @ self.axes.T


def _box_from_axes(points: np.ndarray, axes: np.ndarray) -> OrientedBoundingBox:
    if np.linalg.det(axes) < 0:
        axes = axes.copy()
        axes[:, 2] = -axes[:, 2]
    local = points @ axes
    lo, hi = local.min(axis=0), local.max(axis=0)
    half = np.maximum((hi - lo) / 2.0, 1e-12)
    center = axes @ ((hi + lo) / 2.0)
    return OrientedBoundingBox(center, half, rotation_to_quat(Rotation.from_matrix(axes)))


def _min_area_rectangle(points2: np.ndarray) -> np.ndarray:
    """Direction of the first side of the minimum-area enclosing rectangle."""
    hull = ConvexHull(points2)
    verts = points2[hull.vertices]
    sides = np.roll(verts, -1, axis=0) - verts
    angles = np.unique(np.round(np.mod(np.arctan2(sides[:, 1], sides[:, 0]), np.pi / 2), 12))
    c, s = np.cos(angles), np.sin(angles)
    # rotating calipers: every optimal rectangle shares a side with the hull
    proj_u = verts @ np.stack([c, s])
    proj_v = verts @ np.stack([-s, c])
    areas = np.ptp(proj_u, axis=0) * np.ptp(proj_v, axis=0)
    best = int(np.argmin(areas))
    return np.array([c[best], s[best]])


def _hull_face_normals(points: np.ndarray, limit: int = 32) -> List[np.ndarray]:
    hull = ConvexHull(points)
    normals = hull.equations[:, :3].copy()
    # fold n and -n together
    flip = normals[np.arange(len(normals)), np.argmax(np.abs(normals), axis=1)] < 0
    normals[flip] = -normals[flip]
    tri = points[hull.simplices]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    keys, inverse = np.unique(np.round(normals, 3), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    group_area = np.bincount(inverse, weights=areas, minlength=len(keys))
    result = []
    for g in np.argsort(-group_area, kind="stable")[:limit]:
        members = inverse == g
        n = (normals[members] * areas[members, None]).sum(axis=0)
        norm = np.linalg.norm(n)
        if norm > 1e-12:
            result.append(n / norm)
    return result


def obb_fit(points) -> OrientedBoundingBox:
    """Minimum-volume box over the principal-axis frame and hull-face-aligned frames."""
    pts = _as_points(points)
    check_spread(pts, "box points")

    best = _box_from_axes(pts, _principal_axes(pts))
    try:
        normals = _hull_face_normals(pts)
    except QhullError as e:
        logger.debug(f"Hull candidates skipped: {e}")
        normals = []

    for n in normals:
        helper = np.eye(3)[int(np.argmin(np.abs(n)))]
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        try:
            cu, cv = _min_area_rectangle(np.column_stack([pts @ u, pts @ v]))
        except QhullError:
            continue
        axis_u = cu * u + cv * v
        axis_v = np.cross(n, axis_u)
        candidate = _box_from_axes(pts, np.column_stack([axis_u, axis_v, n]))
        if candidate.volume() < best.volume() * (1.0 - 1e-12):
            best = candidate
    return best


# Sign order of the two remaining coordinates for the four edges along one axis
_EDGE_SIGNS = ((-1, -1), (1, -1), (-1, 1), (1, 1))


def obb_edges(box: OrientedBoundingBox) -> List[Edge]:
    """The 12 box edges: four along local x, then y, then z."""
    edges = []
    h = box.half_extents
    for k in range(3):
        i, j = [m for m in range(3) if m != k]
        for si, sj in _EDGE_SIGNS:
            a = np.zeros(3)
            a[i], a[j], a[k] = si * h[i], sj * h[j], -h[k]
            b = a.copy()
            b[k] = h[k]
            edges.append(Edge(box.center + box.axes @ a, box.center + box.axes @ b))
    return edges


def point_line_distance(points, origin, direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    rel = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(origin, dtype=float)
    dist = np.linalg.norm(rel - np.outer(rel @ d, d), axis=1)
    return dist if np.ndim(points) > 1 else float(dist[0])


def rotate_about_axis(points, origin, direction, angle: float) -> np.ndarray:
    rot = Rotation.from_rotvec(np.asarray(direction, dtype=float) / np.linalg.norm(direction) * angle)
    origin = np.asarray(origin, dtype=float)
    return rot.apply(np.asarray(points, dtype=float) - origin) + origin


def axis_transform(origin, direction, angle: float) -> RigidTransform:
    """Rigid rotation by angle about the line through origin along direction."""
    rot = Rotation.from_rotvec(np.asarray(direction, dtype=float) / np.linalg.norm(direction) * angle)
    origin = np.asarray(origin, dtype=float)
    return RigidTransform.from_rotation(rot, origin - rot.apply(origin))
