"""Tests for rigid transforms, ICP and oriented bounding boxes."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation

from artigen.error_handling import DegenerateCloud
from artigen.geometry import (
    LABEL_MOVABLE,
    LABEL_STATIC,
    Edge,
    LabeledPointCloud,
    RigidTransform,
    canonical_quat,
    check_spread,
    compose,
    icp_align,
    invert,
    obb_edges,
    obb_fit,
    point_line_distance,
    robot_label,
    slerp,
    transform_cloud,
    transform_distance,
)

CUBE_CORNERS = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])


def rz(degrees: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    return RigidTransform.from_yaw(math.radians(degrees), translation)


def assert_same_transform(a: RigidTransform, b: RigidTransform, rot_tol: float = 1e-6, pos_tol: float = 1e-9) -> None:
    angle, distance = transform_distance(a, b)
    assert angle <= rot_tol
    assert distance <= pos_tol


class TestRigidTransform:
    def test_identity_composition(self) -> None:
        """Checks identity is neutral under composition."""
        t = RigidTransform.from_axis_angle([0.2, -0.4, 1.0], 0.7, [0.1, 0.2, 0.3])
        assert_same_transform(compose(RigidTransform.identity(), t), t)
        assert_same_transform(compose(t, RigidTransform.identity()), t)

    def test_inverse(self) -> None:
        """Checks T composed with its inverse is identity."""
        t = RigidTransform.from_axis_angle([1.0, 1.0, 0.0], 1.1, [0.5, -0.3, 2.0])
        assert_same_transform(compose(t, invert(t)), RigidTransform.identity())
        assert_same_transform(t @ t.inverse(), RigidTransform.identity())

    def test_quarter_turns_add_up(self) -> None:
        """Checks two 90 degree yaws make a 180 degree yaw."""
        assert_same_transform(compose(rz(90), rz(90)), rz(180))

    def test_composition_order(self) -> None:
        """Checks compose applies the second transform first."""
        t1 = rz(30, (1.0, 0.0, 0.0))
        t2 = RigidTransform.from_axis_angle([1.0, 0.0, 0.0], 0.4, [0.0, 2.0, 0.0])
        point = np.array([0.3, -0.2, 0.5])
        np.testing.assert_allclose(compose(t1, t2).apply(point), t1.apply(t2.apply(point)), atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_composition_is_associative(self, seed: int) -> None:
        """Checks (a b) c and a (b c) agree for random transforms."""
        rng = np.random.default_rng(seed)
        a, b, c = (RigidTransform.from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi),
                                                  rng.uniform(-1.0, 1.0, 3)) for _ in range(3))
        assert_same_transform(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-6, 1e-9)

    def test_quaternion_sign_is_canonical(self) -> None:
        """Checks q and -q map to the same stored quaternion with w >= 0."""
        q = canonical_quat([-0.5, 0.5, -0.5, 0.5])
        assert q[0] >= 0
        np.testing.assert_allclose(q, canonical_quat([0.5, -0.5, 0.5, -0.5]))
        np.testing.assert_allclose(canonical_quat([-1.0, 0.0, 0.0, 0.0]), [1.0, 0.0, 0.0, 0.0])

    def test_zero_quaternion_rejected(self) -> None:
        """Checks a zero quaternion is refused."""
        with pytest.raises(ValueError):
            RigidTransform(np.zeros(4), np.zeros(3))

    def test_matrix_round_trip(self) -> None:
        """Checks from_matrix inverts as_matrix."""
        t = RigidTransform.from_axis_angle([0.3, 0.1, -1.0], 2.5, [0.4, 0.0, -0.1])
        assert_same_transform(RigidTransform.from_matrix(t.as_matrix()), t)


class TestTransformCloud:
    def test_translation(self) -> None:
        """Checks a pure translation moves the origin."""
        pc = LabeledPointCloud.uniform([[0.0, 0.0, 0.0]], LABEL_STATIC)
        moved = transform_cloud(RigidTransform(np.array([1.0, 0, 0, 0]), [1.0, 0.0, 0.0]), pc)
        np.testing.assert_allclose(moved.points, [[1.0, 0.0, 0.0]])
        np.testing.assert_array_equal(moved.labels, pc.labels)

    def test_yaw(self) -> None:
        """Checks a 90 degree yaw maps x onto y."""
        pc = LabeledPointCloud.uniform([[1.0, 0.0, 0.0]], LABEL_MOVABLE)
        np.testing.assert_allclose(transform_cloud(rz(90), pc).points, [[0.0, 1.0, 0.0]], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_distances_preserved(self, seed: int) -> None:
        """Checks a rigid transform keeps every pairwise distance and the labels."""
        rng = np.random.default_rng(seed)
        pc = LabeledPointCloud.uniform(rng.random((50, 3)), LABEL_MOVABLE)
        t = RigidTransform.from_axis_angle(rng.normal(size=3), rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0, 3))
        moved = transform_cloud(t, pc)
        np.testing.assert_allclose(pdist(moved.points), pdist(pc.points), atol=1e-12)
        np.testing.assert_array_equal(moved.labels, pc.labels)

    def test_empty_cloud(self) -> None:
        """Checks an empty cloud is rejected."""
        with pytest.raises(DegenerateCloud):
            transform_cloud(rz(10), LabeledPointCloud.concat([]))

    def test_label_selection(self) -> None:
        """Checks label filters split static, movable and robot points."""
        pc = LabeledPointCloud(np.arange(12.0).reshape(4, 3), [LABEL_STATIC, LABEL_MOVABLE, robot_label(0), robot_label(3)])
        assert len(pc.static()) == 1
        assert len(pc.movable()) == 1
        assert len(pc.robot()) == 2


class TestSlerp:
    def test_endpoints(self) -> None:
        """Checks interpolation starts and ends on the inputs."""
        q0, q1 = rz(0).rotation, rz(120).rotation
        out = slerp(q0, q1, [0.0, 1.0])
        np.testing.assert_allclose(out[0], q0, atol=1e-12)
        np.testing.assert_allclose(out[1], q1, atol=1e-12)

    def test_constant_angular_speed(self) -> None:
        """Checks equal fractions give equal rotation steps."""
        out = slerp(rz(0).rotation, rz(100).rotation, np.linspace(0.0, 1.0, 11))
        steps = [transform_distance(RigidTransform(a, np.zeros(3)), RigidTransform(b, np.zeros(3)))[0]
                 for a, b in zip(out[:-1], out[1:])]
        np.testing.assert_allclose(steps, math.radians(10.0), atol=1e-9)


class TestIcp:
    def test_identical_clouds(self) -> None:
        """Checks aligning a cloud to itself gives identity."""
        pts = np.random.default_rng(0).random((100, 3))
        assert_same_transform(icp_align(pts, pts), RigidTransform.identity(), 1e-6, 1e-6)

    def test_known_transform(self) -> None:
        """Checks ICP recovers a known rigid motion of random cube points."""
        pts = np.random.default_rng(1).random((100, 3))
        t0 = RigidTransform.from_axis_angle([0.3, -0.2, 1.0], math.radians(25.0), [0.05, -0.08, 0.03])
        assert_same_transform(icp_align(pts, t0.apply(pts)), t0, 1e-4, 1e-4)

    @pytest.mark.parametrize("seed", range(100))
    def test_random_small_motions(self, seed: int) -> None:
        """Checks recovery for random rotations up to 30 degrees."""
        rng = np.random.default_rng(100 + seed)
        pts = rng.random((100, 3)) * [0.4, 0.3, 0.2]
        axis = rng.normal(size=3)
        t0 = RigidTransform.from_axis_angle(axis, math.radians(rng.uniform(0.0, 30.0)), rng.uniform(-0.05, 0.05, 3))
        assert_same_transform(icp_align(pts, t0.apply(pts)), t0, 1e-4, 1e-4)

    def test_collinear_points(self) -> None:
        """Checks three collinear points are degenerate."""
        line = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(DegenerateCloud):
            icp_align(line, line)


class TestSpread:
    def test_planar_points(self) -> None:
        """Checks coplanar points are rejected."""
        grid = np.array([[x, y, 0.0] for x in range(5) for y in range(5)], dtype=float)
        with pytest.raises(DegenerateCloud):
            check_spread(grid)

    def test_volume_points(self) -> None:
        """Checks cube corners pass."""
        check_spread(CUBE_CORNERS)


class TestObb:
    def test_unit_cube(self) -> None:
        """Checks the unit cube box center and half extents."""
        box = obb_fit(CUBE_CORNERS)
        np.testing.assert_allclose(box.center, [0.5, 0.5, 0.5], atol=1e-9)
        np.testing.assert_allclose(np.sort(box.half_extents), [0.5, 0.5, 0.5], atol=1e-9)

    def test_rotated_cube(self) -> None:
        """Checks a yawed cube keeps its extents and contains every corner."""
        corners = rz(30).apply(CUBE_CORNERS)
        box = obb_fit(corners)
        np.testing.assert_allclose(np.sort(box.half_extents), [0.5, 0.5, 0.5], atol=1e-6)
        assert box.volume() == pytest.approx(1.0, abs=1e-6)
        assert np.all(box.contains(corners))

    def test_rotated_box_axes(self) -> None:
        """Checks box axes follow a rotated, elongated box."""
        lo, hi = np.zeros(3), np.array([0.4, 0.2, 0.1])
        pts = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        t = RigidTransform.from_axis_angle([0.2, 0.5, 1.0], 0.6)
        box = obb_fit(t.apply(pts))
        order = np.argsort(box.half_extents)[::-1]
        np.testing.assert_allclose(box.half_extents[order], [0.2, 0.1, 0.05], atol=1e-6)
        longest = box.axes[:, order[0]]
        assert abs(float(longest @ t.apply_vector([1.0, 0.0, 0.0]))) == pytest.approx(1.0, abs=1e-6)

    def test_never_smaller_than_points(self) -> None:
        """Checks the box contains every input point."""
        pts = np.random.default_rng(3).normal(size=(300, 3)) * [0.3, 0.1, 0.05]
        assert np.all(obb_fit(pts).contains(pts))

    def test_planar_points(self) -> None:
        """Checks points on a plane are degenerate."""
        grid = np.array([[x, y, 0.0] for x in range(4) for y in range(4)], dtype=float)
        with pytest.raises(DegenerateCloud):
            obb_fit(grid)


class TestEdges:
    def test_twelve_edges(self) -> None:
        """Checks a box yields four edges along each axis."""
        edges = obb_edges(obb_fit(CUBE_CORNERS))
        assert len(edges) == 12
        dirs = np.abs(np.array([e.direction() for e in edges]))
        counts = np.sum(np.isclose(dirs, 1.0, atol=1e-9), axis=0)
        np.testing.assert_array_equal(counts, [4, 4, 4])

    def test_total_length(self) -> None:
        """Checks total edge length equals 8(a+b+c)."""
        pts = np.array([[x, y, z] for x in (0.0, 0.6) for y in (0.0, 0.4) for z in (0.0, 0.2)])
        box = obb_fit(pts)
        total = sum(e.length() for e in obb_edges(box))
        assert total == pytest.approx(8.0 * float(np.sum(box.half_extents)), rel=1e-9)
        assert total == pytest.approx(8.0 * (0.3 + 0.2 + 0.1), rel=1e-6)

    def test_rotated_edge_directions(self) -> None:
        """Checks edge directions are the rotated axis vectors."""
        t = rz(30)
        edges = obb_edges(obb_fit(t.apply(CUBE_CORNERS)))
        expected = np.abs(t.matrix.T)
        for e in edges:
            d = np.abs(e.direction())
            assert min(np.linalg.norm(d - row) for row in expected) < 1e-6

    def test_segment_distance_clamps(self) -> None:
        """Checks edge distance measures to the nearest endpoint beyond the segment."""
        edge = Edge([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        assert edge.distance_to_point([2.0, 0.0, 0.0]) == pytest.approx(1.0)
        assert edge.distance_to_point([0.5, 0.3, 0.0]) == pytest.approx(0.3)


def test_point_line_distance() -> None:
    """Checks distance to an infinite line, scalar and batched."""
    assert point_line_distance([5.0, 2.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == pytest.approx(2.0)
    dist = point_line_distance([[0.0, 0.0, 3.0], [7.0, 0.0, 0.0]], [0.0, 0.0, 0.0], [2.0, 0.0, 0.0])
    np.testing.assert_allclose(dist, [3.0, 0.0])


def test_rotation_helpers_agree_with_scipy() -> None:
    """Checks wxyz storage matches scipy's rotation."""
    rot = Rotation.from_euler("xyz", [0.1, -0.2, 0.3])
    t = RigidTransform.from_rotation(rot)
    np.testing.assert_allclose(t.matrix, rot.as_matrix(), atol=1e-12)
