"""Tests for edge scoring, joint estimation and motion recovery."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import PRISMATIC_BASE, PRISMATIC_DRAWER, box_surface

from artigen.articulation import (
    Plane,
    articulate_plane,
    articulate_points,
    contact_face,
    edge_score,
    estimate_joint,
    fit_axis_circle,
    fit_plane,
    intersect_plane_polyline,
    joint_center,
    joint_direction,
    motion_bounds,
    recover_motion,
    refine_revolute_center,
    select_edge_pair,
    solve_frame,
)
from artigen.contact import ContactTrajectory, approach_direction, detect_contact
from artigen.error_handling import DegenerateCloud, InsufficientPairs, NoIntersection, ValidationError
from artigen.geometry import Edge, RigidTransform, obb_edges, obb_fit, point_line_distance
from artigen.models import ContactPair, EdgeSelectionConfig, JointKind, JointModel, MotionConfig, SceneConfig
from artigen.oracle import Estimate, evaluate, gen_scene


def oracle_contact(bundle) -> ContactPair:
    start = bundle.truth.start_true
    cloud = bundle.clouds[start]
    return detect_contact(cloud.robot(), cloud.movable(), approach_direction(bundle.trajectory[start]), start)


def truth_contact(bundle) -> ContactPair:
    start = bundle.truth.start_true
    return ContactPair(pc_robot=bundle.truth.contact_true, pc_move=bundle.truth.contact_true, frame=start,
                       ee_dir=tuple(approach_direction(bundle.trajectory[start])))


def diagonal(bundle) -> float:
    pts = np.vstack([p.points for p in bundle.parts])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


class TestEdgeScore:
    def test_coincident(self) -> None:
        """Checks identical edges score zero."""
        e = Edge([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        assert edge_score(e, e, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_parallel_offset(self) -> None:
        """Checks parallel edges one normalization apart score 0.2."""
        assert edge_score(Edge([0, 0, 0], [1, 0, 0]), Edge([0, 1, 0], [1, 1, 0]), 1.0) == pytest.approx(0.2)

    def test_perpendicular(self) -> None:
        """Checks perpendicular edges crossing at their midpoints."""
        u = np.linspace(0.0, 1.0, 16)
        mean_dist = float(np.mean(np.sqrt(2.0) * np.abs(2.0 * u - 1.0)))
        score = edge_score(Edge([-1, 0, 0], [1, 0, 0]), Edge([0, -1, 0], [0, 1, 0]), 2.0)
        assert score == pytest.approx(0.8 + 0.2 * mean_dist / 2.0)

    def test_orientation_invariant(self) -> None:
        """Checks reversing an edge leaves the score unchanged."""
        a, b = Edge([0, 0, 0], [1, 0, 0]), Edge([0, 0.3, 0.1], [1, 0.4, 0.1])
        assert edge_score(a, b, 1.0) == pytest.approx(edge_score(a, Edge(b.b, b.a), 1.0))

    def test_bad_normalization(self) -> None:
        """Checks a non-positive normalization is refused."""
        e = Edge([0, 0, 0], [1, 0, 0])
        with pytest.raises(ValidationError):
            edge_score(e, e, 0.0)


class TestEdgeSelection:
    def test_pure_edge_score(self) -> None:
        """Checks zero approach and contact weights reduce to the edge score argmin."""
        static = obb_fit(box_surface([0, 0, 0], [0.3, 0.3, 0.2]))
        move = obb_fit(box_surface([0.01, 0, 0.2], [0.31, 0.3, 0.24]))
        cfg = EdgeSelectionConfig(lambda2=0.0, lambda3=0.0)
        e_s, e_m = select_edge_pair(static, move, [0, 0, -1], [0.1, 0.15, 0.24], JointKind.REVOLUTE, cfg)
        scale = static.diagonal()
        best = min(edge_score(a, b, scale) for a in obb_edges(static) for b in obb_edges(move))
        assert edge_score(e_s, e_m, scale) == pytest.approx(best)

    def test_rigid_invariance(self, revolute_bundle) -> None:
        """Checks the chosen edges move with a rigid motion of the whole scene."""
        contact = oracle_contact(revolute_bundle)
        cloud = revolute_bundle.clouds[contact.frame]
        move, static = cloud.movable().points, cloud.static().points
        t = RigidTransform.from_axis_angle([0.1, 0.2, 1.0], 0.7, [0.3, -0.1, 0.05])
        e_s, e_m = select_edge_pair(obb_fit(static), obb_fit(move), contact.ee_dir, contact.pc_move, JointKind.REVOLUTE)
        f_s, f_m = select_edge_pair(obb_fit(t.apply(static)), obb_fit(t.apply(move)), t.apply_vector(contact.ee_dir),
                                    t.apply(np.asarray(contact.pc_move)), JointKind.REVOLUTE)
        moved = np.sort(t.apply(np.stack([e_m.a, e_m.b])), axis=0)
        np.testing.assert_allclose(np.sort(np.stack([f_m.a, f_m.b]), axis=0), moved, atol=1e-6)

    def test_hinge_selected(self, revolute_bundle) -> None:
        """Checks the lid scene picks the hinge edge."""
        contact = oracle_contact(revolute_bundle)
        cloud = revolute_bundle.clouds[contact.frame]
        _, e_move = select_edge_pair(obb_fit(cloud.static()), obb_fit(cloud.movable()), contact.ee_dir,
                                     contact.pc_move, JointKind.REVOLUTE)
        truth = revolute_bundle.truth.joint
        assert abs(float(e_move.direction() @ truth.axis())) > math.cos(math.radians(2.0))
        assert point_line_distance(e_move.midpoint(), truth.origin(), truth.axis()) < 0.05

    def test_drawer_edge_parallel_to_slide(self, prismatic_bundle) -> None:
        """Checks the drawer scene picks an edge along the slide axis."""
        contact = oracle_contact(prismatic_bundle)
        cloud = prismatic_bundle.clouds[contact.frame]
        _, e_move = select_edge_pair(obb_fit(cloud.static()), obb_fit(cloud.movable()), contact.ee_dir,
                                     contact.pc_move, JointKind.PRISMATIC)
        assert abs(float(e_move.direction() @ prismatic_bundle.truth.joint.axis())) > math.cos(math.radians(2.0))


class TestJointDirection:
    def test_up(self) -> None:
        """Checks an edge along +z."""
        np.testing.assert_allclose(joint_direction(Edge([0, 0, 0], [0, 0, 2])), [0.0, 0.0, 1.0])

    def test_down_is_canonicalized(self) -> None:
        """Checks an edge along -z flips to +z."""
        np.testing.assert_allclose(joint_direction(Edge([0, 0, 2], [0, 0, 0])), [0.0, 0.0, 1.0])


class TestJointCenter:
    @staticmethod
    def seam():
        xs = np.linspace(0.0, 1.0, 101)
        move = np.array([[x, 0.005 + 0.01 * k, 0.0] for x in xs for k in range(3)])
        static = np.array([[x, -0.005 - 0.01 * k, 0.0] for x in xs for k in range(3)])
        edge = Edge([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        return move, static, edge

    def test_on_seam(self) -> None:
        """Checks the center lies on the shared seam."""
        move, static, edge = self.seam()
        center = joint_center(move, static, edge, edge, EdgeSelectionConfig(K=10), epsilon=0.012)
        assert point_line_distance(center, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]) < 1e-3

    def test_too_few_pairs(self) -> None:
        """Checks K above the candidate count raises."""
        move, static, edge = self.seam()
        with pytest.raises(InsufficientPairs):
            joint_center(move, static, edge, edge, EdgeSelectionConfig(K=1000), epsilon=0.012)


class TestEstimateJoint:
    def test_revolute_oracle(self, revolute_bundle) -> None:
        """Checks the lid hinge direction and axis line."""
        contact = oracle_contact(revolute_bundle)
        cloud = revolute_bundle.clouds[contact.frame]
        joint = estimate_joint(cloud.movable(), cloud.static(), contact, JointKind.REVOLUTE)
        truth = revolute_bundle.truth.joint
        angle = math.degrees(math.acos(min(1.0, abs(float(joint.axis() @ truth.axis())))))
        assert angle <= 2.0
        assert point_line_distance(joint.origin(), truth.origin(), truth.axis()) <= 0.01 * diagonal(revolute_bundle)

    def test_prismatic_oracle(self, prismatic_bundle) -> None:
        """Checks the drawer slide direction."""
        contact = oracle_contact(prismatic_bundle)
        cloud = prismatic_bundle.clouds[contact.frame]
        joint = estimate_joint(cloud.movable(), cloud.static(), contact, JointKind.PRISMATIC)
        assert abs(float(joint.axis() @ prismatic_bundle.truth.joint.axis())) > math.cos(math.radians(2.0))

    def test_relaxation_exhausted(self, revolute_bundle) -> None:
        """Checks an impossible pair count still fails after relaxing epsilon."""
        contact = oracle_contact(revolute_bundle)
        cloud = revolute_bundle.clouds[contact.frame]
        with pytest.raises(InsufficientPairs):
            estimate_joint(cloud.movable(), cloud.static(), contact, JointKind.REVOLUTE,
                           EdgeSelectionConfig(K=100000, epsilon_relaxations=1))


class TestPlanes:
    def test_fit(self) -> None:
        """Checks a fitted plane through points at z = 0.3."""
        pts = np.array([[x, y, 0.3] for x in range(4) for y in range(4)], dtype=float)
        plane = fit_plane(pts)
        assert abs(plane.normal[2]) == pytest.approx(1.0)
        np.testing.assert_allclose(plane.signed_distance(pts), 0.0, atol=1e-12)

    def test_collinear(self) -> None:
        """Checks collinear points cannot define a plane."""
        with pytest.raises(DegenerateCloud):
            fit_plane([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])

    def test_intersection(self) -> None:
        """Checks the crossing of x = 0.5 with a straight polyline."""
        polyline = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        hit = intersect_plane_polyline(Plane(np.array([0.5, 0, 0]), np.array([1.0, 0, 0])), polyline, 0.0)
        np.testing.assert_allclose(hit, [0.5, 0.0, 0.0])

    def test_no_intersection(self) -> None:
        """Checks a plane beyond the polyline raises."""
        polyline = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        with pytest.raises(NoIntersection):
            intersect_plane_polyline(Plane(np.array([5.0, 0, 0]), np.array([1.0, 0, 0])), polyline, 0.0)

    def test_articulation(self) -> None:
        """Checks revolute and prismatic articulation of points and planes."""
        hinge = JointModel(kind=JointKind.REVOLUTE, direction=(0, 0, 1), center=(1, 0, 0))
        np.testing.assert_allclose(articulate_points([[2.0, 0, 0]], hinge, math.pi / 2), [[1.0, 1.0, 0.0]], atol=1e-12)
        slide = JointModel(kind=JointKind.PRISMATIC, direction=(0, 2, 0))
        plane = articulate_plane(Plane(np.zeros(3), np.array([0.0, 1.0, 0.0])), slide, 0.3)
        np.testing.assert_allclose(plane.point, [0.0, 0.3, 0.0])
        np.testing.assert_allclose(plane.normal, [0.0, 1.0, 0.0])


class TestRecovery:
    def test_solve_frame_quadratic(self) -> None:
        """Checks the frame solver finds a simple minimum from a warm start."""
        value, residual = solve_frame(lambda x: (x - 0.3) ** 2, (-1.0, 1.0), MotionConfig(), previous=0.2)
        assert value == pytest.approx(0.3, abs=1e-4)
        assert residual < 1e-6

    def test_solve_frame_global(self) -> None:
        """Checks a minimum outside the warm window is found by the grid."""
        value, _ = solve_frame(lambda x: abs(x + 2.0), (-3.0, 3.0), MotionConfig(), previous=2.0)
        assert value == pytest.approx(-2.0, abs=1e-3)

    def test_solve_frame_prefers_nearby_minimum(self) -> None:
        """Checks two equally good minima resolve to the one next to the previous frame."""
        def two_wells(x):
            return min(abs(x - 0.05), abs(x - 0.25))

        assert solve_frame(two_wells, (-1.0, 1.0), MotionConfig(), previous=0.0)[0] == pytest.approx(0.05, abs=1e-3)
        assert solve_frame(two_wells, (-1.0, 1.0), MotionConfig(), previous=0.3)[0] == pytest.approx(0.25, abs=1e-3)

    def test_solve_frame_restart_keeps_continuity(self) -> None:
        """Checks the full-range search still favors the minimum closest to the previous frame."""
        def two_wells(x):
            return min(abs(x + 2.0), abs(x - 1.5))

        value, residual = solve_frame(two_wells, (-3.0, 3.0), MotionConfig(), previous=0.5)
        assert value == pytest.approx(1.5, abs=1e-3)
        assert residual < 1e-3

    def test_bounds(self) -> None:
        """Checks revolute bounds span a full turn and prismatic bounds scale with the part."""
        part = box_surface([0, 0, 0], [0.2, 0.1, 0.1], 300)
        hinge = JointModel(kind=JointKind.REVOLUTE, direction=(0, 0, 1))
        assert motion_bounds(part, hinge) == (-math.pi, math.pi)
        lo, hi = motion_bounds(part, JointModel(kind=JointKind.PRISMATIC, direction=(1, 0, 0)))
        assert hi == pytest.approx(2.0 * math.sqrt(0.06)) and lo == -hi

    def test_static_trajectory(self) -> None:
        """Checks a contact that never moves recovers zero motion."""
        part = box_surface([-0.2, 0, 0], [0.0, 0.3, 0.1], 3000)
        contact_point = (-0.2, 0.15, 0.05)
        part = np.vstack([contact_point, part])
        joint = JointModel(kind=JointKind.PRISMATIC, direction=(-1, 0, 0), center=contact_point)
        contact = ContactPair(pc_robot=contact_point, pc_move=contact_point, frame=3, ee_dir=(1.0, 0.0, 0.0))
        traj = ContactTrajectory(np.tile(contact_point, (6, 1)), start_frame=3)
        trace = recover_motion(part, joint, contact, traj)
        assert trace.start_frame == 3 and len(trace.theta) == 6
        np.testing.assert_allclose(trace.theta, 0.0, atol=1e-3)

    def test_contact_off_part(self) -> None:
        """Checks a contact point away from the part is refused."""
        part = box_surface([0, 0, 0], [0.2, 0.2, 0.2], 500)
        joint = JointModel(kind=JointKind.PRISMATIC, direction=(1, 0, 0))
        contact = ContactPair(pc_robot=(1, 1, 1), pc_move=(1, 1, 1), frame=0, ee_dir=(1, 0, 0))
        with pytest.raises(ValidationError):
            recover_motion(part, joint, contact, ContactTrajectory(np.zeros((3, 3))))

    def test_revolute_oracle(self, revolute_bundle) -> None:
        """Checks per-frame lid angles against ground truth with the true hinge."""
        truth = revolute_bundle.truth
        start = truth.start_true
        cloud = revolute_bundle.clouds[start]
        trace = recover_motion(cloud.movable(), truth.joint, truth_contact(revolute_bundle),
                               revolute_bundle.contact_trajectory)
        expected = np.asarray(truth.theta_true[start:truth.end_true + 1])
        assert np.max(np.abs(np.asarray(trace.theta) - expected)) <= math.radians(0.5)
        assert max(trace.residuals) <= 1e-3

    def test_prismatic_oracle_ease_in_out(self) -> None:
        """Checks a drawer with a non-uniform speed profile to within 1 mm RMSE."""
        bundle = gen_scene(SceneConfig(kind=JointKind.PRISMATIC, base_size=PRISMATIC_BASE, lid_size=PRISMATIC_DRAWER,
                                       profile="ease-in-out", frames=30, lead_in=5, lead_out=5))
        truth = bundle.truth
        start = truth.start_true
        trace = recover_motion(bundle.clouds[start].movable(), truth.joint, truth_contact(bundle),
                               bundle.contact_trajectory)
        report = evaluate(Estimate(joint=truth.joint, trace=trace, keyframes=(start, truth.end_true)), truth)
        assert report.theta_rmse <= 1e-3
        assert max(trace.residuals) <= 1e-3


class TestCenterRefinement:
    @staticmethod
    def arc(center, radius: float, angles) -> np.ndarray:
        return np.array([[center[0] + radius * math.cos(a), center[1], center[2] + radius * math.sin(a)]
                         for a in angles])

    def test_fit_axis_circle(self) -> None:
        """Checks an arc about a y-axis hinge gives its center in the plane of the joint center."""
        points = self.arc((0.1, 0.0, 0.5), 0.2, np.linspace(0.1, 1.2, 15))
        joint = JointModel(kind=JointKind.REVOLUTE, direction=(0, 1, 0), center=(0.11, 0.3, 0.49))
        center, radius = fit_axis_circle(points, joint)
        np.testing.assert_allclose(center, [0.1, 0.3, 0.5], atol=1e-9)
        assert radius == pytest.approx(0.2)

    def test_straight_line_is_degenerate(self) -> None:
        """Checks collinear points do not define a circle."""
        joint = JointModel(kind=JointKind.REVOLUTE, direction=(0, 1, 0))
        with pytest.raises(DegenerateCloud):
            fit_axis_circle([[x, 0.0, 0.0] for x in np.linspace(0.0, 0.1, 5)], joint)

    def test_refine_moves_center_onto_axis(self) -> None:
        """Checks a hinge estimated 4 mm off is moved back onto the arc axis, off-arc frames ignored."""
        points = self.arc((0.1, 0.0, 0.5), 0.2, np.linspace(0.0, 1.2, 20))
        points = np.vstack([points, points[-1] + [0.0, 0.0, 0.003]])
        joint = JointModel(kind=JointKind.REVOLUTE, direction=(0, 1, 0), center=(0.1, 0.0, 0.504))
        refined = refine_revolute_center(joint, points)
        assert point_line_distance(refined.origin(), [0.1, 0.0, 0.5], [0, 1, 0]) < 1e-6
        np.testing.assert_allclose(refined.axis(), joint.axis())

    def test_refine_keeps_center_for_short_arc(self) -> None:
        """Checks an arc sweeping less than the minimum leaves the joint alone."""
        points = self.arc((0.1, 0.0, 0.5), 0.2, np.linspace(0.0, 0.05, 10))
        joint = JointModel(kind=JointKind.REVOLUTE, direction=(0, 1, 0), center=(0.1, 0.0, 0.504))
        assert refine_revolute_center(joint, points) == joint

    def test_refine_keeps_center_far_away(self) -> None:
        """Checks a circle center further than the allowed shift is not trusted."""
        points = self.arc((0.1, 0.0, 0.5), 0.2, np.linspace(0.0, 1.2, 20))
        joint = JointModel(kind=JointKind.REVOLUTE, direction=(0, 1, 0), center=(0.2, 0.0, 0.5))
        assert refine_revolute_center(joint, points) == joint

    def test_shifted_hinge_recovers_angles(self, revolute_bundle) -> None:
        """Checks lid angles stay within 0.5 degrees with the hinge pushed 4 mm along the lid normal."""
        truth = revolute_bundle.truth
        start = truth.start_true
        part = revolute_bundle.clouds[start].movable()
        contact = truth_contact(revolute_bundle)
        normal = contact_face(part, contact.pc_move, MotionConfig().face_radius).normal
        shifted = JointModel(kind=truth.joint.kind, direction=truth.joint.direction,
                             center=tuple(truth.joint.origin() + 0.004 * normal))
        trace = recover_motion(part, shifted, contact, revolute_bundle.contact_trajectory)
        expected = np.asarray(truth.theta_true[start:truth.end_true + 1])
        assert np.max(np.abs(np.asarray(trace.theta) - expected)) <= math.radians(0.5)
