import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from artigen.articulation import estimate_joint, recover_motion, refine_revolute_center
from artigen.contact import ContactTrajectory, approach_direction, contact_trajectory, detect_contact
from artigen.data_service import DemoInputs
from artigen.error_handling import ArtigenError, NoContact, ValidationError, handle_exception
from artigen.keyframes import analyze_sequence
from artigen.models import (
    ArticulationTrace,
    CampaignReport,
    ContactPair,
    EvalReport,
    JointKind,
    JointModel,
    MotionScoreSeries,
    NoiseConfig,
    PipelineConfig,
    ReplacementParams,
    ReplayCampaignReport,
    ReplayEntry,
    ReplayResult,
)
from artigen.oracle import (
    Estimate,
    build_replacement_asset,
    evaluate,
    gen_scene,
    random_replacement_params,
    random_scene_config,
    replacement_errors,
)
from artigen.replacement import ReplacementAsset, fit_stage1, fit_stage2, map_contact, replay_check

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

# frames after the detected start searched for the first touch
CONTACT_SEARCH = 4


@dataclass
class PipelineResult:
    series: MotionScoreSeries
    contact: ContactPair
    joint: JointModel
    trajectory: ContactTrajectory
    trace: ArticulationTrace
    pc_map: Optional[np.ndarray] = None
    params: Optional[ReplacementParams] = None
    replay: Optional[ReplayResult] = None

    def estimate(self) -> Estimate:
        return Estimate(
            joint=self.joint,
            trace=self.trace,
            keyframes=(self.series.start_frame, self.series.end_frame),
            params=self.params,
            replay_success=bool(self.replay and self.replay.success),
            replay_max_error=self.replay.max_error if self.replay else 0.0,
        )


def find_contact(inputs: DemoInputs, start: int, radius: float) -> ContactPair:
    """First frame from start on where the robot touches the movable part."""
    last_error = None
    for frame in range(start, min(start + CONTACT_SEARCH, len(inputs.clouds))):
        cloud = inputs.clouds[frame]
        try:
            return detect_contact(cloud.robot(), cloud.movable(), approach_direction(inputs.trajectory[frame]),
                                  frame, radius)
        except NoContact as e:
            last_error = e
    raise last_error or NoContact(f"No frames to search from {start}")


def align_trace(trace: ArticulationTrace, joint: JointModel, asset: ReplacementAsset) -> ArticulationTrace:
    """Express the trace in the asset's joint sign convention."""
    scene_axis = asset.base_pose.apply_vector(asset.joint.axis())
    if float(np.dot(joint.axis(), scene_axis)) >= 0:
        return trace
    return trace.model_copy(update={"theta": [-t for t in trace.theta]})


def run_pipeline(inputs: DemoInputs, cfg: PipelineConfig,
                 asset: Optional[ReplacementAsset] = None) -> PipelineResult:
    """Keyframes, contact, joint, motion and, given an asset, the replacement fit with a replay check."""
    series = analyze_sequence(inputs.masks, cfg.filter)
    contact = find_contact(inputs, series.start_frame, cfg.contact_radius)
    start, end = contact.frame, series.end_frame
    if end <= start:
        raise ValidationError(f"Contact frame {start} is not before the end keyframe {end}")

    cloud = inputs.clouds[start]
    joint = estimate_joint(cloud.movable(), cloud.static(), contact, cfg.kind, cfg.edges)
    traj = contact_trajectory(inputs.trajectory.poses, contact, start, end)
    if joint.kind == JointKind.REVOLUTE and cfg.motion.refine_center:
        joint = refine_revolute_center(joint, traj.points, cfg.motion)
    motion = cfg.motion.model_copy(update={"refine_center": False})
    trace = recover_motion(cloud.movable(), joint, contact, traj, motion)
    result = PipelineResult(series=series, contact=contact, joint=joint, trajectory=traj, trace=trace)
    if asset is None:
        return result

    pc_map = map_contact(asset, cloud.movable(), contact.pc_move, asset.base_pose)
    g = fit_stage1(pc_map, asset, traj, (start, end), cfg.kind, cfg.solver)
    if not cfg.stage1_only:
        g = fit_stage2(asset, traj, g, cfg.kind, pc_map, cfg.motion.face_radius, cfg.solver)
    result.pc_map, result.params = pc_map, g
    result.replay = replay_check(asset, g, traj, align_trace(trace, joint, asset), cfg.replay_tol,
                                 pc_map, cfg.motion.face_radius)
    logger.info(f"Replay {'succeeded' if result.replay.success else 'failed'} "
                f"(max error {result.replay.max_error:.4f} m)")
    return result


def run_scene(kind: JointKind, seed: int, noise: NoiseConfig, cfg: PipelineConfig, fit: bool = True) -> EvalReport:
    """Generate one oracle scene, run the pipeline on it and score the outcome."""
    try:
        bundle = gen_scene(random_scene_config(kind, seed, noise))
        asset = None
        if fit:
            theta = bundle.truth.theta_true
            g_true = random_replacement_params(seed, theta[bundle.truth.end_true] - theta[bundle.truth.start_true])
            asset = build_replacement_asset(bundle, g_true)
        result = run_pipeline(DemoInputs.from_bundle(bundle), cfg.model_copy(update={"kind": kind}), asset)
        report = evaluate(result.estimate(), bundle.truth, seed)
        pts = np.vstack([p.points for p in bundle.parts])
        update = {"center_axis_rel": report.center_axis_dist_m / float(np.linalg.norm(np.ptp(pts, axis=0)))}
        if result.params is not None:
            update.update(replacement_errors(result.params, g_true))
        return report.model_copy(update=update)
    except Exception as e:
        error = handle_exception("run_scene", e)
        return EvalReport(seed=seed, kind=kind, replay_success=False, error=f"{type(error).__name__}: {error.message}")


def run_campaign(kind: JointKind, count: int, seed: int, noise: NoiseConfig,
                 cfg: PipelineConfig = PipelineConfig(), jobs: int = 1, fit: bool = True) -> CampaignReport:
    if count < 1:
        raise ValidationError(f"A campaign needs at least one scene, got {count}")
    kind = JointKind(kind)
    seeds = [seed + i for i in range(count)]

    if jobs > 1:
        reports: List[Optional[EvalReport]] = [None] * count
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_scene, kind, s, noise, cfg, fit): i for i, s in enumerate(seeds)}
            for future in tqdm(as_completed(futures), total=count, desc=f"{kind.value} scenes"):
                reports[futures[future]] = future.result()
    else:
        reports = [run_scene(kind, s, noise, cfg, fit) for s in tqdm(seeds, desc=f"{kind.value} scenes")]

    rate = float(np.mean([r.replay_success for r in reports]))
    failures = [r.seed for r in reports if r.error]
    if failures:
        logger.warning(f"{len(failures)} scene(s) raised errors: seeds {failures}")
    logger.info(f"Campaign {kind.value}: {count} scenes, replay success rate {rate:.2%}")
    return CampaignReport(kind=kind, count=count, success_rate=rate, scenes=reports)


def replay_report(campaign: CampaignReport) -> ReplayCampaignReport:
    return ReplayCampaignReport(
        kind=campaign.kind,
        success_rate=campaign.success_rate,
        scenes=[ReplayEntry(seed=r.seed, success=r.replay_success, max_error=r.replay_max_error)
                for r in campaign.scenes],
    )


def pass_rates(campaign: CampaignReport, thresholds: Tuple[float, float, float, int],
               center_relative: bool = False) -> dict:
    """Share of scenes within (direction deg, center, theta rmse, keyframe frames) limits.

    The center limit is in meters, or a fraction of the object diagonal with ``center_relative``.
    """
    direction, center, rmse, frames = thresholds
    ok = [r for r in campaign.scenes if r.error is None]
    n = max(campaign.count, 1)
    return {
        "direction": sum(r.direction_err_deg <= direction for r in ok) / n,
        "center": sum((r.center_axis_rel if center_relative else r.center_axis_dist_m) <= center for r in ok) / n,
        "theta": sum(r.theta_rmse <= rmse for r in ok) / n,
        "keyframes": sum(max(r.keyframe_offsets) <= frames for r in ok) / n,
    }


def fit_pass_rate(campaign: CampaignReport, thresholds: Tuple[float, float, float]) -> float:
    """Share of scenes whose fitted replacement is within (relative scale, r_init, offset m) of the known one."""
    scale, r_init, offset = thresholds
    ok = [r for r in campaign.scenes if r.error is None and r.scale_err_rel is not None]
    hits = sum(r.scale_err_rel <= scale and r.r_init_err <= r_init and r.offset_err_m <= offset for r in ok)
    return hits / max(campaign.count, 1)
