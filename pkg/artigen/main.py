import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional, Tuple

import pandas as pd

from artigen.articulation import estimate_joint, recover_motion
from artigen.config import DEFAULT_JOBS, DEFAULT_SEED, OUTPUT_DIR, configure_logging
from artigen.contact import contact_trajectory
from artigen.data_service import AssetService, DemoInputs, SceneBundleService
from artigen.error_handling import EXIT_OK, MissingInput, ValidationError, handle_exception
from artigen.file_io import (
    read_masks,
    read_model,
    read_trajectory,
    write_joint_trajectory,
    write_model,
    write_trace,
    write_trajectory,
)
from artigen.keyframes import analyze_sequence, scores_table
from artigen.models import (
    JointKind,
    JointModel,
    KinematicChain,
    NoiseConfig,
    PipelineConfig,
    RetargetEntry,
    RetargetReport,
    SceneConfig,
)
from artigen.oracle import build_replacement_asset, gen_scene, random_replacement_params, random_scene_config
from artigen.pipeline import find_contact, replay_report, run_campaign, run_pipeline
from artigen.retarget import default_chain, generate_samples

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)


def _range(text: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got '{text}'")
    return lo, hi


def _vec3(text: str) -> Tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y,z', got '{text}'")
    return x, y, z


def _pipeline_config(args) -> PipelineConfig:
    """Config file first, command-line flags win."""
    cfg = read_model(args.config, PipelineConfig) if args.config else PipelineConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out:
        updates["output_dir"] = args.out
    if getattr(args, "bundle", None):
        updates["bundle_dir"] = args.bundle
    if getattr(args, "kind", None):
        updates["kind"] = JointKind(args.kind)
    if getattr(args, "contact_radius", None) is not None:
        updates["contact_radius"] = args.contact_radius
    if getattr(args, "stage1_only", False):
        updates["stage1_only"] = True

    filter_updates = {k: getattr(args, k) for k in ("window", "order") if getattr(args, k, None) is not None}
    edge_updates = {k: getattr(args, k) for k in ("lambda1", "lambda2", "lambda3", "K", "epsilon")
                    if getattr(args, k, None) is not None}
    range_updates = {}
    if getattr(args, "tx_range", None):
        range_updates["tx_range"] = args.tx_range
    if getattr(args, "ty_range", None):
        range_updates["ty_range"] = args.ty_range
    if getattr(args, "yaw_range", None):
        range_updates["yaw_range"] = tuple(math.radians(v) for v in args.yaw_range)

    cfg = cfg.model_copy(update=updates)
    # nested models are re-validated so flag values get the same checks as the config file
    return PipelineConfig.model_validate({
        **cfg.model_dump(),
        "filter": {**cfg.filter.model_dump(), **filter_updates},
        "edges": {**cfg.edges.model_dump(), **edge_updates},
        "solver": {**cfg.solver.model_dump(), "jobs": args.jobs},
        "ranges": {**cfg.ranges.model_dump(), **range_updates},
    })


def _bundle(cfg: PipelineConfig) -> SceneBundleService:
    if not cfg.bundle_dir:
        raise ValidationError("A scene bundle directory is required (--bundle)")
    if not os.path.isdir(cfg.bundle_dir):
        raise MissingInput(f"Bundle directory not found: {cfg.bundle_dir}")
    return SceneBundleService(cfg.bundle_dir)


def _out(cfg: PipelineConfig, name: str) -> str:
    return os.path.join(cfg.output_dir or OUTPUT_DIR, name)


def _joint_stage(inputs: DemoInputs, cfg: PipelineConfig):
    series = analyze_sequence(inputs.masks, cfg.filter)
    contact = find_contact(inputs, series.start_frame, cfg.contact_radius)
    cloud = inputs.clouds[contact.frame]
    return series, contact, cloud


def cmd_gen(args) -> None:
    if args.config:
        cfg = read_model(args.config, SceneConfig)
    elif args.random:
        cfg = random_scene_config(JointKind(args.kind or "revolute"), DEFAULT_SEED if args.seed is None else args.seed)
    else:
        cfg = SceneConfig(kind=JointKind(args.kind or "revolute"))

    updates = {} if args.seed is None else {"seed": args.seed}
    for flag, field in (("frames", "frames"), ("profile", "profile"), ("magnitude", "magnitude"),
                        ("joint_edge", "joint_edge")):
        if getattr(args, flag) is not None:
            updates[field] = getattr(args, flag)
    if args.kind and not args.random:
        updates["kind"] = JointKind(args.kind)
    noise = {k: getattr(args, k) for k in ("mask_jitter_px", "slip_m", "point_noise_m") if getattr(args, k) is not None}
    cfg = SceneConfig.model_validate({**cfg.model_dump(), **updates,
                                      "noise": {**cfg.noise.model_dump(), **noise}})

    bundle = gen_scene(cfg)
    out = args.out or OUTPUT_DIR
    SceneBundleService(out).dump_bundle(bundle)
    if args.asset:
        truth = bundle.truth
        g_true = random_replacement_params(cfg.seed, truth.theta_true[truth.end_true] - truth.theta_true[truth.start_true])
        AssetService(os.path.join(out, "asset")).dump_asset(build_replacement_asset(bundle, g_true))
        write_model(os.path.join(out, "asset", "g_true.json"), g_true)
    print(f"Scene bundle written to {out} ({cfg.frames} frames, motion {bundle.truth.start_true}..{bundle.truth.end_true})")


def cmd_keyframes(args) -> None:
    cfg = _pipeline_config(args)
    service = _bundle(cfg)
    series = analyze_sequence(read_masks(service.masks_dir), cfg.filter)
    write_model(_out(cfg, "keyframes.json"), series)
    if args.csv:
        path = _out(cfg, "motion_scores.csv")
        scores_table(series).to_csv(path, index=False)
        logger.info(f"Motion scores written to {path}")
    print(f"Keyframes: start={series.start_frame}, end={series.end_frame}")


def cmd_joint(args) -> None:
    cfg = _pipeline_config(args)
    inputs = _bundle(cfg).load_inputs()
    series, contact, cloud = _joint_stage(inputs, cfg)
    joint = estimate_joint(cloud.movable(), cloud.static(), contact, cfg.kind, cfg.edges)
    write_model(_out(cfg, "joint.json"), joint)
    write_model(_out(cfg, "contact.json"), contact)
    print(f"Joint: {joint.model_dump_json()}")


def cmd_recover(args) -> None:
    cfg = _pipeline_config(args)
    inputs = _bundle(cfg).load_inputs()
    series, contact, cloud = _joint_stage(inputs, cfg)
    if args.joint:
        joint = read_model(args.joint, JointModel)
    else:
        joint = estimate_joint(cloud.movable(), cloud.static(), contact, cfg.kind, cfg.edges)
    traj = contact_trajectory(inputs.trajectory.poses, contact, contact.frame, series.end_frame)
    trace = recover_motion(cloud.movable(), joint, contact, traj, cfg.motion)
    write_trace(_out(cfg, "trace.json"), trace)
    print(f"Recovered frames {trace.start_frame}..{trace.end_frame}, final value {trace.theta[-1]:.4f}")


def cmd_fit(args) -> None:
    cfg = _pipeline_config(args)
    inputs = _bundle(cfg).load_inputs()
    asset_dir = args.asset or os.path.join(cfg.bundle_dir, "asset")
    asset = AssetService(asset_dir).load_asset()
    result = run_pipeline(inputs, cfg, asset)
    write_model(_out(cfg, "params.json"), result.params)
    write_model(_out(cfg, "replay.json"), result.replay)
    write_trace(_out(cfg, "trace.json"), result.trace)
    print(f"Fitted {result.params.model_dump_json()}; replay max error {result.replay.max_error:.4f} m")


def cmd_retarget(args) -> None:
    cfg = _pipeline_config(args)
    if args.trajectory:
        tau = read_trajectory(args.trajectory)
    else:
        tau = read_trajectory(_bundle(cfg).trajectory_path)

    if args.start is not None and args.end is not None:
        start, end = args.start, args.end
    else:
        series = analyze_sequence(read_masks(_bundle(cfg).masks_dir), cfg.filter)
        start, end = series.start_frame, series.end_frame

    chain = None
    if not args.no_ik:
        chain = read_model(args.chain, KinematicChain) if args.chain else default_chain()
    pivot = args.pivot if args.pivot is not None else tuple(tau[start].translation)
    samples = generate_samples(tau, start, end, cfg.ranges, cfg.seed, args.num_samples, chain, pivot, args.jobs)

    entries = []
    for sample in samples:
        write_trajectory(_out(cfg, f"trajectory_{sample.index:03d}.json"), sample.trajectory)
        if chain is not None:
            write_joint_trajectory(_out(cfg, f"joints_{sample.index:03d}.json"), sample.joints, sample.failed_frame)
        rot = sample.transform.rot.as_euler("xyz")
        entries.append(RetargetEntry(
            index=sample.index, seed=sample.seed,
            tx=float(sample.transform.translation[0]), ty=float(sample.transform.translation[1]), yaw=float(rot[2]),
            success=sample.success, failed_frame=sample.failed_frame,
            error=sample.error["error"] if sample.error else None,
        ))
    rate = sum(e.success for e in entries) / max(len(entries), 1)
    write_model(_out(cfg, "retarget_report.json"),
                RetargetReport(master_seed=cfg.seed, count=len(entries), success_rate=rate, samples=entries))
    print(f"Retargeted {len(entries)} samples, IK success rate {rate:.2%}")


def cmd_eval(args) -> None:
    cfg = _pipeline_config(args)
    if args.num_scenes < 1:
        raise ValidationError(f"--num-scenes must be positive, got {args.num_scenes}")
    noise = NoiseConfig() if args.noiseless else NoiseConfig(
        mask_jitter_px=args.mask_jitter_px if args.mask_jitter_px is not None else 2,
        slip_m=args.slip_m if args.slip_m is not None else 0.005,
        point_noise_m=args.point_noise_m or 0.0,
    )
    kinds = list(JointKind) if args.kind is None else [JointKind(args.kind)]
    for kind in kinds:
        report = run_campaign(kind, args.num_scenes, cfg.seed, noise, cfg, args.jobs, fit=not args.no_fit)
        write_model(_out(cfg, f"eval_{kind.value}.json"), report)
        write_model(_out(cfg, f"replay_{kind.value}.json"), replay_report(report))
        table = pd.DataFrame([r.model_dump() for r in report.scenes])
        table.to_csv(_out(cfg, f"eval_{kind.value}.csv"), index=False)
        print(f"{kind.value}: {report.count} scenes, replay success rate {report.success_rate:.2%}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artigen", description="Articulated-object demonstration generator")
    parser.add_argument("--config", help="JSON config file (SceneConfig for gen, PipelineConfig otherwise)")
    parser.add_argument("--seed", type=int, default=None, help=f"Random seed (default {DEFAULT_SEED})")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--jobs", type=int, default=DEFAULT_JOBS, help="Parallel workers")
    parser.add_argument("--verbose", action="store_true", help="Enable verbose debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--bundle", help="Scene bundle directory")
        p.add_argument("--kind", choices=[k.value for k in JointKind])
        p.add_argument("--contact-radius", type=float)
        p.add_argument("--window", type=int, help="Savitzky-Golay window")
        p.add_argument("--order", type=int, help="Savitzky-Golay polynomial order")
        p.add_argument("--lambda1", type=float)
        p.add_argument("--lambda2", type=float)
        p.add_argument("--lambda3", type=float)
        p.add_argument("-K", type=int, dest="K", help="Minimum point pairs for the joint center")
        p.add_argument("--epsilon", type=float, help="Edge proximity for the joint center (m)")

    p = sub.add_parser("gen", help="Generate a synthetic scene bundle")
    p.add_argument("--kind", choices=[k.value for k in JointKind])
    p.add_argument("--random", action="store_true", help="Randomize sizes, placement and motion from the seed")
    p.add_argument("--frames", type=int)
    p.add_argument("--profile", choices=["uniform", "ease-in-out", "piecewise"])
    p.add_argument("--magnitude", type=float, help="Total motion (rad or m)")
    p.add_argument("--joint-edge", choices=["back", "front", "left", "right"])
    p.add_argument("--mask-jitter-px", type=int)
    p.add_argument("--slip-m", type=float)
    p.add_argument("--point-noise-m", type=float)
    p.add_argument("--asset", action="store_true", help="Also write a scaled replacement asset")
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("keyframes", help="Motion scores and keyframes from masks")
    pipeline_flags(p)
    p.add_argument("--csv", action="store_true", help="Also write the score table as CSV")
    p.set_defaults(handler=cmd_keyframes)

    p = sub.add_parser("joint", help="Estimate the joint")
    pipeline_flags(p)
    p.set_defaults(handler=cmd_joint)

    p = sub.add_parser("recover", help="Recover the per-frame joint motion")
    pipeline_flags(p)
    p.add_argument("--joint", help="JointModel JSON; estimated when omitted")
    p.set_defaults(handler=cmd_recover)

    p = sub.add_parser("fit", help="Fit a replacement asset to the demonstration")
    pipeline_flags(p)
    p.add_argument("--asset", help="Replacement asset directory (default: <bundle>/asset)")
    p.add_argument("--stage1-only", action="store_true", help="Skip the face-plane refinement")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("retarget", help="Retarget the demonstration to perturbed object poses")
    pipeline_flags(p)
    p.add_argument("--trajectory", help="Trajectory JSON (default: <bundle>/trajectory.json)")
    p.add_argument("--start", type=int)
    p.add_argument("--end", type=int)
    p.add_argument("--num-samples", type=int, default=50)
    p.add_argument("--tx-range", type=_range)
    p.add_argument("--ty-range", type=_range)
    p.add_argument("--yaw-range", type=_range, help="Degrees")
    p.add_argument("--pivot", type=_vec3, help="Yaw pivot x,y,z (default: pose at the start keyframe)")
    p.add_argument("--chain", help="KinematicChain JSON (default: six-axis arm)")
    p.add_argument("--no-ik", action="store_true", help="Skip inverse kinematics")
    p.set_defaults(handler=cmd_retarget)

    p = sub.add_parser("eval", help="Run an oracle evaluation campaign")
    pipeline_flags(p)
    p.set_defaults(kind=None)
    p.add_argument("--num-scenes", type=int, default=50)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--mask-jitter-px", type=int)
    p.add_argument("--slip-m", type=float)
    p.add_argument("--point-noise-m", type=float)
    p.add_argument("--no-fit", action="store_true", help="Skip replacement fitting and replay")
    p.set_defaults(handler=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        args.handler(args)
        return EXIT_OK
    except Exception as e:
        error = handle_exception(args.command, e)
        print(json.dumps(error.to_dict(), default=str), file=sys.stderr)
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
