"""Command-line front end.

Subcommands: render, localize, benchmark, compare, sweep. Exit code 0 on
success (a fallback-to-initial localization is a success), 2 on usage,
parse, or I/O errors. Data outputs are byte-reproducible for a fixed
seed; wall-clock timings go to separate files so reproducibility checks
can ignore them.
"""

from __future__ import annotations

import argparse
import sys

from . import evaluation, fileio
from .evaluation import (
    PerturbationLimits,
    pose_errors,
    run_benchmark,
    run_sensitivity_sweep,
    scene_scale,
    write_sweep_curve,
)
from .geometry import Intrinsics
from .localization import localize
from .matching import ClassicalMatcherConfig, MatcherConfig, OracleMatcherConfig
from .photometric import PhotometricConfig
from .pnp import PnpConfig, RansacConfig


class UsageError(Exception):
    pass


def _add_intrinsics_args(p):
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--hfov-deg", type=float, default=60.0)


def _intrinsics(args) -> Intrinsics:
    return Intrinsics.from_fov(args.width, args.height, args.hfov_deg)


def _load_scene(path):
    return fileio.load_scene(path)


def cmd_render(args) -> int:
    scene = _load_scene(args.scene)
    if not scene.trajectory:
        raise UsageError(f"scene {args.scene} has no trajectory to take poses from")
    if not (0 <= args.pose_index < len(scene.trajectory)):
        raise UsageError(f"pose index {args.pose_index} out of range "
                         f"[0, {len(scene.trajectory) - 1}]")
    from .rendering import render
    k = _intrinsics(args)
    frame = render(scene, scene.trajectory[args.pose_index], k, mode=args.mode)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_ppm(frame.color, out / f"color_{args.pose_index:04d}.ppm")
    fileio.write_pfm(frame.depth, out / f"depth_{args.pose_index:04d}.pfm")
    return 0


def _matcher_config(args) -> MatcherConfig:
    oracle = OracleMatcherConfig(n_target=args.n_target,
                                 noise_px_sigma=args.noise_px,
                                 outlier_rate=args.outlier_rate,
                                 seed=args.seed)
    return MatcherConfig(kind=args.matcher, oracle=oracle,
                         classical=ClassicalMatcherConfig())


def cmd_localize(args) -> int:
    from dataclasses import replace

    scene = _load_scene(args.scene)
    k = _intrinsics(args)
    query = fileio.read_ppm(args.query)
    t0 = fileio.load_pose_txt(args.init_pose)
    gt = fileio.load_pose_txt(args.gt_pose) if args.gt_pose else None
    matcher = _matcher_config(args)
    if matcher.kind == "oracle":
        if gt is None:
            raise UsageError("--matcher oracle requires --gt-pose (evaluation use only)")
        matcher = replace(matcher, oracle=replace(matcher.oracle, query_pose_gt=gt))
    pnp_cfg = PnpConfig(ransac=RansacConfig(seed=args.seed))
    result = localize(query, t0, scene, k, matcher=matcher, pnp_cfg=pnp_cfg,
                      keep_matches=args.dump_matches)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "pose": result.pose.matrix.tolist(),
        "status": result.status,
        "n_matches": result.n_matches,
        "n_inliers": result.n_inliers,
        "metrics": None,
    }
    if gt is not None:
        scale = scene_scale(scene.trajectory) if scene.trajectory else 0.0
        if scale <= 0.0:
            scale = 1.0  # degenerate trajectory: report raw units
        m = pose_errors(result.pose, gt, scale)
        record["metrics"] = {"re_deg": m.re_deg, "te_norm": m.te_norm,
                             "success": m.success}
    fileio.dump_json(record, out / "result.json")
    fileio.save_pose_txt(result.pose, out / "estimated_pose.txt")
    fileio.dump_json({"timings_s": vars(result.timings)}, out / "timings.json")
    if args.dump_matches:
        fileio.save_matches_txt(result.matches, out / "matches.txt")
    return 0


def _limits(args) -> PerturbationLimits | None:
    if args.dtheta_deg is not None or args.dp is not None:
        if args.dtheta_deg is None or args.dp is None:
            raise UsageError("--dtheta-deg and --dp must be given together")
        return PerturbationLimits(args.dtheta_deg, args.dp)
    return None


def _write_report(report, out) -> None:
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "records.csv")
    fileio.dump_json(report.summary(), out / "summary.json")
    fileio.dump_json({"mean_time_s": report.timing_summary()}, out / "timings.json")


def _run_benchmark(args, methods) -> int:
    scene = _load_scene(args.scene)
    k = _intrinsics(args)
    query_indices = None
    if args.max_queries is not None:
        if not scene.trajectory:
            raise UsageError(f"scene {args.scene} has no trajectory")
        query_indices = list(range(min(args.max_queries, len(scene.trajectory))))
    report = run_benchmark(
        scene, k, methods,
        protocol=args.protocol,
        seed=args.seed,
        scene_id=args.scene_id,
        query_indices=query_indices,
        inits_per_query=args.inits_per_query,
        limits=_limits(args),
        matcher_cfg=MatcherConfig(),
        pnp_cfg=PnpConfig(),
        photo_cfg=PhotometricConfig(max_iterations=args.photo_iterations),
    )
    _write_report(report, args.out)
    return 0


def cmd_benchmark(args) -> int:
    return _run_benchmark(args, [args.method])


def cmd_compare(args) -> int:
    return _run_benchmark(args, [evaluation.FEATURE, evaluation.PHOTOMETRIC])


def cmd_sweep(args) -> int:
    scene = _load_scene(args.scene)
    k = _intrinsics(args)
    limit = args.limit
    if limit is None and args.max_factor != 1.0:
        base = evaluation.deviation_limits(k, scene_scale(scene.trajectory))
        limit = args.max_factor * (base.delta_theta_deg if args.axis == "yaw"
                                   else base.delta_p)
    points = run_sensitivity_sweep(
        scene, k, args.axis, args.steps, args.trials_per_step,
        method=args.method, seed=args.seed, limit=limit,
    )
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_curve(points, out / f"sweep_{args.axis}.txt")
    fileio.dump_json(
        {"axis": args.axis, "limit": points[-1].offset, "steps": args.steps,
         "trials_per_step": args.trials_per_step, "seed": args.seed},
        out / f"sweep_{args.axis}_meta.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    from pathlib import Path

    parser = argparse.ArgumentParser(
        prog="splatloc",
        description="Camera pose estimation against a renderable splat scene")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one trajectory pose to PPM/PFM files")
    p.add_argument("--scene", required=True)
    p.add_argument("--pose-index", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mode", choices=["opaque", "alpha"], default="opaque")
    _add_intrinsics_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("localize", help="estimate the pose of one query image")
    p.add_argument("--scene", required=True)
    p.add_argument("--query", required=True, help="query image (binary PPM)")
    p.add_argument("--init-pose", required=True, help="initial pose file")
    p.add_argument("--matcher", choices=["oracle", "classical"], default="classical")
    p.add_argument("--gt-pose", default=None,
                   help="ground-truth pose file (required by the oracle matcher)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--dump-matches", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-target", type=int, default=200)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--outlier-rate", type=float, default=0.0)
    _add_intrinsics_args(p)
    p.set_defaults(func=cmd_localize)

    for name, help_text in (("benchmark", "run one method over a protocol"),
                            ("compare", "run feature and photometric on paired trials")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scene", required=True)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--scene-id", default="scene")
        p.add_argument("--protocol", choices=["random", "uniform"], default="random")
        p.add_argument("--max-queries", type=int, default=None)
        p.add_argument("--inits-per-query", type=int, default=1)
        p.add_argument("--dtheta-deg", type=float, default=None)
        p.add_argument("--dp", type=float, default=None)
        p.add_argument("--photo-iterations", type=int, default=25)
        _add_intrinsics_args(p)
        if name == "benchmark":
            p.add_argument("--method", choices=["feature", "photometric"],
                           default="feature")
            p.set_defaults(func=cmd_benchmark)
        else:
            p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="success rate vs initial-pose offset")
    p.add_argument("--scene", required=True)
    p.add_argument("--axis", choices=["yaw", "tx"], required=True)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--trials-per-step", type=int, default=10)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["feature", "photometric"], default="feature")
    p.add_argument("--limit", type=float, default=None,
                   help="sweep endpoint (degrees for yaw, units for tx)")
    p.add_argument("--max-factor", type=float, default=1.0,
                   help="scale the derived limit when --limit is not given")
    _add_intrinsics_args(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, fileio.SceneFormatError, FileNotFoundError, ValueError) as e:
        print(f"splatloc: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
