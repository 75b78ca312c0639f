#!/usr/bin/env python3
"""Success rate as a function of initial-pose error, on the demo scene.

Sweeps yaw and x-translation offsets from zero to 1.5x the derived
deviation limits and writes two-column curves for plotting.
"""

import argparse
from pathlib import Path

from make_demo_scene import build_scene
from splatloc.evaluation import deviation_limits, run_sensitivity_sweep, scene_scale, write_sweep_curve
from splatloc.geometry import Intrinsics
from splatloc.matching import MatcherConfig, OracleMatcherConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--trials-per-step", type=int, default=10)
    ap.add_argument("--hfov-deg", type=float, default=70.0)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--max-factor", type=float, default=1.5)
    ap.add_argument("--out", type=Path, default=Path("sweep_out"))
    args = ap.parse_args()

    scene = build_scene(160, 2.0, 7, 40, 10, 4.0, 0.0)
    k = Intrinsics.from_fov(args.size, args.size, args.hfov_deg)
    limits = deviation_limits(k, scene_scale(scene.trajectory))
    matcher = MatcherConfig(oracle=OracleMatcherConfig(n_target=1000))
    args.out.mkdir(parents=True, exist_ok=True)

    for axis, limit in (("yaw", limits.delta_theta_deg), ("tx", limits.delta_p)):
        points = run_sensitivity_sweep(
            scene, k, axis, args.steps, args.trials_per_step, seed=args.seed,
            limit=args.max_factor * limit, matcher_cfg=matcher)
        path = args.out / f"sweep_{axis}.txt"
        write_sweep_curve(points, path)
        print(f"{axis} (limit {limit:.2f}):")
        for p in points:
            print(f"  offset {p.offset:8.3f}  success {p.success_rate:.2f}")
        print(f"  -> {path}")


if __name__ == "__main__":
    main()
