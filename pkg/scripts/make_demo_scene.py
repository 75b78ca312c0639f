#!/usr/bin/env python3
"""Generate a synthetic splat scene with an orbit trajectory and save it
as a scene JSON usable by the splatloc CLI."""

import argparse
import math
from pathlib import Path

import numpy as np

from splatloc.fileio import save_scene
from splatloc.rendering import Scene, Splat, generate_test_scene, make_orbit_trajectory


def build_scene(n_splats, radius, seed, ring, cameras, orbit_radius, elevation_deg):
    scene = generate_test_scene(n_splats, radius, seed)
    splats = list(scene.splats)
    if ring > 0:
        # Deterministic silhouette ring at the nominal object radius, so the
        # object presents a fringe in every azimuth.
        rng = np.random.default_rng(seed + 1)
        for i in range(ring):
            az = 2.0 * math.pi * i / ring
            splats.append(Splat(
                center=(radius * math.cos(az), radius * math.sin(az), 0.0),
                scale=(0.15 * radius,) * 3,
                orientation_wxyz=(1.0, 0.0, 0.0, 0.0),
                color=rng.uniform(0.1, 0.9, 3),
                opacity=1.0))
    scene = Scene(splats=splats, background_color=(0.0, 0.0, 0.0))
    scene.trajectory = make_orbit_trajectory(orbit_radius, cameras, elevation_deg)
    return scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-splats", type=int, default=160)
    ap.add_argument("--radius", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--ring", type=int, default=40,
                    help="splats in the silhouette ring (0 disables)")
    ap.add_argument("--cameras", type=int, default=10)
    ap.add_argument("--orbit-radius", type=float, default=4.0)
    ap.add_argument("--elevation-deg", type=float, default=0.0)
    ap.add_argument("--out", type=Path, default=Path("scene.json"))
    args = ap.parse_args()

    scene = build_scene(args.n_splats, args.radius, args.seed, args.ring,
                        args.cameras, args.orbit_radius, args.elevation_deg)
    save_scene(scene, args.out)
    print(f"wrote {args.out} ({len(scene.splats)} splats, "
          f"{len(scene.trajectory)} trajectory poses)")


if __name__ == "__main__":
    main()
