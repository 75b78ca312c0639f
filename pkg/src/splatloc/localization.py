"""The four-step pose pipeline: render at the initial pose, match, lift, solve.

Exactly one frame is rendered per query. Whenever correspondences are
insufficient, consensus fails, or the final refit does not converge, the
pipeline returns the initial pose unchanged (status ``fallback_initial``)
rather than raising.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics, Pose, backproject_pixels, transform_points
from .matching import MatcherConfig, MatchSet, run_matcher
from .pnp import LiftedSet, NoConsensus, PnpConfig, TooFewCorrespondences, solve_pnp_ransac
from .rendering import Scene, render

SOLVED = "solved"
FALLBACK_INITIAL = "fallback_initial"


@dataclass
class StageTimings:
    render_s: float = 0.0
    match_s: float = 0.0
    lift_s: float = 0.0
    pnp_s: float = 0.0
    total_s: float = 0.0


@dataclass
class LocalizationResult:
    pose: Pose
    status: str
    n_matches: int
    n_inliers: int
    timings: StageTimings
    # Number of frames rendered while producing this result. The feature
    # pipeline renders exactly one; iterative baselines render many.
    n_renders: int = 1
    accepted_steps: int | None = None
    loss_history: tuple | None = None
    matches: MatchSet | None = None


def lift_matches(matches: MatchSet, depth: np.ndarray, k: Intrinsics,
                 t0: Pose) -> LiftedSet:
    """Lift 2D-2D matches to 2D-3D pairs through the rendered depth buffer.

    Depth is looked up at the nearest-integer pixel of each rendered-image
    coordinate (no interpolation, which would manufacture phantom points
    across depth discontinuities); backprojection uses the original
    subpixel coordinate. Pairs with a non-finite or non-positive depth and
    pairs whose query pixel falls outside the image are dropped silently;
    survivors keep their input order.
    """
    n = len(matches)
    if n == 0:
        return LiftedSet(np.empty((0, 2)), np.empty((0, 3)),
                         source_indices=np.empty(0, dtype=int))
    ur = matches.rendered_px
    px = np.round(ur[:, 0]).astype(int)
    py = np.round(ur[:, 1]).astype(int)
    if (px.min() < 0 or px.max() >= k.width or py.min() < 0 or py.max() >= k.height):
        raise ValueError("rendered-image pixels outside the depth buffer")
    d = depth[py, px]
    uq = matches.query_px
    rq = np.round(uq)
    keep = (np.isfinite(d) & (d > 0)
            & (rq[:, 0] >= 0) & (rq[:, 0] <= k.width - 1)
            & (rq[:, 1] >= 0) & (rq[:, 1] <= k.height - 1))
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        return LiftedSet(np.empty((0, 2)), np.empty((0, 3)), source_indices=idx)
    p_cam = backproject_pixels(k, ur[idx], d[idx])
    p_world = transform_points(t0, p_cam)
    return LiftedSet(uq[idx], p_world, source_indices=idx)


def localize(query: np.ndarray | None, t0: Pose, scene: Scene, k: Intrinsics,
             matcher: MatcherConfig | None = None,
             pnp_cfg: PnpConfig | None = None,
             render_mode: str = "opaque",
             keep_matches: bool = False) -> LocalizationResult:
    """Estimate the query camera pose starting from the initial guess ``t0``.

    ``query`` may be None for the oracle matcher, which never reads image
    content. All failure modes fold into a fallback result whose pose is
    bit-identical to ``t0``.
    """
    matcher = matcher or MatcherConfig()
    pnp_cfg = pnp_cfg or PnpConfig()
    t_start = time.perf_counter()
    timings = StageTimings()

    t = time.perf_counter()
    frame = render(scene, t0, k, mode=render_mode)
    timings.render_s = time.perf_counter() - t

    t = time.perf_counter()
    matches = run_matcher(matcher, scene, frame, query, k)
    timings.match_s = time.perf_counter() - t

    t = time.perf_counter()
    lifted = lift_matches(matches, frame.depth, k, t0)
    timings.lift_s = time.perf_counter() - t

    status = FALLBACK_INITIAL
    pose = t0
    n_inliers = 0
    t = time.perf_counter()
    if len(lifted) >= 4:
        try:
            result = solve_pnp_ransac(lifted, k, t0, pnp_cfg)
        except (TooFewCorrespondences, NoConsensus):
            result = None
        if result is not None and result.converged:
            status = SOLVED
            pose = result.pose
            n_inliers = result.inlier_count
    timings.pnp_s = time.perf_counter() - t
    timings.total_s = time.perf_counter() - t_start
    return LocalizationResult(
        pose=pose,
        status=status,
        n_matches=len(matches),
        n_inliers=n_inliers,
        timings=timings,
        n_renders=1,
        matches=matches if keep_matches else None,
    )
