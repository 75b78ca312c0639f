"""Render-and-compare baseline: pose by photometric loss descent.

The pose is moved down the finite-difference gradient of the image
difference between the query and a re-rendered frame. Every gradient
evaluation costs 12 renders (central differences over the 6 twist
coordinates) plus one render per line-search probe, which is the
structural reason this baseline is orders of magnitude slower than the
single-render feature pipeline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .geometry import Intrinsics, Pose, compose, exp_se3
from .localization import SOLVED, LocalizationResult, StageTimings
from .rendering import Scene, render


@dataclass(frozen=True)
class PhotometricConfig:
    max_iterations: int = 300
    # Twist step for central-difference gradients.
    fd_step: float = 1e-4
    initial_step: float = 1e-2
    shrink: float = 0.5
    max_backtracks: int = 8
    loss_tolerance: float = 1e-10
    step_tolerance: float = 1e-8
    render_mode: str = "alpha"


def photometric_loss(query: np.ndarray, rendered: np.ndarray) -> float:
    """Mean over pixels and channels of the squared intensity difference."""
    a = np.asarray(query, dtype=np.float64)
    b = np.asarray(rendered, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


def localize_photometric(query: np.ndarray, t0: Pose, scene: Scene,
                         k: Intrinsics,
                         cfg: PhotometricConfig | None = None) -> LocalizationResult:
    """Gradient descent on the photometric loss, starting from ``t0``.

    Steps are accepted only when they strictly decrease the loss, so the
    recorded loss history is monotone. The best pose found is always
    returned with status solved; this baseline has no fallback.
    """
    cfg = cfg or PhotometricConfig()
    t_start = time.perf_counter()
    render_time = 0.0
    n_renders = 0

    def rendered_loss(pose):
        nonlocal render_time, n_renders
        t = time.perf_counter()
        frame = render(scene, pose, k, mode=cfg.render_mode)
        render_time += time.perf_counter() - t
        n_renders += 1
        return photometric_loss(query, frame.color)

    pose = t0
    loss = rendered_loss(pose)
    history = [loss]
    accepted = 0
    for _ in range(cfg.max_iterations):
        grad = np.zeros(6)
        for axis in range(6):
            step = np.zeros(6)
            step[axis] = cfg.fd_step
            lp = rendered_loss(compose(pose, exp_se3(step)))
            lm = rendered_loss(compose(pose, exp_se3(-step)))
            grad[axis] = (lp - lm) / (2.0 * cfg.fd_step)
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-18:
            break
        direction = -grad / gnorm
        alpha = cfg.initial_step
        took_step = False
        for _ in range(cfg.max_backtracks):
            pose_try = compose(pose, exp_se3(alpha * direction))
            loss_try = rendered_loss(pose_try)
            if loss_try < loss:
                took_step = True
                break
            alpha *= cfg.shrink
        if not took_step:
            break
        decrease = loss - loss_try
        pose, loss = pose_try, loss_try
        history.append(loss)
        accepted += 1
        if decrease < cfg.loss_tolerance or alpha < cfg.step_tolerance:
            break

    timings = StageTimings(render_s=render_time,
                           total_s=time.perf_counter() - t_start)
    return LocalizationResult(
        pose=pose,
        status=SOLVED,
        n_matches=0,
        n_inliers=0,
        timings=timings,
        n_renders=n_renders,
        accepted_steps=accepted,
        loss_history=tuple(history),
    )
