"""Pose from 2D-3D correspondences: damped least squares inside RANSAC.

The solver minimizes the sum of squared reprojection errors over a 6-dim
twist. The twist is applied as a right-multiplicative body-frame update of
the camera-to-world pose, ``T <- T * exp(delta)``, which makes the
translation columns of the Jacobian axis-aligned in the camera frame
(for an on-axis point, du/dvx = -fx/z).

RANSAC hypotheses are produced by running the damped solver on minimal
samples seeded at the caller's initial pose; there is no algebraic
minimal solver. Points that fall behind the camera contribute a constant
capped residual so the objective stays defined for poor poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import EPS_Z, Intrinsics, Pose, compose, exp_se3, invert

# Residual magnitude, in pixels, assigned per component to behind-camera points.
BEHIND_CAMERA_RESIDUAL = 1e6

MIN_CORRESPONDENCES = 4


class TooFewCorrespondences(ValueError):
    """Fewer than the minimum usable 2D-3D correspondences."""


class NoConsensus(RuntimeError):
    """RANSAC found no model with a minimal consensus set."""


@dataclass
class LiftedSet:
    """2D query pixels paired with world-frame 3D points.

    ``source_indices`` optionally maps each pair back to its index in the
    match set it was lifted from (pairs can be dropped during lifting).
    """

    query_px: np.ndarray
    world_pts: np.ndarray
    source_indices: np.ndarray | None = None

    def __post_init__(self):
        self.query_px = np.asarray(self.query_px, dtype=np.float64).reshape(-1, 2)
        self.world_pts = np.asarray(self.world_pts, dtype=np.float64).reshape(-1, 3)
        if self.query_px.shape[0] != self.world_pts.shape[0]:
            raise ValueError("query_px and world_pts must have equal length")
        if not (np.all(np.isfinite(self.query_px)) and np.all(np.isfinite(self.world_pts))):
            raise ValueError("correspondences must be finite")

    def __len__(self) -> int:
        return self.query_px.shape[0]

    def subset(self, idx) -> "LiftedSet":
        src = None if self.source_indices is None else self.source_indices[idx]
        return LiftedSet(self.query_px[idx], self.world_pts[idx], src)


@dataclass
class PnpResult:
    pose: Pose
    converged: bool
    iterations: int
    rmse_px: float
    inlier_mask: np.ndarray
    inlier_count: int
    cost_history: tuple = ()
    rounds: int = 0


@dataclass(frozen=True)
class LmConfig:
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    step_tolerance: float = 1e-10
    residual_tolerance: float = 1e-12


@dataclass(frozen=True)
class RansacConfig:
    threshold_px: float | None = None
    threshold_frac_of_width: float = 0.01
    max_rounds: int = 100
    confidence: float = 0.999
    min_sample: int = MIN_CORRESPONDENCES
    seed: int = 0

    def resolve_threshold(self, k: Intrinsics) -> float:
        if self.threshold_px is not None:
            return self.threshold_px
        return self.threshold_frac_of_width * k.width


@dataclass(frozen=True)
class PnpConfig:
    max_iterations: int = 50
    ransac: RansacConfig = field(default_factory=RansacConfig)
    lm: LmConfig = field(default_factory=LmConfig)


def _points_in_camera(pose: Pose, world_pts: np.ndarray) -> np.ndarray:
    w2c = invert(pose)
    return world_pts @ w2c.rotation.T + w2c.translation


def reprojection_residuals(pose: Pose, lifted: LiftedSet, k: Intrinsics) -> np.ndarray:
    """Stacked (u, v) reprojection residuals, shape (2N,).

    residual_i = project(world point under the pose) - observed query pixel.
    Behind-camera points get constant components of BEHIND_CAMERA_RESIDUAL.
    """
    pc = _points_in_camera(pose, lifted.world_pts)
    z = pc[:, 2]
    ok = z > EPS_Z
    zs = np.where(ok, z, 1.0)
    res = np.empty((len(lifted), 2))
    res[:, 0] = k.fx * pc[:, 0] / zs + k.cx - lifted.query_px[:, 0]
    res[:, 1] = k.fy * pc[:, 1] / zs + k.cy - lifted.query_px[:, 1]
    res[~ok] = BEHIND_CAMERA_RESIDUAL
    return res.reshape(-1)


def residual_jacobian(pose: Pose, lifted: LiftedSet, k: Intrinsics) -> np.ndarray:
    """Analytic derivative of the residuals w.r.t. the body-frame twist.

    Twist ordering is (wx, wy, wz, vx, vy, vz); rows follow the residual
    stacking. Behind-camera points get zero rows, matching their constant
    capped residuals.
    """
    pc = _points_in_camera(pose, lifted.world_pts)
    n = len(lifted)
    jac = np.zeros((n, 2, 6))
    ok = pc[:, 2] > EPS_Z
    x, y, z = pc[ok, 0], pc[ok, 1], pc[ok, 2]
    inv_z = 1.0 / z
    # d(pixel)/d(camera point)
    du = np.zeros((x.size, 3))
    du[:, 0] = k.fx * inv_z
    du[:, 2] = -k.fx * x * inv_z**2
    dv = np.zeros((x.size, 3))
    dv[:, 1] = k.fy * inv_z
    dv[:, 2] = -k.fy * y * inv_z**2
    # d(camera point)/d(twist): +[p]x for rotation, -I for translation,
    # from p(delta) = exp(-delta) p.
    dp = np.zeros((x.size, 3, 6))
    dp[:, 0, 1] = -z
    dp[:, 0, 2] = y
    dp[:, 1, 0] = z
    dp[:, 1, 2] = -x
    dp[:, 2, 0] = -y
    dp[:, 2, 1] = x
    dp[:, 0, 3] = -1.0
    dp[:, 1, 4] = -1.0
    dp[:, 2, 5] = -1.0
    jac[ok, 0] = np.einsum("ni,nij->nj", du, dp)
    jac[ok, 1] = np.einsum("ni,nij->nj", dv, dp)
    return jac.reshape(2 * n, 6)


def _pair_errors(pose: Pose, lifted: LiftedSet, k: Intrinsics) -> np.ndarray:
    res = reprojection_residuals(pose, lifted, k).reshape(-1, 2)
    return np.hypot(res[:, 0], res[:, 1])


def _rmse(residuals: np.ndarray) -> float:
    if residuals.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(residuals**2)))


def solve_pnp_lm(lifted: LiftedSet, k: Intrinsics, init: Pose,
                 cfg: PnpConfig | None = None) -> PnpResult:
    """Damped Gauss-Newton refinement of the pose from an initial guess.

    Accepted steps never increase the objective. ``converged`` means the
    step norm or the achieved cost decrease fell below its tolerance
    before the iteration cap. All pairs are marked inliers; rejection is
    the RANSAC layer's job.
    """
    cfg = cfg or PnpConfig()
    n = len(lifted)
    if n < MIN_CORRESPONDENCES:
        raise TooFewCorrespondences(
            f"need at least {MIN_CORRESPONDENCES} correspondences, got {n}")
    pose = init
    res = reprojection_residuals(pose, lifted, k)
    cost = float(res @ res)
    costs = [cost]
    lam = cfg.lm.initial_damping
    converged = False
    iterations = 0
    eye6 = np.eye(6)
    for iterations in range(1, cfg.max_iterations + 1):
        jac = residual_jacobian(pose, lifted, k)
        grad = jac.T @ res
        hess = jac.T @ jac
        accepted = False
        step_norm = 0.0
        for _ in range(50):
            try:
                delta = np.linalg.solve(hess + lam * eye6, -grad)
            except np.linalg.LinAlgError:
                lam *= cfg.lm.damping_up
                continue
            step_norm = float(np.linalg.norm(delta))
            pose_try = compose(pose, exp_se3(delta))
            res_try = reprojection_residuals(pose_try, lifted, k)
            cost_try = float(res_try @ res_try)
            if cost_try < cost:
                accepted = True
                break
            lam *= cfg.lm.damping_up
            if lam > 1e15:
                break
        if not accepted:
            # Stalled: treat a vanishing proposed step as convergence.
            converged = step_norm < cfg.lm.step_tolerance
            break
        decrease = cost - cost_try
        pose, res, cost = pose_try, res_try, cost_try
        costs.append(cost)
        lam = max(lam * cfg.lm.damping_down, 1e-15)
        if step_norm < cfg.lm.step_tolerance or decrease < cfg.lm.residual_tolerance:
            converged = True
            break
    return PnpResult(
        pose=pose,
        converged=converged,
        iterations=iterations,
        rmse_px=_rmse(res),
        inlier_mask=np.ones(n, dtype=bool),
        inlier_count=n,
        cost_history=tuple(costs),
    )


def solve_pnp_ransac(lifted: LiftedSet, k: Intrinsics, init: Pose,
                     cfg: PnpConfig | None = None) -> PnpResult:
    """Consensus-robust pose estimation around :func:`solve_pnp_lm`.

    Minimal samples are refined from the initial pose, scored by the count
    of pairs whose reprojection error is below the pixel threshold, and
    the round loop exits early once the adaptive bound for the configured
    confidence is reached. The best model is refit on all of its inliers;
    the returned mask and count reflect that final model. Ties in the
    consensus score keep the earliest hypothesis.
    """
    cfg = cfg or PnpConfig()
    n = len(lifted)
    if n < cfg.ransac.min_sample:
        raise TooFewCorrespondences(
            f"need at least {cfg.ransac.min_sample} correspondences, got {n}")
    threshold = cfg.ransac.resolve_threshold(k)
    rng = np.random.default_rng(cfg.ransac.seed)
    best_count = 0
    best_pose = None
    rounds_needed = cfg.ransac.max_rounds
    rounds = 0
    while rounds < min(cfg.ransac.max_rounds, rounds_needed):
        sample = rng.choice(n, size=cfg.ransac.min_sample, replace=False)
        rounds += 1
        hyp = solve_pnp_lm(lifted.subset(sample), k, init, cfg)
        errors = _pair_errors(hyp.pose, lifted, k)
        count = int(np.count_nonzero(errors < threshold))
        if count > best_count:
            best_count = count
            best_pose = hyp.pose
            ratio = best_count / n
            p_good = ratio ** cfg.ransac.min_sample
            if p_good >= 1.0:
                rounds_needed = rounds
            elif p_good > 0.0:
                rounds_needed = math.ceil(
                    math.log(1.0 - cfg.ransac.confidence) / math.log(1.0 - p_good))
    if best_count < cfg.ransac.min_sample or best_pose is None:
        raise NoConsensus(
            f"best consensus {best_count} below minimum {cfg.ransac.min_sample}")
    inliers = _pair_errors(best_pose, lifted, k) < threshold
    refit = solve_pnp_lm(lifted.subset(inliers), k, best_pose, cfg)
    final_errors = _pair_errors(refit.pose, lifted, k)
    final_mask = final_errors < threshold
    final_res = reprojection_residuals(refit.pose, lifted.subset(final_mask), k)
    return PnpResult(
        pose=refit.pose,
        converged=refit.converged,
        iterations=refit.iterations,
        rmse_px=_rmse(final_res),
        inlier_mask=final_mask,
        inlier_count=int(np.count_nonzero(final_mask)),
        cost_history=refit.cost_history,
        rounds=rounds,
    )
