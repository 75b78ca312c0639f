"""Metrics, initial-pose protocols, sensitivity sweeps, and benchmarks.

Rotation error is the geodesic angle in degrees; translation error is the
camera-center distance normalized by the scene scale (mean distance of
the trajectory camera centers from their centroid). A trial is a success
when strictly RE < 5 degrees and normalized TE < 0.05.

Every trial derives its own seed from the run seed and the trial
coordinates, so parallel and sequential executions produce identical
records, and different methods evaluated on the same trial share the same
initial pose.
"""

from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Intrinsics, Pose, rotation_angle_between, rotation_from_axis_angle
from .localization import localize
from .matching import MatcherConfig
from .photometric import PhotometricConfig, localize_photometric
from .pnp import PnpConfig
from .rendering import Scene, render

SUCCESS_RE_DEG = 5.0
SUCCESS_TE_NORM = 0.05

# 97.5% standard-normal quantile: half-normal magnitudes with
# sigma = limit / this constant fall below the limit 95% of the time.
_HALF_NORMAL_95 = 1.959963984540054

FEATURE = "feature"
PHOTOMETRIC = "photometric"


@dataclass(frozen=True)
class Metrics:
    re_deg: float
    te_norm: float
    time_s: float = 0.0

    @property
    def success(self) -> bool:
        return self.re_deg < SUCCESS_RE_DEG and self.te_norm < SUCCESS_TE_NORM


@dataclass(frozen=True)
class PerturbationLimits:
    delta_theta_deg: float
    delta_p: float

    def __post_init__(self):
        if self.delta_theta_deg < 0 or self.delta_p < 0:
            raise ValueError("perturbation limits must be >= 0")


def scene_scale(trajectory: list[Pose]) -> float:
    """Mean distance of the trajectory camera centers from their centroid."""
    if not trajectory:
        raise ValueError("trajectory must contain at least one pose")
    centers = np.array([p.translation for p in trajectory])
    centroid = centers.mean(axis=0)
    return float(np.mean(np.linalg.norm(centers - centroid, axis=1)))


def pose_errors(est: Pose, gt: Pose, scale: float, time_s: float = 0.0) -> Metrics:
    if scale <= 0:
        raise ValueError("scale must be > 0")
    re = rotation_angle_between(est.rotation, gt.rotation)
    te = float(np.linalg.norm(est.translation - gt.translation)) / scale
    return Metrics(re_deg=re, te_norm=te, time_s=time_s)


def _unit_vector(rng) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def _rotate_about_center(pose: Pose, axis, angle_rad: float) -> Pose:
    return Pose(rotation_from_axis_angle(axis, angle_rad) @ pose.rotation,
                pose.translation)


def sample_initial_pose(gt: Pose, limits: PerturbationLimits, rng) -> Pose:
    """Randomized perturbation: uniform axis/direction, half-normal magnitudes.

    Magnitudes are |N(0, sigma)| with sigma chosen so 95% of draws fall
    inside the respective limit. The rotation is applied about the camera
    center, then the translation offset is added.
    """
    axis = _unit_vector(rng)
    theta = abs(rng.normal(0.0, math.radians(limits.delta_theta_deg) / _HALF_NORMAL_95))
    direction = _unit_vector(rng)
    mag = abs(rng.normal(0.0, limits.delta_p / _HALF_NORMAL_95))
    perturbed = _rotate_about_center(gt, axis, theta)
    return Pose(perturbed.rotation, perturbed.translation + mag * direction)


def sample_initial_pose_uniform(gt: Pose, rng, scale: float = 1.0) -> Pose:
    """Translation U(0, 0.2) along a random direction, then a rotation of
    magnitude U(10, 40) degrees about a random axis.

    The translation interval is in scene-normalized units; pass the scene
    scale to convert to world units.
    """
    direction = _unit_vector(rng)
    t_mag = rng.uniform(0.0, 0.2)
    axis = _unit_vector(rng)
    angle = math.radians(rng.uniform(10.0, 40.0))
    shifted = Pose(gt.rotation, gt.translation + t_mag * scale * direction)
    return _rotate_about_center(shifted, axis, angle)


def deviation_limits(k: Intrinsics, trajectory_radius: float,
                     override: PerturbationLimits | tuple | None = None) -> PerturbationLimits:
    """Geometric perturbation limits, or an explicit override verbatim.

    Model: a centered object of radius R/2 viewed from a trajectory of
    radius R leaves the frame at delta_theta = half-FoV + arcsin(1/2);
    delta_p = R * tan(delta_theta).
    """
    if override is not None:
        if isinstance(override, PerturbationLimits):
            return override
        return PerturbationLimits(*override)
    if trajectory_radius <= 0:
        raise ValueError("trajectory_radius must be > 0")
    half_fov = math.degrees(math.atan((k.width / 2.0) / k.fx))
    delta_theta = half_fov + math.degrees(math.asin(0.5))
    if delta_theta >= 90.0:
        raise ValueError("geometric limit rule undefined for half-FoV >= 60 degrees")
    delta_p = trajectory_radius * math.tan(math.radians(delta_theta))
    return PerturbationLimits(delta_theta_deg=delta_theta, delta_p=delta_p)


def _trial_seed(*parts) -> int:
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def _worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    raw = os.environ.get("SPLATLOC_THREADS")
    if raw is None or raw == "":
        return 1
    n = int(raw)
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _feature_configs(matcher_cfg, pnp_cfg, gt, seed):
    matcher_cfg = matcher_cfg or MatcherConfig()
    pnp_cfg = pnp_cfg or PnpConfig()
    if matcher_cfg.kind == "oracle":
        oracle = replace(matcher_cfg.oracle, query_pose_gt=gt,
                         seed=_trial_seed(seed, "matcher"))
        matcher_cfg = replace(matcher_cfg, oracle=oracle)
    pnp_cfg = replace(pnp_cfg, ransac=replace(pnp_cfg.ransac,
                                              seed=_trial_seed(seed, "ransac")))
    return matcher_cfg, pnp_cfg


def _run_method(method, query_image, init, gt, scene, k, seed,
                matcher_cfg, pnp_cfg, photo_cfg):
    if method == FEATURE:
        m_cfg, p_cfg = _feature_configs(matcher_cfg, pnp_cfg, gt, seed)
        return localize(query_image, init, scene, k, matcher=m_cfg, pnp_cfg=p_cfg)
    if method == PHOTOMETRIC:
        if query_image is None:
            raise ValueError("photometric method requires a query image")
        return localize_photometric(query_image, init, scene, k, cfg=photo_cfg)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class SweepPoint:
    fraction: float
    offset: float
    success_rate: float


def run_sensitivity_sweep(scene: Scene, k: Intrinsics, axis: str,
                          n_steps: int, trials_per_step: int,
                          method: str = FEATURE, seed: int = 0,
                          limit: float | None = None,
                          matcher_cfg: MatcherConfig | None = None,
                          pnp_cfg: PnpConfig | None = None,
                          photo_cfg: PhotometricConfig | None = None) -> list[SweepPoint]:
    """Success rate as a function of a deterministic initial-pose offset.

    ``axis`` is ``"yaw"`` (rotation about the world vertical through the
    camera center, offsets in degrees) or ``"tx"`` (translation along the
    world x axis, offsets in scene units). Offsets are placed at
    k/n_steps * limit for k = 0..n_steps; when ``limit`` is omitted it
    comes from :func:`deviation_limits` for the scene trajectory.
    """
    if axis not in ("yaw", "tx"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    if not scene.trajectory:
        raise ValueError("scene has no trajectory to draw query poses from")
    trajectory = scene.trajectory
    scale = scene_scale(trajectory)
    if limit is None:
        limits = deviation_limits(k, scale)
        limit = limits.delta_theta_deg if axis == "yaw" else limits.delta_p
    query_images: dict[int, np.ndarray] = {}
    need_images = method == PHOTOMETRIC or (matcher_cfg is not None
                                            and matcher_cfg.kind == "classical")
    points = []
    for step in range(n_steps + 1):
        fraction = step / n_steps
        offset = fraction * limit
        successes = 0
        for t in range(trials_per_step):
            gt = trajectory[t % len(trajectory)]
            if axis == "yaw":
                init = _rotate_about_center(gt, (0.0, 0.0, 1.0), math.radians(offset))
            else:
                init = Pose(gt.rotation, gt.translation + np.array([offset, 0.0, 0.0]))
            if need_images:
                qi = t % len(trajectory)
                if qi not in query_images:
                    query_images[qi] = render(scene, gt, k, mode="alpha").color
                image = query_images[qi]
            else:
                image = None
            trial_seed = _trial_seed(seed, "sweep", axis, step, t)
            result = _run_method(method, image, init, gt, scene, k, trial_seed,
                                 matcher_cfg, pnp_cfg, photo_cfg)
            if pose_errors(result.pose, gt, scale).success:
                successes += 1
        points.append(SweepPoint(fraction=fraction, offset=offset,
                                 success_rate=successes / trials_per_step))
    return points


def write_sweep_curve(points: list[SweepPoint], path) -> None:
    """Two-column text: fraction of the sweep limit, success rate."""
    with open(path, "w") as f:
        for p in points:
            f.write(f"{p.fraction:.6f} {p.success_rate:.6f}\n")


@dataclass
class TrialRecord:
    scene_id: str
    query_id: int
    init_index: int
    method: str
    protocol: str
    trial_seed: int
    status: str
    init_re_deg: float
    init_te_norm: float
    final_re_deg: float
    final_te_norm: float
    success: bool
    n_matches: int
    n_inliers: int
    n_renders: int
    time_s: float


_CSV_COLUMNS = ("scene_id", "query_id", "init_index", "method", "protocol",
                "trial_seed", "status", "init_re_deg", "init_te_norm",
                "final_re_deg", "final_te_norm", "success", "n_matches",
                "n_inliers", "n_renders")


@dataclass
class BenchmarkReport:
    records: list[TrialRecord]
    inits_per_query: int = 1

    def aggregates(self) -> dict:
        """Per-method means; recomputable from the records.

        With several initial poses per query, a best-per-query variant
        (lowest final rotation error) is reported alongside the plain
        average, since either reading of a multi-init protocol is
        defensible.
        """
        out: dict[str, dict] = {}
        for method in sorted({r.method for r in self.records}):
            rows = [r for r in self.records if r.method == method]
            agg = {
                "n_trials": len(rows),
                "mean_re_deg": float(np.mean([r.final_re_deg for r in rows])),
                "mean_te_norm": float(np.mean([r.final_te_norm for r in rows])),
                "success_rate": float(np.mean([r.success for r in rows])),
                "mean_time_s": float(np.mean([r.time_s for r in rows])),
            }
            if self.inits_per_query > 1:
                best = []
                for qid in sorted({r.query_id for r in rows}):
                    qrows = [r for r in rows if r.query_id == qid]
                    best.append(min(qrows, key=lambda r: r.final_re_deg))
                agg["best_mean_re_deg"] = float(np.mean([r.final_re_deg for r in best]))
                agg["best_mean_te_norm"] = float(np.mean([r.final_te_norm for r in best]))
                agg["best_success_rate"] = float(np.mean([r.success for r in best]))
            out[method] = agg
        return out

    def summary(self) -> dict:
        """Deterministic aggregate view (timing excluded)."""
        aggs = self.aggregates()
        for agg in aggs.values():
            agg.pop("mean_time_s")
        return aggs

    def timing_summary(self) -> dict:
        return {method: agg["mean_time_s"]
                for method, agg in self.aggregates().items()}

    def to_csv(self, path) -> None:
        """Deterministic per-trial records; timings are reported separately."""
        with open(path, "w") as f:
            f.write(",".join(_CSV_COLUMNS) + "\n")
            for r in self.records:
                vals = []
                for col in _CSV_COLUMNS:
                    v = getattr(r, col)
                    if isinstance(v, bool):
                        vals.append("1" if v else "0")
                    elif isinstance(v, float):
                        vals.append(f"{v:.17g}")
                    else:
                        vals.append(str(v))
                f.write(",".join(vals) + "\n")


def run_benchmark(scene: Scene, k: Intrinsics, methods: list[str],
                  protocol: str = "random", seed: int = 0,
                  scene_id: str = "scene",
                  query_indices: list[int] | None = None,
                  inits_per_query: int = 1,
                  limits: PerturbationLimits | None = None,
                  matcher_cfg: MatcherConfig | None = None,
                  pnp_cfg: PnpConfig | None = None,
                  photo_cfg: PhotometricConfig | None = None,
                  workers: int | None = None) -> BenchmarkReport:
    """Run each method over randomized initial poses from the trajectory.

    All methods see identical trials: the initial pose of a trial depends
    only on the run seed, scene, query, init index, and protocol. Wall
    clock covers the localize call alone. A trial that raises is recorded
    with status "error" instead of aborting the run.
    """
    if protocol not in ("random", "uniform"):
        raise ValueError(f"unknown protocol {protocol!r}")
    if not scene.trajectory:
        raise ValueError("scene has no trajectory to benchmark against")
    trajectory = scene.trajectory
    if query_indices is None:
        query_indices = list(range(len(trajectory)))
    scale = scene_scale(trajectory)
    if protocol == "random" and limits is None:
        limits = deviation_limits(k, scale)

    need_images = PHOTOMETRIC in methods or (matcher_cfg is not None
                                             and matcher_cfg.kind == "classical")
    query_images: dict[int, np.ndarray] = {}
    if need_images:
        for qi in query_indices:
            query_images[qi] = render(scene, trajectory[qi], k, mode="alpha").color

    tasks = []
    for qi in query_indices:
        gt = trajectory[qi]
        for j in range(inits_per_query):
            t_seed = _trial_seed(seed, scene_id, qi, j, protocol)
            rng = np.random.default_rng(t_seed)
            if protocol == "random":
                init = sample_initial_pose(gt, limits, rng)
            else:
                init = sample_initial_pose_uniform(gt, rng, scale=scale)
            for method in methods:
                tasks.append((qi, j, method, t_seed, gt, init))

    def run_task(task):
        qi, j, method, t_seed, gt, init = task
        init_m = pose_errors(init, gt, scale)
        image = query_images.get(qi)
        import time as _time
        t0 = _time.perf_counter()
        try:
            result = _run_method(method, image, init, gt, scene, k, t_seed,
                                 matcher_cfg, pnp_cfg, photo_cfg)
            elapsed = _time.perf_counter() - t0
            final_m = pose_errors(result.pose, gt, scale)
            return TrialRecord(
                scene_id=scene_id, query_id=qi, init_index=j, method=method,
                protocol=protocol, trial_seed=t_seed, status=result.status,
                init_re_deg=init_m.re_deg, init_te_norm=init_m.te_norm,
                final_re_deg=final_m.re_deg, final_te_norm=final_m.te_norm,
                success=final_m.success, n_matches=result.n_matches,
                n_inliers=result.n_inliers, n_renders=result.n_renders,
                time_s=elapsed)
        except Exception:
            elapsed = _time.perf_counter() - t0
            return TrialRecord(
                scene_id=scene_id, query_id=qi, init_index=j, method=method,
                protocol=protocol, trial_seed=t_seed, status="error",
                init_re_deg=init_m.re_deg, init_te_norm=init_m.te_norm,
                final_re_deg=float("inf"), final_te_norm=float("inf"),
                success=False, n_matches=0, n_inliers=0, n_renders=0,
                time_s=elapsed)

    n_workers = _worker_count(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(run_task, tasks))
    else:
        records = [run_task(t) for t in tasks]
    return BenchmarkReport(records=records, inits_per_query=inits_per_query)
