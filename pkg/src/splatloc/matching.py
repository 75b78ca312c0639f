"""2D-2D correspondences between a query image and a rendered image.

Two interchangeable matchers sit behind :class:`MatcherConfig`:

* the oracle matcher samples rendered pixels with valid depth, pushes them
  through the true geometry into the query view, and corrupts the result
  with configurable pixel noise and outlier injection. It is the
  controlled-experiment stand-in for a learned matcher and never looks at
  image content.
* the classical matcher detects Harris-style corners, describes them with
  normalized intensity patches, and matches by normalized cross
  correlation with a mutual-nearest-neighbor check and a ratio test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import (
    Intrinsics,
    Pose,
    backproject_pixels,
    invert,
    project_points,
    transform_points,
)
from .rendering import RgbdFrame, Scene

ORACLE = "oracle"
CLASSICAL = "classical"


@dataclass
class MatchSet:
    """Paired pixel coordinates (query, rendered) with per-pair scores.

    ``outlier_mask`` flags pairs whose query pixel was replaced during
    oracle outlier injection; it is None for matchers without ground-truth
    labels.
    """

    query_px: np.ndarray
    rendered_px: np.ndarray
    scores: np.ndarray
    outlier_mask: np.ndarray | None = None

    def __post_init__(self):
        self.query_px = np.asarray(self.query_px, dtype=np.float64).reshape(-1, 2)
        self.rendered_px = np.asarray(self.rendered_px, dtype=np.float64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        n = self.query_px.shape[0]
        if self.rendered_px.shape[0] != n or self.scores.shape[0] != n:
            raise ValueError("query_px, rendered_px and scores must have equal length")
        if n and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")

    def __len__(self) -> int:
        return self.query_px.shape[0]


@dataclass(frozen=True)
class OracleMatcherConfig:
    n_target: int = 200
    noise_px_sigma: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0
    # Ground-truth query pose, required by the oracle (evaluation use only).
    query_pose_gt: Pose | None = None

    def __post_init__(self):
        if self.n_target < 0:
            raise ValueError("n_target must be >= 0")
        if self.noise_px_sigma < 0:
            raise ValueError("noise_px_sigma must be >= 0")
        if not (0.0 <= self.outlier_rate <= 1.0):
            raise ValueError("outlier_rate must be in [0, 1]")


@dataclass(frozen=True)
class ClassicalMatcherConfig:
    max_keypoints: int = 400
    corner_threshold: float = 0.01
    patch_size: int = 11
    ratio_threshold: float = 0.7

    def __post_init__(self):
        if self.patch_size % 2 != 1:
            raise ValueError("patch_size must be odd")
        if not (0.0 < self.ratio_threshold <= 1.0):
            raise ValueError("ratio_threshold must be in (0, 1]")


@dataclass(frozen=True)
class MatcherConfig:
    kind: str = ORACLE
    oracle: OracleMatcherConfig = field(default_factory=OracleMatcherConfig)
    classical: ClassicalMatcherConfig = field(default_factory=ClassicalMatcherConfig)

    def __post_init__(self):
        if self.kind not in (ORACLE, CLASSICAL):
            raise ValueError(f"unknown matcher kind {self.kind!r}")


def _in_bounds(uv: np.ndarray, k: Intrinsics) -> np.ndarray:
    # A pixel is in bounds when its nearest-integer lookup cell exists.
    r = np.round(uv)
    return (r[:, 0] >= 0) & (r[:, 0] <= k.width - 1) & (r[:, 1] >= 0) & (r[:, 1] <= k.height - 1)


def _stratified_pixel_sample(mask: np.ndarray, n_target: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Pick up to n_target (x, y) pixels from the True cells of a mask.

    One pixel per cell of a sqrt(n_target)-sided grid, so sparse coverage
    still yields spatially spread samples.
    """
    h, w = mask.shape
    if n_target == 0 or not mask.any():
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    g = int(np.ceil(np.sqrt(n_target)))
    ys_edges = np.linspace(0, h, g + 1).astype(int)
    xs_edges = np.linspace(0, w, g + 1).astype(int)
    xs, ys = [], []
    for gy in range(g):
        for gx in range(g):
            sub = mask[ys_edges[gy]:ys_edges[gy + 1], xs_edges[gx]:xs_edges[gx + 1]]
            if not sub.any():
                continue
            flat = np.flatnonzero(sub)
            pick = flat[rng.integers(0, flat.size)]
            sy, sx = divmod(pick, sub.shape[1])
            ys.append(ys_edges[gy] + sy)
            xs.append(xs_edges[gx] + sx)
    xs = np.asarray(xs, dtype=int)
    ys = np.asarray(ys, dtype=int)
    if xs.size > n_target:
        keep = np.sort(rng.choice(xs.size, size=n_target, replace=False))
        xs, ys = xs[keep], ys[keep]
    return xs, ys


def match_oracle(scene: Scene, rendered: RgbdFrame, query_pose_gt: Pose,
                 k: Intrinsics, cfg: OracleMatcherConfig) -> MatchSet:
    """Ground-truth correspondences from the rendered depth buffer.

    Rendered pixels with finite depth are lifted through the rendered
    pose, reprojected into the ground-truth query view, and kept when they
    land in front of the camera and inside the image. Gaussian noise and
    uniform in-bounds outliers are then injected into the query pixels.
    Deterministic for a fixed seed. The scene argument is part of the
    matcher interface; the oracle reads geometry from the depth buffer.
    """
    del scene
    rng = np.random.default_rng(cfg.seed)
    finite = np.isfinite(rendered.depth)
    xs, ys = _stratified_pixel_sample(finite, cfg.n_target, rng)
    if xs.size == 0:
        return MatchSet(np.empty((0, 2)), np.empty((0, 2)), np.empty(0),
                        outlier_mask=np.empty(0, dtype=bool))
    ur = np.column_stack([xs, ys]).astype(np.float64)
    depths = rendered.depth[ys, xs]
    p_cam_r = backproject_pixels(k, ur, depths)
    p_world = transform_points(rendered.pose, p_cam_r)
    p_cam_q = transform_points(invert(query_pose_gt), p_world)
    uv_q, in_front = project_points(k, p_cam_q)
    keep = in_front & _in_bounds(uv_q, k)
    ur = ur[keep]
    uq = uv_q[keep]
    n = ur.shape[0]
    uq = uq + rng.standard_normal((n, 2)) * cfg.noise_px_sigma
    outlier_mask = np.zeros(n, dtype=bool)
    n_out = int(round(cfg.outlier_rate * n))
    if n_out > 0:
        idx = rng.choice(n, size=n_out, replace=False)
        uq[idx, 0] = rng.uniform(-0.5, k.width - 0.5, size=n_out)
        uq[idx, 1] = rng.uniform(-0.5, k.height - 0.5, size=n_out)
        outlier_mask[idx] = True
    return MatchSet(uq, ur, np.ones(n), outlier_mask=outlier_mask)


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img.mean(axis=2)
    return img


def _harris_response(gray: np.ndarray) -> np.ndarray:
    iy, ix = np.gradient(gray)
    sxx = ndimage.gaussian_filter(ix * ix, 1.5)
    syy = ndimage.gaussian_filter(iy * iy, 1.5)
    sxy = ndimage.gaussian_filter(ix * iy, 1.5)
    return sxx * syy - sxy * sxy - 0.05 * (sxx + syy) ** 2


def _detect_corners(gray: np.ndarray, cfg: ClassicalMatcherConfig) -> np.ndarray:
    """(x, y) integer keypoints, sorted row-major, at most max_keypoints."""
    resp = _harris_response(gray)
    margin = cfg.patch_size // 2
    peak = (resp == ndimage.maximum_filter(resp, size=3))
    rmax = resp.max()
    if rmax <= 0.0:
        return np.empty((0, 2), dtype=int)
    # Threshold relative to the strongest response, which keeps detection
    # invariant to global affine intensity changes.
    cand = peak & (resp > cfg.corner_threshold * rmax)
    if margin > 0:
        cand[:margin, :] = False
        cand[-margin:, :] = False
        cand[:, :margin] = False
        cand[:, -margin:] = False
    ys, xs = np.nonzero(cand)
    if xs.size == 0:
        return np.empty((0, 2), dtype=int)
    if xs.size > cfg.max_keypoints:
        # Strongest responses first; ties resolved by row-major position.
        order = np.lexsort((xs, ys, -resp[ys, xs]))[:cfg.max_keypoints]
        xs, ys = xs[order], ys[order]
    order = np.lexsort((xs, ys))
    return np.column_stack([xs[order], ys[order]])


def _describe(gray: np.ndarray, kps: np.ndarray, patch_size: int):
    """Mean/variance-normalized unit-length patch descriptors."""
    half = patch_size // 2
    descs, kept = [], []
    for i, (x, y) in enumerate(kps):
        patch = gray[y - half:y + half + 1, x - half:x + half + 1].ravel()
        std = patch.std()
        if std < 1e-12:
            continue
        d = (patch - patch.mean()) / std
        descs.append(d / np.linalg.norm(d))
        kept.append(i)
    if not descs:
        return np.empty((0, patch_size * patch_size)), np.empty(0, dtype=int)
    return np.array(descs), np.array(kept, dtype=int)


def match_classical(query: np.ndarray, rendered: np.ndarray,
                    cfg: ClassicalMatcherConfig | None = None) -> MatchSet:
    """Corner detection + normalized patch correlation matching.

    Matches must be mutual nearest neighbors and pass the ratio test
    (best over second-best descriptor distance below the threshold).
    Returns an empty set on textureless input.
    """
    cfg = cfg or ClassicalMatcherConfig()
    gq = _to_gray(query)
    gr = _to_gray(rendered)
    if gq.shape != gr.shape:
        raise ValueError(f"image shapes differ: {gq.shape} vs {gr.shape}")
    kq = _detect_corners(gq, cfg)
    kr = _detect_corners(gr, cfg)
    dq, iq = _describe(gq, kq, cfg.patch_size)
    dr, ir = _describe(gr, kr, cfg.patch_size)
    if dq.shape[0] == 0 or dr.shape[0] < 2:
        return MatchSet(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))
    sim = dq @ dr.T
    dist = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * sim))
    best_r = np.argmin(dist, axis=1)
    best_q = np.argmin(dist, axis=0)
    pairs = []
    for qi in range(dq.shape[0]):
        ri = best_r[qi]
        if best_q[ri] != qi:
            continue
        row = dist[qi]
        d1 = row[ri]
        d2 = np.min(np.delete(row, ri))
        if d2 < 1e-12:
            if d1 >= 1e-12:
                continue
        elif d1 / d2 >= cfg.ratio_threshold:
            continue
        pairs.append((qi, ri))
    if not pairs:
        return MatchSet(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))
    qidx = np.array([p[0] for p in pairs])
    ridx = np.array([p[1] for p in pairs])
    scores = np.clip((1.0 + sim[qidx, ridx]) / 2.0, 0.0, 1.0)
    return MatchSet(kq[iq[qidx]].astype(np.float64),
                    kr[ir[ridx]].astype(np.float64), scores)


def run_matcher(cfg: MatcherConfig, scene: Scene, rendered: RgbdFrame,
                query_image: np.ndarray | None, k: Intrinsics) -> MatchSet:
    """Dispatch to the configured matcher."""
    if cfg.kind == ORACLE:
        if cfg.oracle.query_pose_gt is None:
            raise ValueError("oracle matcher requires query_pose_gt in its config")
        return match_oracle(scene, rendered, cfg.oracle.query_pose_gt, k, cfg.oracle)
    if query_image is None:
        raise ValueError("classical matcher requires a query image")
    return match_classical(query_image, rendered.color, cfg.classical)
