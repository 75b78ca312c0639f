"""Synthetic splat scenes and RGBD rendering.

A scene is an ordered collection of colored, oriented 3D Gaussian blobs.
Two render modes are provided:

* ``"opaque"``: each splat is rasterized as the exact projected silhouette
  of its 1-sigma ellipsoid and z-buffered by the depth of the splat
  center. The depth buffer stores the camera-frame z of the nearest
  ray-ellipsoid intersection for the winning splat, so every finite depth
  value corresponds to a point exactly on some splat surface.
* ``"alpha"``: front-to-back compositing in global center-depth order
  with a Gaussian falloff weight per pixel; the depth buffer stores the
  alpha-weighted expected depth. Compositing stops once the accumulated
  alpha of a pixel reaches 0.999.

Both modes are pure functions of their inputs and bit-deterministic:
rendering the same scene twice yields byte-identical buffers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose, invert, look_at, quat_wxyz_to_matrix

# Near plane, scene units: surface intersections at or behind it are ignored.
NEAR_PLANE = 1e-4

# Accumulated alpha at which per-pixel compositing terminates.
ALPHA_SATURATION = 0.999

# Gaussian falloff is truncated at 3 sigma in alpha mode.
_ALPHA_CUTOFF_MAHAL_SQ = 9.0


@dataclass(frozen=True)
class Splat:
    """One colored, oriented Gaussian blob.

    ``scale`` holds the per-axis standard deviations of the blob in its
    own frame; ``orientation_wxyz`` rotates the blob frame into the world.
    """

    center: np.ndarray
    scale: np.ndarray
    orientation_wxyz: np.ndarray
    color: np.ndarray
    opacity: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(3)
        s = np.array(self.scale, dtype=np.float64).reshape(3)
        q = np.array(self.orientation_wxyz, dtype=np.float64).reshape(4)
        col = np.array(self.color, dtype=np.float64).reshape(3)
        if np.any(s <= 0):
            raise ValueError(f"scale components must be > 0, got {s.tolist()}")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("orientation_wxyz must be a unit quaternion")
        if np.any(col < 0) or np.any(col > 1):
            raise ValueError(f"color channels must be in [0, 1], got {col.tolist()}")
        if not (0.0 < self.opacity <= 1.0):
            raise ValueError(f"opacity must be in (0, 1], got {self.opacity}")
        for name, arr in (("center", c), ("scale", s),
                          ("orientation_wxyz", q), ("color", col)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def rotation(self) -> np.ndarray:
        return quat_wxyz_to_matrix(self.orientation_wxyz)


@dataclass
class Scene:
    """Ordered splat list, background color, optional ground-truth trajectory."""

    splats: list[Splat]
    background_color: np.ndarray = (0.0, 0.0, 0.0)
    trajectory: list[Pose] | None = None
    _arrays_cache: dict | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        bg = np.array(self.background_color, dtype=np.float64).reshape(3)
        bg.flags.writeable = False
        self.background_color = bg

    def arrays(self) -> dict:
        """Struct-of-arrays view of the splats, cached for repeated renders."""
        if self._arrays_cache is None:
            n = len(self.splats)
            self._arrays_cache = {
                "centers": np.array([s.center for s in self.splats]).reshape(n, 3),
                "scales": np.array([s.scale for s in self.splats]).reshape(n, 3),
                "rotations": np.array([s.rotation for s in self.splats]).reshape(n, 3, 3),
                "colors": np.array([s.color for s in self.splats]).reshape(n, 3),
                "opacities": np.array([s.opacity for s in self.splats]).reshape(n),
            }
        return self._arrays_cache


@dataclass
class RgbdFrame:
    """Rendered color + depth buffers and the pose/intrinsics that made them."""

    color: np.ndarray
    depth: np.ndarray
    pose: Pose
    intrinsics: Intrinsics

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        if self.color.shape != (h, w, 3):
            raise ValueError(f"color buffer shape {self.color.shape} != ({h}, {w}, 3)")
        if self.depth.shape != (h, w):
            raise ValueError(f"depth buffer shape {self.depth.shape} != ({h}, {w})")
        finite = self.depth[np.isfinite(self.depth)]
        if finite.size and finite.min() <= 0:
            raise ValueError("finite depth values must be > 0")


@functools.lru_cache(maxsize=16)
def _pixel_dirs(k: Intrinsics) -> np.ndarray:
    """Per-pixel ray directions in the camera frame, z-normalized to 1.

    With this normalization the ray parameter t equals camera-frame depth.
    """
    dx = (np.arange(k.width) - k.cx) / k.fx
    dy = (np.arange(k.height) - k.cy) / k.fy
    dirs = np.empty((k.height, k.width, 3))
    dirs[..., 0] = dx[None, :]
    dirs[..., 1] = dy[:, None]
    dirs[..., 2] = 1.0
    dirs.flags.writeable = False
    return dirs


def _splat_bbox(center_cam: np.ndarray, radius: float, k: Intrinsics):
    """Conservative pixel bounding box of a ball around a camera-frame center.

    Returns (x0, x1, y0, y1) as half-open slice bounds, or None when the
    ball is entirely behind the near plane or off-screen. Falls back to the
    full image when the ball straddles the near plane.
    """
    cz = center_cam[2]
    if cz + radius <= NEAR_PLANE:
        return None
    if cz - radius <= NEAR_PLANE:
        return (0, k.width, 0, k.height)
    offs = np.array([-radius, radius])
    xs = center_cam[0] + offs
    ys = center_cam[1] + offs
    zs = center_cam[2] + offs
    # Project the 8 corners of the axis-aligned bounding cube; for all-positive
    # depths the projected cube contains the silhouette.
    u = k.fx * xs[None, :, None] / zs[:, None, None] + k.cx  # broadcast over z, x
    v = k.fy * ys[None, None, :] / zs[:, None, None] + k.cy
    x0 = max(0, int(math.floor(u.min())))
    x1 = min(k.width, int(math.ceil(u.max())) + 1)
    y0 = max(0, int(math.floor(v.min())))
    y1 = min(k.height, int(math.ceil(v.max())) + 1)
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, x1, y0, y1)


def _ray_coeffs(dirs_sub, a_mat, p_vec):
    """Quadratic coefficients of || p + t * q ||^2 along each pixel ray."""
    q = dirs_sub @ a_mat.T
    a = np.einsum("...i,...i->...", q, q)
    b = q @ p_vec
    return a, b


def _render_opaque(arrays, centers_cam, rots_cam, k, color, depth, bg):
    scales = arrays["scales"]
    colors = arrays["colors"]
    n = centers_cam.shape[0]
    # A maps world offsets from the splat center into the unit-sphere frame;
    # the 1-sigma surface is ||A (x - c)|| = 1. Ray origin is the camera, so
    # p = A (0 - center_cam) is constant per splat.
    a_mats = rots_cam.transpose(0, 2, 1) / scales[:, :, None]
    p_vecs = -np.einsum("sij,sj->si", a_mats, centers_cam)
    c0 = np.einsum("si,si->s", p_vecs, p_vecs) - 1.0
    r_eff = scales.max(axis=1)
    dirs = _pixel_dirs(k)
    best_center_z = np.full((k.height, k.width), np.inf)
    for s in range(n):
        bbox = _splat_bbox(centers_cam[s], r_eff[s], k)
        if bbox is None:
            continue
        x0, x1, y0, y1 = bbox
        a, b = _ray_coeffs(dirs[y0:y1, x0:x1], a_mats[s], p_vecs[s])
        disc = b * b - a * c0[s]
        hit = disc >= 0.0
        if not hit.any():
            continue
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t_near = (-b - sq) / a
        t_far = (-b + sq) / a
        t = np.where(t_near > NEAR_PLANE, t_near, t_far)
        upd = hit & (t > NEAR_PLANE) & (centers_cam[s, 2] < best_center_z[y0:y1, x0:x1])
        if not upd.any():
            continue
        best_center_z[y0:y1, x0:x1][upd] = centers_cam[s, 2]
        depth[y0:y1, x0:x1][upd] = t[upd]
        color[y0:y1, x0:x1][upd] = colors[s]


def _render_alpha(arrays, centers_cam, rots_cam, k, color, depth, bg):
    scales = arrays["scales"]
    colors = arrays["colors"]
    opacities = arrays["opacities"]
    a_mats = rots_cam.transpose(0, 2, 1) / scales[:, :, None]
    p_vecs = -np.einsum("sij,sj->si", a_mats, centers_cam)
    c0 = np.einsum("si,si->s", p_vecs, p_vecs) - 1.0
    r_cut = 3.0 * scales.max(axis=1)
    dirs = _pixel_dirs(k)
    accum = np.zeros((k.height, k.width, 3))
    depth_sum = np.zeros((k.height, k.width))
    alpha_sum = np.zeros((k.height, k.width))
    trans = np.ones((k.height, k.width))
    # Global front-to-back order by center depth; ties resolved by splat index.
    order = np.argsort(centers_cam[:, 2], kind="stable")
    for s in order:
        bbox = _splat_bbox(centers_cam[s], r_cut[s], k)
        if bbox is None:
            continue
        x0, x1, y0, y1 = bbox
        a, b = _ray_coeffs(dirs[y0:y1, x0:x1], a_mats[s], p_vecs[s])
        t_star = -b / a
        mahal_sq = c0[s] + 1.0 - b * b / a
        w = np.where(
            (mahal_sq <= _ALPHA_CUTOFF_MAHAL_SQ) & (t_star > NEAR_PLANE),
            opacities[s] * np.exp(-0.5 * np.maximum(mahal_sq, 0.0)),
            0.0,
        )
        t_sub = trans[y0:y1, x0:x1]
        m = (w > 0.0) & (t_sub > 1.0 - ALPHA_SATURATION)
        if not m.any():
            continue
        contrib = np.where(m, t_sub * w, 0.0)
        accum[y0:y1, x0:x1] += contrib[..., None] * colors[s]
        depth_sum[y0:y1, x0:x1] += contrib * np.where(m, t_star, 0.0)
        alpha_sum[y0:y1, x0:x1] += contrib
        trans[y0:y1, x0:x1] = np.where(m, t_sub * (1.0 - w), t_sub)
    color[:] = accum + trans[..., None] * bg
    np.copyto(depth, np.where(alpha_sum > 1e-8, depth_sum / np.maximum(alpha_sum, 1e-300), np.inf))


def render(scene: Scene, pose: Pose, k: Intrinsics, mode: str = "opaque") -> RgbdFrame:
    """Render the scene from a camera pose into an RGBD frame.

    ``mode`` is ``"opaque"`` (z-buffered hard silhouettes, exact depth) or
    ``"alpha"`` (soft Gaussian compositing, expected depth). An empty scene
    yields the background color everywhere and +inf depth.
    """
    if mode not in ("opaque", "alpha"):
        raise ValueError(f"unknown render mode {mode!r}")
    h, w = k.height, k.width
    bg = np.asarray(scene.background_color, dtype=np.float64)
    color = np.tile(bg, (h, w, 1))
    depth = np.full((h, w), np.inf)
    arrays = scene.arrays()
    if len(scene.splats) > 0:
        w2c = invert(pose)
        centers_cam = arrays["centers"] @ w2c.rotation.T + w2c.translation
        rots_cam = np.einsum("ij,sjk->sik", w2c.rotation, arrays["rotations"])
        if mode == "opaque":
            _render_opaque(arrays, centers_cam, rots_cam, k, color, depth, bg)
        else:
            _render_alpha(arrays, centers_cam, rots_cam, k, color, depth, bg)
    return RgbdFrame(color=color, depth=depth, pose=pose, intrinsics=k)


def generate_test_scene(n_splats: int, bounding_radius: float, seed: int) -> Scene:
    """Deterministic random scene with all splat centers inside the radius."""
    if n_splats < 0:
        raise ValueError("n_splats must be >= 0")
    rng = np.random.default_rng(seed)
    splats = []
    if n_splats > 0:
        dirs = rng.normal(size=(n_splats, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = bounding_radius * np.cbrt(rng.uniform(size=n_splats))
        centers = dirs * radii[:, None]
        scales = rng.uniform(0.04, 0.18, size=(n_splats, 3)) * bounding_radius
        quats = rng.normal(size=(n_splats, 4))
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
        colors = rng.uniform(0.05, 0.95, size=(n_splats, 3))
        opacities = rng.uniform(0.6, 1.0, size=n_splats)
        for i in range(n_splats):
            splats.append(Splat(center=centers[i], scale=scales[i],
                                orientation_wxyz=quats[i], color=colors[i],
                                opacity=float(opacities[i])))
    return Scene(splats=splats, background_color=(0.0, 0.0, 0.0))


def make_orbit_trajectory(radius: float, count: int, elevation_deg: float) -> list[Pose]:
    """Evenly spaced cameras on a circle, each looking at the origin."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if count < 1:
        raise ValueError("count must be >= 1")
    el = math.radians(elevation_deg)
    poses = []
    for i in range(count):
        az = 2.0 * math.pi * i / count
        pos = radius * np.array([math.cos(el) * math.cos(az),
                                 math.cos(el) * math.sin(az),
                                 math.sin(el)])
        poses.append(look_at(pos, (0.0, 0.0, 0.0)))
    return poses
