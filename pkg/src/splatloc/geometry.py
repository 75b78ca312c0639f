"""SE(3) poses, pinhole projection, and the twist parameterization.

Conventions used consistently across the package:

* Camera frame: +x right, +y down, +z forward along the optical axis.
* Pixels: origin at the top-left image corner, pixel centers at integer
  coordinates, u grows with +x (width), v with +y (height).
* ``Pose`` is the camera-to-world transform, ``p_world = R @ p_cam + t``.
  The world-to-camera transform is obtained with :func:`invert`; the
  camera center in world coordinates is ``pose.translation``.
* Twists are 6-vectors ``(wx, wy, wz, vx, vy, vz)`` with the rotation
  part first, in radians and scene units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Minimum camera-frame depth for a projectable point.
EPS_Z = 1e-9


class BehindCamera(ValueError):
    """Point at or behind the camera plane; projection is undefined."""


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform (rotation matrix + translation)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {r.shape}")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"rotation is not orthonormal (max deviation {err:.3e})")
        if np.linalg.det(r) <= 0.0:
            raise ValueError("rotation must have determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera model: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "Intrinsics":
        """Square-pixel intrinsics from a horizontal field of view."""
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                   width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


def project(k: Intrinsics, p_cam) -> tuple[float, float]:
    """Project a camera-frame point to pixel coordinates.

    No clipping to the image bounds is performed; callers clip.
    Raises :class:`BehindCamera` when the point's depth is <= EPS_Z.
    """
    x, y, z = np.asarray(p_cam, dtype=np.float64).reshape(3)
    if z <= EPS_Z:
        raise BehindCamera(f"point depth {z:.3e} <= {EPS_Z:.0e}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def project_points(k: Intrinsics, pts_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) camera-frame points.

    Returns (uv, in_front) where rows of ``uv`` with ``~in_front`` are zero.
    """
    pts = np.asarray(pts_cam, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    in_front = z > EPS_Z
    uv = np.zeros((pts.shape[0], 2))
    zs = np.where(in_front, z, 1.0)
    uv[:, 0] = np.where(in_front, k.fx * pts[:, 0] / zs + k.cx, 0.0)
    uv[:, 1] = np.where(in_front, k.fy * pts[:, 1] / zs + k.cy, 0.0)
    return uv, in_front


def backproject(k: Intrinsics, pixel, depth: float) -> np.ndarray:
    """Lift a pixel with known depth to a camera-frame 3D point."""
    if not np.isfinite(depth) or depth <= 0:
        raise ValueError(f"depth must be finite and > 0, got {depth}")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])


def backproject_pixels(k: Intrinsics, uv: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """Vectorized :func:`backproject` for (N, 2) pixels and (N,) depths."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(depths, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("all depths must be finite and > 0")
    out = np.empty((uv.shape[0], 3))
    out[:, 0] = (uv[:, 0] - k.cx) / k.fx * d
    out[:, 1] = (uv[:, 1] - k.cy) / k.fy * d
    out[:, 2] = d
    return out


def _pose_unchecked(rotation: np.ndarray, translation: np.ndarray) -> Pose:
    # Fast path for group operations: compose/invert/exp preserve the
    # orthonormality invariant up to float roundoff, so re-validating on
    # every internal construction is pure overhead.
    p = object.__new__(Pose)
    if rotation.flags.writeable:
        rotation.flags.writeable = False
    if translation.flags.writeable:
        translation.flags.writeable = False
    object.__setattr__(p, "rotation", rotation)
    object.__setattr__(p, "translation", translation)
    return p


def transform_point(pose: Pose, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(3)
    return pose.rotation @ p + pose.translation


def transform_points(pose: Pose, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    return pts @ pose.rotation.T + pose.translation


def compose(a: Pose, b: Pose) -> Pose:
    """Composition a * b: apply b first, then a."""
    return _pose_unchecked(a.rotation @ b.rotation,
                           a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return _pose_unchecked(rt, -(rt @ p.translation))


_EYE3 = np.eye(3)
_EYE3.flags.writeable = False


def _skew(w: np.ndarray) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy],
                     [wz, 0.0, -wx],
                     [-wy, wx, 0.0]])


def _so3_exp(omega: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(omega @ omega))
    w = _skew(omega)
    if theta < 1e-8:
        return _EYE3 + w + 0.5 * (w @ w)
    return (_EYE3
            + (math.sin(theta) / theta) * w
            + ((1.0 - math.cos(theta)) / theta**2) * (w @ w))


def matrix_to_quat_wxyz(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0.

    Uses the largest-component branch so the conversion is stable for all
    rotations, including angles near pi.
    """
    r = np.asarray(r, dtype=np.float64)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    q = q / np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_wxyz_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _so3_log(r: np.ndarray) -> np.ndarray:
    # atan2-based log through the quaternion form; accurate for all angles
    # below pi and well-defined in the angle = pi limit.
    q = matrix_to_quat_wxyz(r)
    w, vec = q[0], q[1:]
    n = np.linalg.norm(vec)
    if n < 1e-12:
        return 2.0 * vec / w
    return vec * (2.0 * math.atan2(n, w) / n)


def _v_matrix(omega: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(omega @ omega))
    w = _skew(omega)
    w2 = w @ w
    if theta < 1e-3:
        t2 = theta * theta
        a = 0.5 - t2 / 24.0
        b = 1.0 / 6.0 - t2 / 120.0
    else:
        a = (1.0 - math.cos(theta)) / theta**2
        b = (theta - math.sin(theta)) / theta**3
    return _EYE3 + a * w + b * w2


def _v_inverse(omega: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(omega @ omega))
    w = _skew(omega)
    w2 = w @ w
    if theta < 1e-3:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0
    else:
        half = 0.5 * theta
        c = 1.0 / theta**2 - math.cos(half) / (2.0 * theta * math.sin(half))
    return _EYE3 - 0.5 * w + c * w2


def exp_se3(xi) -> Pose:
    """Closed-form exponential of a twist (Rodrigues rotation + V matrix)."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    omega, v = xi[:3], xi[3:]
    return _pose_unchecked(_so3_exp(omega), _v_matrix(omega) @ v)


def log_se3(pose: Pose) -> np.ndarray:
    """Principal logarithm of a pose; rotation angle must be below pi.

    At exactly pi the quaternion-based branch returns one of the two
    antipodal axis choices, deterministically.
    """
    omega = _so3_log(pose.rotation)
    v = _v_inverse(omega) @ pose.translation
    return np.concatenate([omega, v])


def rotation_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    return _so3_exp(axis / n * angle_rad)


def rotation_angle_between(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees.

    The arccos argument is clamped to [-1, 1] to absorb floating-point
    drift in the trace.
    """
    c = (np.trace(np.asarray(ra).T @ np.asarray(rb)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose at ``position`` with +z aimed at ``target``."""
    position = np.asarray(position, dtype=np.float64).reshape(3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    fwd = target - position
    n = np.linalg.norm(fwd)
    if n == 0.0:
        raise ValueError("look_at target coincides with the camera position")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64).reshape(3)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-12:
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    return Pose(np.column_stack([right, down, fwd]), position)
