"""Rigid-body algebra, pinhole camera model and image pyramids.

Twists are plain length-6 arrays ``(rho, phi)``: translational part first,
rotational part (axis-angle, radians) second.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial.transform import Rotation

from .edges import EdgeMap, DistanceField, distance_transform
from .errors import BehindCamera, InvalidDepth, NearPiRotation, TooManyLevels

Z_MIN = 1e-6
MIN_LEVEL_SIZE = 32
_SMALL_ANGLE = 1e-8
_SERIES_ANGLE = 0.1


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus the raw-depth scale of the sensor."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = 5000.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")

    @property
    def shape(self):
        return (self.height, self.width)

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def downsampled(self):
        """Intrinsics for a 2x2-mean-pooled image (pixel-centre convention)."""
        return CameraIntrinsics(
            fx=self.fx / 2.0,
            fy=self.fy / 2.0,
            cx=(self.cx + 0.5) / 2.0 - 0.5,
            cy=(self.cy + 0.5) / 2.0 - 0.5,
            width=(self.width + 1) // 2,
            height=(self.height + 1) // 2,
            depth_scale=self.depth_scale,
        )


def hat(v):
    """3-vector to its skew-symmetric cross-product matrix."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R @ x + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw):
        q = np.asarray(quat_xyzw, dtype=float)
        n = np.linalg.norm(q)
        if not n > 0:
            raise ValueError("zero quaternion")
        return cls(Rotation.from_quat(q / n).as_matrix(), translation)

    def quaternion(self):
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(self.rotation @ other.rotation,
                        self.rotation @ other.translation + self.translation)
        return NotImplemented

    def apply(self, points):
        """Transform an ``(N, 3)`` array (or a single 3-vector)."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotation_angle(self):
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return math.acos(min(1.0, max(-1.0, c)))

    def is_valid(self, tol=1e-9):
        R = self.rotation
        return (np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0)
                and abs(np.linalg.det(R) - 1.0) < tol
                and bool(np.all(np.isfinite(self.translation))))

    def distance(self, other):
        """Max-abs difference between the two 4x4 matrices."""
        return float(np.max(np.abs(self.matrix() - other.matrix())))

    def __repr__(self):
        return f"Pose(t={np.round(self.translation, 6).tolist()}, q={np.round(self.quaternion(), 6).tolist()})"


def _so3_coeffs(theta):
    """(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) with small-angle series."""
    t2 = theta * theta
    if theta < _SMALL_ANGLE:
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    a = math.sin(theta) / theta
    h = math.sin(0.5 * theta) / (0.5 * theta)
    b = 0.5 * h * h
    if theta < _SERIES_ANGLE:
        # t - sin t cancels badly for small t; the series is exact to ~t^8
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 ** 3 / 362880.0 + t2 ** 4 / 39916800.0
    else:
        c = (theta - math.sin(theta)) / theta ** 3
    return a, b, c


def so3_exp(phi):
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    a, b, _ = _so3_coeffs(theta)
    K = hat(phi)
    return np.eye(3) + a * K + b * (K @ K)


def se3_exp(xi):
    xi = np.asarray(xi, dtype=float).reshape(6)
    if not np.all(np.isfinite(xi)):
        raise ValueError("twist must be finite")
    rho, phi = xi[:3], xi[3:]
    theta = float(np.linalg.norm(phi))
    a, b, c = _so3_coeffs(theta)
    K = hat(phi)
    K2 = K @ K
    R = np.eye(3) + a * K + b * K2
    V = np.eye(3) + b * K + c * K2
    return Pose(R, V @ rho)


def so3_log(R, max_angle=math.pi - 1e-6):
    R = np.asarray(R, dtype=float)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(s, c)
    if theta >= max_angle:
        raise NearPiRotation(f"rotation angle {theta:.9f} too close to pi")
    if theta < _SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0)
    return w * (theta / s)


def se3_log(T):
    phi = so3_log(T.rotation)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    t2 = theta * theta
    if theta < _SERIES_ANGLE:
        d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 ** 3 / 1209600.0 + t2 ** 4 / 47900160.0
    else:
        half = 0.5 * theta
        d = (1.0 - half * math.cos(half) / math.sin(half)) / t2
    V_inv = np.eye(3) - 0.5 * K + d * (K @ K)
    return np.concatenate([V_inv @ T.translation, phi])


def project(p, K):
    """Pinhole projection of camera-frame point(s).

    Accepts a 3-vector or an ``(N, 3)`` array; raises ``BehindCamera`` if any
    depth is at or below ``Z_MIN``.
    """
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(z <= Z_MIN):
        raise BehindCamera("point at or behind the camera plane")
    u = K.fx * p[..., 0] / z + K.cx
    v = K.fy * p[..., 1] / z + K.cy
    if p.ndim == 1:
        return float(u), float(v)
    return np.stack([u, v], axis=-1)


def backproject(u, v, d, K):
    """Lift pixel(s) with metric depth to camera-frame 3D point(s)."""
    u, v, d = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float),
                                  np.asarray(d, dtype=float))
    if np.any(~(d > 0)):
        raise InvalidDepth("depth must be positive")
    x = (u - K.cx) * d / K.fx
    y = (v - K.cy) * d / K.fy
    return np.stack([x, y, d], axis=-1)


@dataclass(frozen=True, eq=False)
class PyramidLevel:
    level: int
    intensity: np.ndarray
    depth: np.ndarray
    intrinsics: CameraIntrinsics
    edges: EdgeMap
    field: DistanceField


def _pad_even(img, fill):
    h, w = img.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw)), constant_values=fill)
    return img


def downsample_mean(img):
    """2x2 mean pooling; an odd trailing row/column averages what exists."""
    h, w = img.shape
    vals = _pad_even(img.astype(float), 0.0)
    cnt = _pad_even(np.ones((h, w)), 0.0)
    s = vals.reshape(vals.shape[0] // 2, 2, vals.shape[1] // 2, 2).sum(axis=(1, 3))
    n = cnt.reshape(cnt.shape[0] // 2, 2, cnt.shape[1] // 2, 2).sum(axis=(1, 3))
    return s / n


def downsample_depth(depth):
    """2x2 pooling averaging only valid (non-zero) depths; 0 if none valid."""
    d = _pad_even(depth.astype(float), 0.0)
    valid = d > 0
    blocks = (d.shape[0] // 2, 2, d.shape[1] // 2, 2)
    s = d.reshape(blocks).sum(axis=(1, 3))
    n = valid.reshape(blocks).sum(axis=(1, 3))
    out = np.zeros_like(s)
    np.divide(s, n, out=out, where=n > 0)
    return out


def downsample_mask(mask):
    """2x2 OR-pooling."""
    m = _pad_even(mask, False)
    return m.reshape(m.shape[0] // 2, 2, m.shape[1] // 2, 2).any(axis=(1, 3))


def pyramid_shapes(height, width, levels):
    shapes = [(height, width)]
    for _ in range(levels - 1):
        h, w = shapes[-1]
        shapes.append(((h + 1) // 2, (w + 1) // 2))
    return shapes


def build_pyramid(frame, edge_map, levels, intrinsics=None):
    """Coarse-to-fine pyramid of intensity, depth, edges and distance field.

    Level 0 is the input resolution. Edges are OR-pooled from the level-0
    mask and the distance field is recomputed at every level.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    K = intrinsics if intrinsics is not None else frame.intrinsics
    for h, w in pyramid_shapes(*frame.intensity.shape, levels):
        if h < MIN_LEVEL_SIZE or w < MIN_LEVEL_SIZE:
            raise TooManyLevels(f"{levels} levels would shrink {frame.intensity.shape} below "
                                f"{MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}")
    intensity, depth, mask = frame.intensity, frame.depth, edge_map.mask
    out = []
    for lvl in range(levels):
        if lvl > 0:
            intensity = downsample_mean(intensity)
            depth = downsample_depth(depth)
            mask = downsample_mask(mask)
            K = K.downsampled()
            em = EdgeMap(mask, edge_map.source)
        else:
            em = edge_map
        out.append(PyramidLevel(lvl, intensity, depth, K, em, distance_transform(em)))
    return out
