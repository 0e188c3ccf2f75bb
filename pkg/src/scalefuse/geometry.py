"""Camera, pose, depth-map and mesh types plus pinhole projection.

Conventions: poses map camera coordinates to world coordinates; the camera
looks down +z with x right and y down; depth means z-depth along the optical
axis; pixel (u, v) = (column, row) with integer coordinates at pixel centres.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self):
        return (self.height, self.width)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world transform ``x_world = R @ x_cam + t``."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation)
        t = _frozen(self.translation)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw):
        q = np.asarray(quat_xyzw, dtype=np.float64)
        return cls(Rotation.from_quat(q / np.linalg.norm(q)).as_matrix(), translation)

    def quaternion(self):
        """Unit quaternion ``(qx, qy, qz, qw)`` with ``qw >= 0``."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def center(self):
        return self.translation

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self):
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def to_world(self, points_cam):
        return np.asarray(points_cam, dtype=np.float64) @ self.rotation.T + self.translation

    def to_camera(self, points_world):
        return (np.asarray(points_world, dtype=np.float64) - self.translation) @ self.rotation

    def allclose(self, other, atol=1e-9):
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )


@dataclass(frozen=True)
class DepthValidityRange:
    epsilon: float = 0.05
    d_max: float = 20.0

    def __post_init__(self):
        if not (0 < self.epsilon < self.d_max):
            raise ValueError("need 0 < epsilon < d_max")

    def mask(self, values):
        v = np.asarray(values)
        with np.errstate(invalid="ignore"):
            return np.isfinite(v) & (v >= self.epsilon) & (v <= self.d_max)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Row-major ``(height, width)`` z-depth grid in metres; ``<= 0`` marks invalid."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError("depth map must be 2-D")
        object.__setattr__(self, "values", v)

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width)))

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def valid_mask(self, validity=None):
        if validity is not None:
            return validity.mask(self.values)
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.values) & (self.values > 0)

    def scaled(self, s):
        """Multiply valid pixels by ``s``; invalid pixels are copied unchanged."""
        valid = self.valid_mask()
        return DepthMap(np.where(valid, self.values * s, self.values))

    def sample_nearest(self, pixels):
        """Nearest-pixel lookup; out-of-image samples return 0 (invalid)."""
        px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        cols = np.floor(px[:, 0] + 0.5).astype(np.int64)
        rows = np.floor(px[:, 1] + 0.5).astype(np.int64)
        inside = (cols >= 0) & (cols < self.width) & (rows >= 0) & (rows < self.height)
        out = np.zeros(len(px))
        out[inside] = self.values[rows[inside], cols[inside]]
        return out


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if len(f) and np.any((f[:, 0] == f[:, 1]) & (f[:, 1] == f[:, 2])):
            raise ValueError("degenerate face")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self):
        return len(self.faces) == 0

    def triangles(self):
        """``(F, 3, 3)`` array of triangle corner positions."""
        return self.vertices[self.faces]

    def face_areas(self):
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


class Projection(NamedTuple):
    pixel: np.ndarray
    depth: float
    in_front: bool


def project(point, pose, k):
    """Project a world point; ``in_front`` is False when camera-frame z <= 0."""
    pc = pose.to_camera(np.asarray(point, dtype=np.float64))
    z = float(pc[2])
    if z <= 0:
        return Projection(np.array([np.nan, np.nan]), z, False)
    pixel = np.array([k.fx * pc[0] / z + k.cx, k.fy * pc[1] / z + k.cy])
    return Projection(pixel, z, True)


def project_points(points, pose, k):
    """Vectorised projection. Returns ``(pixels (N,2), z (N,))``; pixels are NaN where z <= 0."""
    pc = pose.to_camera(np.atleast_2d(points))
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z > 0, k.fx * pc[:, 0] / z + k.cx, np.nan)
        v = np.where(z > 0, k.fy * pc[:, 1] / z + k.cy, np.nan)
    return np.stack([u, v], axis=1), z


def pixel_rays(pixels, k):
    """Camera-frame ray directions with unit z for the given pixels."""
    px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    return np.stack([(px[:, 0] - k.cx) / k.fx, (px[:, 1] - k.cy) / k.fy, np.ones(len(px))], axis=1)


def backproject(pixel, depth, pose, k):
    if not depth > 0:
        raise ValueError("depth must be positive")
    ray = pixel_rays(pixel, k)[0]
    return pose.to_world(ray * depth)


def backproject_depth(depth, pose, k, validity=None):
    """World points for every valid pixel of ``depth`` (row-major order)."""
    mask = depth.valid_mask(validity)
    rows, cols = np.nonzero(mask)
    pixels = np.stack([cols, rows], axis=1).astype(np.float64)
    return pose.to_world(pixel_rays(pixels, k) * depth.values[rows, cols][:, None])


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera-to-world pose at ``eye`` looking toward ``target`` (y axis points down)."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    n = np.linalg.norm(x)
    if n < 1e-12:
        raise ValueError("viewing direction parallel to up vector")
    x /= n
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def rotation_angle_deg(r):
    c = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(c)))
