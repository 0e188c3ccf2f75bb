"""Dense TSDF volume with running-average fusion and mesh extraction."""
import numpy as np

from .geometry import TriangleMesh, backproject_depth
from .kernels.integrate import integrate_kernel
from .kernels.marching_cubes import marching_cubes

W_CAP = 128.0


class EmptyVolume(RuntimeError):
    pass


class TsdfVolume:
    """Voxel grid of truncated signed distances normalised to [-1, 1].

    Voxel ``(i, j, k)`` is the grid point ``origin + voxel_size * (i, j, k)``.
    Positive values lie in front of the observed surface (free space).
    """

    def __init__(self, origin, voxel_size, dims, truncation=None, w_cap=W_CAP):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        truncation = 3.0 * voxel_size if truncation is None else float(truncation)
        if truncation < voxel_size:
            raise ValueError("truncation must be at least one voxel")
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("dims must be three positive integers")
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.voxel_size = float(voxel_size)
        self.truncation = truncation
        self.w_cap = float(w_cap)
        self.tsdf = np.ones(dims, dtype=np.float64)
        self.weight = np.zeros(dims, dtype=np.float64)

    @property
    def dims(self):
        return self.tsdf.shape

    @classmethod
    def from_bounds(cls, lo, hi, voxel_size, truncation=None, **kw):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        dims = np.floor((hi - lo) / voxel_size).astype(int) + 2
        return cls(lo, voxel_size, dims, truncation, **kw)

    def grid_points(self):
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + self.voxel_size * idx

    @property
    def observed(self):
        return self.weight > 0

    def integrate(self, depth, pose, k, validity, backend=None):
        """Fuse one z-depth map; returns the number of voxels updated."""
        if depth.shape != k.shape:
            raise ValueError(f"depth map {depth.shape} does not match intrinsics {k.shape}")
        return integrate_kernel(
            self.tsdf, self.weight, self.origin, self.voxel_size, pose, k, depth.values,
            validity.epsilon, validity.d_max, self.truncation, self.w_cap, backend,
        )

    def extract_mesh(self, backend=None):
        vertices, faces = marching_cubes(self.tsdf, self.weight, self.origin, self.voxel_size, backend)
        return TriangleMesh(vertices, faces)

    def copy(self):
        other = TsdfVolume(self.origin, self.voxel_size, self.dims, self.truncation, self.w_cap)
        other.tsdf = self.tsdf.copy()
        other.weight = self.weight.copy()
        return other


def fusion_bounds(depths, poses, k, validity, padding):
    """Axis-aligned box around every valid back-projected sample, grown by ``padding``."""
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for depth, pose in zip(depths, poses):
        pts = backproject_depth(depth, pose, k, validity)
        if len(pts):
            lo = np.minimum(lo, pts.min(axis=0))
            hi = np.maximum(hi, pts.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise EmptyVolume("no valid depth sample to fuse")
    return lo - padding, hi + padding


def fuse(depths, poses, k, validity, voxel_size, truncation=None, backend=None):
    """Build a volume sized to the data and integrate every frame."""
    truncation = 3.0 * voxel_size if truncation is None else truncation
    lo, hi = fusion_bounds(depths, poses, k, validity, truncation)
    vol = TsdfVolume.from_bounds(lo, hi, voxel_size, truncation)
    for depth, pose in zip(depths, poses):
        vol.integrate(depth, pose, k, validity, backend)
    return vol
