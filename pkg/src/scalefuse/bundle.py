"""Scene bundles: the in-memory unit of work and its directory layout.

A bundle directory holds::

    intrinsics.txt          fx fy cx cy / width height
    poses.txt               TUM trajectory, one line per frame
    depth/NNNNNN.dpt        prediction shared by every submap holding frame N
    depth/NNNNNN_sMMM.dpt   prediction of frame N made within submap M
    correspondences.txt     optional
    gt_mesh.ply             optional
    gt_depth/NNNNNN.dpt     optional ground-truth depths
    injected_scales.txt     optional, written by the generator: ``m factor``

Depth files may be ``.png`` (16-bit millimetres) instead of ``.dpt``.
"""
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .geometry import Intrinsics, TriangleMesh

_DEPTH_NAME = re.compile(r"^(\d+)(?:_s(\d+))?\.(dpt|png)$", re.IGNORECASE)


@dataclass
class SceneBundle:
    """Everything the pipeline consumes for one sequence.

    ``predictions`` maps ``(frame, submap)`` to a depth map; a ``submap`` of
    None means the prediction is shared by every submap containing the frame.
    """

    intrinsics: Intrinsics
    poses: list
    predictions: dict
    correspondences: list = field(default_factory=list)
    timestamps: list = None
    gt_mesh: TriangleMesh = None
    gt_depths: list = None

    def __post_init__(self):
        if self.timestamps is None:
            self.timestamps = [float(i) for i in range(len(self.poses))]
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamp and pose counts differ")
        frames = {f for f, _ in self.predictions}
        if frames != set(range(len(self.poses))):
            raise ValueError("every frame needs at least one depth prediction")
        if self.gt_depths is not None and len(self.gt_depths) != len(self.poses):
            raise ValueError("ground-truth depth count differs from pose count")
        for d in self.predictions.values():
            if d.shape != self.intrinsics.shape:
                raise ValueError("depth map size does not match the intrinsics")

    def prediction(self, frame, submap):
        d = self.predictions.get((frame, submap), self.predictions.get((frame, None)))
        if d is None:
            raise io.InputError(f"no depth prediction for frame {frame} in submap {submap}")
        return d


def depth_name(frame, submap=None, suffix=io.RAW_DEPTH_SUFFIX):
    return f"{frame:06d}{'' if submap is None else f'_s{submap:03d}'}{suffix}"


def write_depth_dir(directory, depths, suffix=io.RAW_DEPTH_SUFFIX, frame_ids=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame_ids = range(len(depths)) if frame_ids is None else frame_ids
    for f, d in zip(frame_ids, depths):
        io.write_depth(directory / depth_name(f, suffix=suffix), d)


def read_depth_dir(directory):
    """Depth maps keyed by ``(frame, submap-or-None)``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise io.InputError(f"{directory} is not a directory")
    out = {}
    for p in sorted(directory.iterdir()):
        m = _DEPTH_NAME.match(p.name)
        if m:
            out[(int(m.group(1)), None if m.group(2) is None else int(m.group(2)))] = io.read_depth(p)
    return out


def read_frame_depths(directory, count=None):
    """Per-frame depth list from a directory of ``NNNNNN.ext`` files."""
    maps = {f: d for (f, s), d in read_depth_dir(directory).items() if s is None}
    if not maps:
        raise io.InputError(f"{directory}: no depth maps")
    frames = sorted(maps)
    if count is not None and frames != list(range(count)):
        raise io.InputError(f"{directory}: expected frames 0..{count - 1}")
    return [maps[f] for f in frames]


def write_bundle(directory, bundle, suffix=io.RAW_DEPTH_SUFFIX, factors=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    io.write_intrinsics(directory / "intrinsics.txt", bundle.intrinsics)
    io.write_tum(directory / "poses.txt", bundle.poses, bundle.timestamps)
    ddir = directory / "depth"
    ddir.mkdir(exist_ok=True)
    for (f, s), d in sorted(bundle.predictions.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1])):
        io.write_depth(ddir / depth_name(f, s, suffix), d)
    if bundle.correspondences:
        io.write_correspondences(directory / "correspondences.txt", bundle.correspondences)
    if bundle.gt_mesh is not None:
        io.write_ply(directory / "gt_mesh.ply", bundle.gt_mesh)
    if bundle.gt_depths is not None:
        write_depth_dir(directory / "gt_depth", bundle.gt_depths, suffix)
    if factors is not None:
        with open(directory / "injected_scales.txt", "w") as fh:
            for m, c in enumerate(factors):
                fh.write(f"{m} {c:.17g}\n")


def read_bundle(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise io.InputError(f"bundle directory {directory} not found")
    k = io.read_intrinsics(directory / "intrinsics.txt")
    stamps, poses = io.read_tum(directory / "poses.txt")
    predictions = read_depth_dir(directory / "depth")
    corr_path = directory / "correspondences.txt"
    corrs = io.read_correspondences(corr_path, k) if corr_path.exists() else []
    for c in corrs:
        if not (0 <= c.frame_a < len(poses) and 0 <= c.frame_b < len(poses)):
            raise io.InputError(f"{corr_path}: frame index out of range")
    mesh_path = directory / "gt_mesh.ply"
    gt_mesh = io.read_ply(mesh_path) if mesh_path.exists() else None
    gt_dir = directory / "gt_depth"
    gt_depths = read_frame_depths(gt_dir, len(poses)) if gt_dir.is_dir() else None
    try:
        return SceneBundle(k, poses, predictions, corrs, stamps, gt_mesh, gt_depths)
    except ValueError as exc:
        raise io.InputError(f"{directory}: {exc}") from exc


def read_injected_scales(directory):
    path = Path(directory) / "injected_scales.txt"
    rows = [line.split() for _, line in io.data_lines(path)]
    return np.array([float(r[1]) for r in sorted(rows, key=lambda r: int(r[0]))])
