"""Keyframe selection and overlapping submap partition."""
import math
from dataclasses import dataclass

import numpy as np

from .geometry import rotation_angle_deg


@dataclass(frozen=True)
class Keyframe:
    frame_id: int
    pose: object


@dataclass(frozen=True)
class KeyframeSequence:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ValueError("keyframe sequence must be non-empty")
        ids = [e.frame_id for e in self.entries]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("frame ids must be strictly increasing")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def frame_ids(self):
        return [e.frame_id for e in self.entries]

    @property
    def poses(self):
        return [e.pose for e in self.entries]


@dataclass(frozen=True)
class SubmapConfig:
    n: int = 8
    o: int = 4

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("submap size n must be >= 2")
        if not (0 <= self.o < self.n):
            raise ValueError("overlap o must satisfy 0 <= o < n")


@dataclass(frozen=True)
class Submap:
    """Window of keyframe positions ``start..end`` (0-based, inclusive)."""

    index: int
    start: int
    end: int

    @property
    def positions(self):
        return range(self.start, self.end + 1)

    def __len__(self):
        return self.end - self.start + 1

    def __contains__(self, position):
        return self.start <= position <= self.end


def select_keyframes(poses, t_max=0.1, r_max=15.0):
    """Keep frame 0, then every frame that moved more than ``t_max`` metres or
    rotated more than ``r_max`` degrees relative to the last kept frame."""
    poses = list(poses)
    if not poses:
        raise ValueError("need at least one pose")
    if not (t_max > 0 and r_max > 0):
        raise ValueError("thresholds must be positive")
    kept = [Keyframe(0, poses[0])]
    for i, pose in enumerate(poses[1:], start=1):
        last = kept[-1].pose
        dt = float(np.linalg.norm(pose.translation - last.translation))
        dr = rotation_angle_deg(last.rotation.T @ pose.rotation)
        if dt > t_max or dr > r_max:
            kept.append(Keyframe(i, pose))
    return KeyframeSequence(kept)


def submap_count(p, n, o):
    return 1 if p <= n else math.ceil((p - n) / (n - o)) + 1


def partition_submaps(seq_or_count, cfg=SubmapConfig()):
    """Split ``P`` keyframes into windows of ``n`` sharing ``o`` positions.

    Window m (0-based) starts at ``m * (n - o)`` and is clipped to the sequence
    end. A window that would add no new position is dropped.
    """
    p = seq_or_count if isinstance(seq_or_count, int) else len(seq_or_count)
    if p < 1:
        raise ValueError("need at least one keyframe")
    if cfg.o >= cfg.n:
        raise ValueError("overlap must be smaller than the window")
    step = cfg.n - cfg.o
    submaps = []
    start = 0
    while True:
        end = min(start + cfg.n, p) - 1
        submaps.append(Submap(len(submaps), start, end))
        if end == p - 1:
            break
        start += step
    return submaps


def overlap_positions(a, b):
    return list(range(max(a.start, b.start), min(a.end, b.end) + 1))
