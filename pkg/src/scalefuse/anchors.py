"""Two-view triangulation of sparse anchors and the per-submap initial scale."""
import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ACCEPTED, DEGENERATE, CHIRALITY, REPROJECTION = 0, 1, 2, 3
PARALLEL_TOL = 1e-12


class TriangulationReject(Exception):
    reason = "rejected"


class DegenerateBaseline(TriangulationReject):
    reason = "DegenerateBaseline"


class ChiralityReject(TriangulationReject):
    reason = "ChiralityReject"


class ReprojectionReject(TriangulationReject):
    reason = "ReprojectionReject"


_REJECTS = {DEGENERATE: DegenerateBaseline, CHIRALITY: ChiralityReject, REPROJECTION: ReprojectionReject}


class NoValidAnchors(Exception):
    pass


def lower_median(values):
    """Order statistic at index ``(n - 1) // 2`` of the sorted values."""
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("median of an empty set")
    k = (a.size - 1) // 2
    return float(np.partition(a, k)[k])


@dataclass(frozen=True)
class Correspondence:
    frame_a: int
    frame_b: int
    pixel_a: tuple
    pixel_b: tuple

    def __post_init__(self):
        if self.frame_a == self.frame_b:
            raise ValueError("correspondence must link two different frames")
        object.__setattr__(self, "pixel_a", tuple(float(c) for c in self.pixel_a))
        object.__setattr__(self, "pixel_b", tuple(float(c) for c in self.pixel_b))

    def in_bounds(self, k):
        return all(0 <= p[0] <= k.width - 1 and 0 <= p[1] <= k.height - 1 for p in (self.pixel_a, self.pixel_b))


@dataclass(frozen=True)
class TriangulatedAnchor:
    frame: int
    pixel: tuple
    depth_triangulated: float
    reprojection_error: float


@dataclass
class TriangulationBatch:
    points: np.ndarray
    status: np.ndarray
    depth_a: np.ndarray
    depth_b: np.ndarray
    error_a: np.ndarray
    error_b: np.ndarray

    @property
    def accepted(self):
        return self.status == ACCEPTED


def _projection_rows(pose, origin):
    # world->camera for points expressed relative to ``origin``
    rt = pose.rotation.T
    return np.hstack([rt, (rt @ (origin - pose.translation))[:, None]])


def _reproject(points, pose, k):
    pc = pose.to_camera(points)
    z = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy], axis=1)
    return uv, z


def triangulate_points(pixels_a, pixels_b, pose_a, pose_b, k, max_reproj=2.0):
    """Linear (DLT) triangulation of N matches between two posed views.

    Rows are built in normalised image coordinates with the world origin moved
    to the mid-baseline point, then the homogeneous 4x4 system is solved by SVD.
    Points are checked for parallel rays, positive depth in both views and a
    reprojection error below ``max_reproj`` pixels in both views, in that order.
    """
    pa = np.atleast_2d(np.asarray(pixels_a, dtype=np.float64))
    pb = np.atleast_2d(np.asarray(pixels_b, dtype=np.float64))
    n = len(pa)
    kinv = np.linalg.inv(k.matrix)
    xa = np.hstack([pa, np.ones((n, 1))]) @ kinv.T
    xb = np.hstack([pb, np.ones((n, 1))]) @ kinv.T

    origin = 0.5 * (pose_a.translation + pose_b.translation)
    ma = _projection_rows(pose_a, origin)
    mb = _projection_rows(pose_b, origin)
    a = np.empty((n, 4, 4))
    a[:, 0] = xa[:, :1] * ma[2] - ma[0]
    a[:, 1] = xa[:, 1:2] * ma[2] - ma[1]
    a[:, 2] = xb[:, :1] * mb[2] - mb[0]
    a[:, 3] = xb[:, 1:2] * mb[2] - mb[1]
    # row scaling leaves the null vector unchanged but evens out conditioning
    a /= np.linalg.norm(a, axis=2, keepdims=True)
    _, _, vt = np.linalg.svd(a)
    h = vt[:, -1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        points = h[:, :3] / h[:, 3:4] + origin

    ray_a = xa @ pose_a.rotation.T
    ray_b = xb @ pose_b.rotation.T
    sin_angle = np.linalg.norm(np.cross(ray_a, ray_b), axis=1) / (
        np.linalg.norm(ray_a, axis=1) * np.linalg.norm(ray_b, axis=1)
    )
    baseline = np.linalg.norm(pose_a.translation - pose_b.translation)
    degenerate = (sin_angle < PARALLEL_TOL) | (baseline == 0.0) | ~np.all(np.isfinite(points), axis=1)

    uva, za = _reproject(points, pose_a, k)
    uvb, zb = _reproject(points, pose_b, k)
    err_a = np.linalg.norm(uva - pa, axis=1)
    err_b = np.linalg.norm(uvb - pb, axis=1)

    status = np.full(n, ACCEPTED, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        bad_reproj = ~((err_a < max_reproj) & (err_b < max_reproj))
        behind = ~((za > 0) & (zb > 0))
    status[bad_reproj] = REPROJECTION
    status[behind] = CHIRALITY
    status[degenerate] = DEGENERATE
    return TriangulationBatch(points, status, za, zb, err_a, err_b)


def triangulate(corr, poses, k, max_reproj=2.0):
    """Triangulate one correspondence; returns the anchor pair for (frame_a, frame_b).

    ``poses`` is indexable by frame. Raises a ``TriangulationReject`` subclass
    naming the failed check.
    """
    res = triangulate_points(
        corr.pixel_a, corr.pixel_b, poses[corr.frame_a], poses[corr.frame_b], k, max_reproj
    )
    status = int(res.status[0])
    if status != ACCEPTED:
        raise _REJECTS[status](f"frames {corr.frame_a}-{corr.frame_b}")
    return (
        TriangulatedAnchor(corr.frame_a, corr.pixel_a, float(res.depth_a[0]), float(res.error_a[0])),
        TriangulatedAnchor(corr.frame_b, corr.pixel_b, float(res.depth_b[0]), float(res.error_b[0])),
    )


def triangulate_all(correspondences, poses, k, max_reproj=2.0):
    """Triangulate a list of correspondences grouped by frame pair.

    Returns ``(anchors, rejected)`` where ``rejected`` counts each rejection reason.
    """
    groups = defaultdict(list)
    for c in correspondences:
        groups[(c.frame_a, c.frame_b)].append(c)
    anchors = []
    rejected = {cls.reason: 0 for cls in _REJECTS.values()}
    for (fa, fb), cs in sorted(groups.items()):
        res = triangulate_points(
            [c.pixel_a for c in cs], [c.pixel_b for c in cs], poses[fa], poses[fb], k, max_reproj
        )
        for c, st, za, zb, ea, eb in zip(cs, res.status, res.depth_a, res.depth_b, res.error_a, res.error_b):
            if st != ACCEPTED:
                rejected[_REJECTS[int(st)].reason] += 1
                continue
            anchors.append(TriangulatedAnchor(fa, c.pixel_a, float(za), float(ea)))
            anchors.append(TriangulatedAnchor(fb, c.pixel_b, float(zb), float(eb)))
    return anchors, rejected


def anchor_ratios(anchors, predicted, validity=None):
    """Ratios of triangulated to predicted depth, skipping anchors on invalid predictions."""
    ratios = []
    for a in anchors:
        depth = predicted.get(a.frame) if hasattr(predicted, "get") else predicted[a.frame]
        if depth is None:
            continue
        d = depth.sample_nearest([a.pixel])[0]
        ok = validity.mask(d) if validity is not None else (np.isfinite(d) and d > 0)
        if ok:
            ratios.append(a.depth_triangulated / d)
    return np.asarray(ratios)


def initial_scale(anchors, predicted, validity=None):
    """Lower median of triangulated / predicted depth over all anchors of a submap.

    ``predicted`` maps frame -> DepthMap, sampled at the nearest pixel.
    """
    ratios = anchor_ratios(anchors, predicted, validity)
    if ratios.size == 0:
        raise NoValidAnchors("no anchor lands on a valid predicted depth")
    return lower_median(ratios)
