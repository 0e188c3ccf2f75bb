"""End-to-end stages: align -> fuse/extract -> render -> evaluate."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .anchors import ACCEPTED, NoValidAnchors, anchor_ratios, lower_median, triangulate_points
from .anchors import TriangulatedAnchor
from .geometry import DepthMap, DepthValidityRange, TriangleMesh
from .keyframes import SubmapConfig, overlap_positions, partition_submaps, select_keyframes
from .metrics import depth_metrics, mesh_metrics, sample_surface
from .render import render_depth
from .scale_graph import (
    ScaleEdge, ScaleGraphProblem, edge_relative_scale, overlap_ratios, solve_scales, apply_scales,
)
from .tsdf import EmptyVolume, fuse

log = logging.getLogger(__name__)

SAMPLE_DENSITY = 10000.0  # points per square metre (1 per cm^2)


def validity_of(cfg):
    return DepthValidityRange(cfg.epsilon, cfg.d_max)


@dataclass
class AlignResult:
    keyframes: object
    submaps: list
    aligned: list
    solution: object
    problem: object
    initial_scales: np.ndarray
    low_confidence: list = field(default_factory=list)
    anchor_counts: list = field(default_factory=list)
    rejections: dict = field(default_factory=dict)

    @property
    def frame_ids(self):
        return self.keyframes.frame_ids

    @property
    def poses(self):
        return self.keyframes.poses


def _triangulate_keyframe_matches(bundle, frame_set, cfg):
    """Triangulate every correspondence between two keyframes, grouped by frame pair.

    Returns the accepted anchors per (frame_a, frame_b) and rejection counts.
    """
    groups = {}
    for c in bundle.correspondences:
        if c.frame_a in frame_set and c.frame_b in frame_set:
            groups.setdefault((c.frame_a, c.frame_b), []).append(c)
    anchors = {}
    rejected = {"DegenerateBaseline": 0, "ChiralityReject": 0, "ReprojectionReject": 0}
    names = {1: "DegenerateBaseline", 2: "ChiralityReject", 3: "ReprojectionReject"}
    k = bundle.intrinsics
    for (fa, fb), cs in sorted(groups.items()):
        res = triangulate_points([c.pixel_a for c in cs], [c.pixel_b for c in cs],
                                 bundle.poses[fa], bundle.poses[fb], k, cfg.max_reproj)
        pair = []
        for c, st, za, zb, ea, eb in zip(cs, res.status, res.depth_a, res.depth_b, res.error_a, res.error_b):
            if st != ACCEPTED:
                rejected[names[int(st)]] += 1
                continue
            pair.append(TriangulatedAnchor(fa, c.pixel_a, float(za), float(ea)))
            pair.append(TriangulatedAnchor(fb, c.pixel_b, float(zb), float(eb)))
        anchors[(fa, fb)] = pair
    return anchors, rejected


def run_align(bundle, cfg, dump_graph_path=None):
    """Recover per-submap scales and return globally aligned keyframe depths."""
    validity = validity_of(cfg)
    kf = select_keyframes(bundle.poses, cfg.t_max, cfg.r_max)
    submaps = partition_submaps(kf, SubmapConfig(cfg.n, cfg.o))
    ids = kf.frame_ids
    pair_anchors, rejected = _triangulate_keyframe_matches(bundle, set(ids), cfg)

    def preds(sm):
        return [bundle.prediction(ids[p], sm.index) for p in sm.positions]

    initial, low_conf, counts = [], [], []
    for sm in submaps:
        frames = {ids[p] for p in sm.positions}
        anchors = [a for (fa, fb), lst in pair_anchors.items() if fa in frames and fb in frames for a in lst]
        predicted = {ids[p]: d for p, d in zip(sm.positions, preds(sm))}
        ratios = anchor_ratios(anchors, predicted, validity)
        counts.append(int(ratios.size))
        if ratios.size == 0:
            log.warning("submap %d: %s; using initial scale 1.0", sm.index,
                        NoValidAnchors.__name__)
            low_conf.append(sm.index)
            initial.append(1.0)
        else:
            initial.append(lower_median(ratios))

    pixels = bundle.intrinsics.width * bundle.intrinsics.height
    edges = []
    for a, b in zip(submaps, submaps[1:]):
        # ratios of the later submap's prediction to the earlier one estimate s_a / s_b
        ratio_sets = [overlap_ratios(bundle.prediction(ids[p], b.index), bundle.prediction(ids[p], a.index),
                                     validity) for p in overlap_positions(a, b)]
        est = edge_relative_scale(ratio_sets, pixels)
        edges.append(ScaleEdge(a.index, b.index, float(np.log(est.r)), est.weight, est.valid_count))

    problem = ScaleGraphProblem(tuple(np.log(initial)), tuple(edges), cfg.lam)
    solution = solve_scales(problem)
    aligned = apply_scales([preds(sm) for sm in submaps], submaps, solution)
    if dump_graph_path is not None:
        from .scale_graph import dump_graph

        dump_graph(dump_graph_path, problem, solution)
    return AlignResult(kf, submaps, aligned, solution, problem, np.asarray(initial), low_conf, counts, rejected)


def run_fuse_extract(depths, poses, k, cfg, backend=None):
    """Fuse aligned depths into a TSDF volume and extract its zero level set."""
    if not depths:
        raise EmptyVolume("no frames to fuse")
    vol = fuse(depths, poses, k, validity_of(cfg), cfg.voxel_size, cfg.truncation, backend)
    return vol.extract_mesh(backend), vol


def run_render(mesh, poses, k, backend=None):
    if mesh.is_empty:
        return [DepthMap.empty(k.width, k.height) for _ in poses]
    return [render_depth(mesh, p, k, backend) for p in poses]


def eval_mesh(pred, gt, cfg, density=SAMPLE_DENSITY, seed=0):
    """Mesh metrics between area-sampled point clouds of two meshes."""
    return mesh_metrics(sample_surface(pred, density, seed), sample_surface(gt, density, seed + 1), cfg.tau)


def eval_depth(pred, gt, cfg):
    return depth_metrics(list(pred), list(gt), validity_of(cfg))


def run_eval(pred, gt, cfg, density=SAMPLE_DENSITY, seed=0):
    """Metric report dict for a mesh pair, a depth-list pair, or both.

    ``pred``/``gt`` are each a TriangleMesh, a list of DepthMaps, or a
    ``(mesh, depths)`` tuple.
    """
    def split(x):
        if isinstance(x, TriangleMesh):
            return x, None
        if isinstance(x, tuple):
            return x
        return None, x

    pm, pd = split(pred)
    gm, gd = split(gt)
    report = {}
    if pm is not None and gm is not None:
        report.update(eval_mesh(pm, gm, cfg, density, seed).report())
    if pd is not None and gd is not None:
        report.update(eval_depth(pd, gd, cfg).report())
    if not report:
        raise ValueError("nothing comparable to evaluate")
    return report
