"""Scale-consistent fusion of per-submap depth predictions into a single mesh."""
from .anchors import (
    ChiralityReject, Correspondence, DegenerateBaseline, NoValidAnchors, ReprojectionReject,
    TriangulatedAnchor, initial_scale, triangulate,
)
from .config import PipelineConfig, load_config
from .geometry import (
    DepthMap, DepthValidityRange, Intrinsics, Pose, TriangleMesh, backproject, project,
)
from .keyframes import SubmapConfig, partition_submaps, select_keyframes
from .metrics import (
    EmptyCloud, NoValidPixels, depth_metrics, log_transform, mesh_metrics, occ_loss, sdf_loss,
    total_loss,
)
from .pipeline import eval_depth, eval_mesh, run_align, run_eval, run_fuse_extract, run_render
from .render import render_depth
from .scale_graph import ScaleEdge, ScaleGraphProblem, edge_relative_scale, solve_scales
from .tsdf import EmptyVolume, TsdfVolume, fuse

__version__ = "0.1.0"

__all__ = [
    "ChiralityReject", "Correspondence", "DegenerateBaseline", "DepthMap", "DepthValidityRange",
    "EmptyCloud", "EmptyVolume", "Intrinsics", "NoValidAnchors", "NoValidPixels", "PipelineConfig",
    "Pose", "ReprojectionReject", "ScaleEdge", "ScaleGraphProblem", "SubmapConfig", "TriangleMesh",
    "TriangulatedAnchor", "TsdfVolume", "backproject", "depth_metrics", "edge_relative_scale",
    "eval_depth", "eval_mesh", "fuse", "initial_scale", "load_config", "log_transform", "mesh_metrics",
    "occ_loss", "partition_submaps", "project", "render_depth", "run_align", "run_eval",
    "run_fuse_extract", "run_render", "sdf_loss", "select_keyframes", "solve_scales", "total_loss",
    "triangulate",
]
