"""Command-line entry point.

Exit status is 0 on success, 1 for unreadable or malformed input and 2 when a
pipeline stage cannot produce a result (nothing to fuse, nothing to evaluate).
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .bundle import read_bundle, read_depth_dir, read_frame_depths, write_bundle, write_depth_dir
from .config import load_config
from .geometry import TriangleMesh
from .keyframes import SubmapConfig
from .metrics import EmptyCloud, NoValidPixels, format_report
from .pipeline import eval_depth, eval_mesh, run_align, run_fuse_extract, run_render
from .synth import synth_scene
from .tsdf import EmptyVolume, TsdfVolume

log = logging.getLogger("scalefuse")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", type=Path, default=d(None), help="key = value config file")
    p.add_argument("--out", type=Path, default=d(Path(".")), help="output directory")
    p.add_argument("--dump-graph", type=Path, default=d(None), help="write the scale graph here")
    p.add_argument("--seed", type=int, default=d(0), help="seed for synthesis and surface sampling")
    p.add_argument("--profile", choices=("generic", "scannet"), default=d(None))
    p.add_argument("--backend", choices=("numba", "numpy"), default=d(None),
                   help="kernel backend (default: environment or numba when available)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    parser = _Parser(prog="scalefuse", description="Scale-consistent depth fusion pipeline.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        return p

    p = cmd("synth", "generate a synthetic room bundle")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--style", choices=("inward", "outward"), default="inward")
    p.add_argument("--dims", type=float, nargs=3, default=(3.0, 3.0, 2.2), metavar=("X", "Y", "Z"))
    p.add_argument("--scale-range", type=float, nargs=2, default=(1.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--size", type=int, nargs=2, default=(160, 120), metavar=("W", "H"))
    p.add_argument("--format", choices=("dpt", "png"), default="dpt")

    p = cmd("align", "recover submap scales and write aligned keyframe depths")
    p.add_argument("bundle", type=Path)

    p = cmd("fuse", "fuse depth maps into a TSDF volume")
    p.add_argument("bundle", type=Path, help="bundle providing poses and intrinsics")
    p.add_argument("depth_dir", type=Path, help="depth maps named NNNNNN.dpt|png by frame id")

    p = cmd("extract", "extract a mesh from a fused volume")
    p.add_argument("volume", type=Path, help="volume.tsdf (volume.weight is read alongside)")

    p = cmd("render", "render a mesh to depth maps at the bundle poses")
    p.add_argument("mesh", type=Path)
    p.add_argument("bundle", type=Path)

    p = cmd("eval-mesh", "compare two meshes")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)

    p = cmd("eval-depth", "compare two directories of depth maps")
    p.add_argument("pred", type=Path)
    p.add_argument("gt", type=Path)

    p = cmd("pipeline", "align, fuse, extract, render and evaluate")
    p.add_argument("bundle", type=Path)
    return parser


def write_scales(path, result):
    ids = result.frame_ids
    lines = ["# submap first_frame last_frame s0 s_star anchors low_confidence"]
    for sm, s0, s, n in zip(result.submaps, result.initial_scales, result.solution.scales, result.anchor_counts):
        low = int(sm.index in result.low_confidence)
        lines.append(f"{sm.index} {ids[sm.start]} {ids[sm.end]} {s0:.17g} {s:.17g} {n} {low}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_volume_pair(tsdf_path):
    tsdf_path = Path(tsdf_path)
    values, origin, voxel = io.read_volume(tsdf_path)
    weight, w_origin, w_voxel = io.read_volume(tsdf_path.with_suffix(".weight"))
    if weight.shape != values.shape or not np.allclose(origin, w_origin) or voxel != w_voxel:
        raise io.InputError(f"{tsdf_path}: weight volume does not match")
    vol = TsdfVolume(origin, voxel, values.shape)
    vol.tsdf, vol.weight = values, weight
    return vol


def write_volume_pair(out, vol):
    io.write_volume(out / "volume.tsdf", vol.tsdf, vol.origin, vol.voxel_size)
    io.write_volume(out / "volume.weight", vol.weight, vol.origin, vol.voxel_size)


def _report(out, values):
    text = format_report(values)
    (out / "report.txt").write_text(text)
    sys.stdout.write(text)


def _align(args, cfg, out):
    bundle = read_bundle(args.bundle)
    result = run_align(bundle, cfg, args.dump_graph)
    write_depth_dir(out / "aligned", result.aligned, frame_ids=result.frame_ids)
    write_scales(out / "scales.txt", result)
    return bundle, result


def _cmd_synth(args, cfg, out):
    k = None
    if tuple(args.size) != (160, 120):
        from .synth import default_intrinsics

        k = default_intrinsics(*args.size)
    res = synth_scene(tuple(args.dims), args.frames, args.style, args.seed, tuple(args.scale_range),
                      SubmapConfig(cfg.n, cfg.o), k)
    write_bundle(out, res.bundle, "." + args.format if args.format == "png" else io.RAW_DEPTH_SUFFIX,
                 res.factors)


def _cmd_align(args, cfg, out):
    _align(args, cfg, out)


def _cmd_fuse(args, cfg, out):
    bundle = read_bundle(args.bundle)
    maps = {f: d for (f, s), d in read_depth_dir(args.depth_dir).items() if s is None}
    if not maps:
        raise io.InputError(f"{args.depth_dir}: no depth maps")
    frames = sorted(maps)
    if frames[-1] >= len(bundle.poses):
        raise io.InputError(f"{args.depth_dir}: frame {frames[-1]} has no pose")
    _, vol = run_fuse_extract([maps[f] for f in frames], [bundle.poses[f] for f in frames],
                              bundle.intrinsics, cfg, args.backend)
    write_volume_pair(out, vol)


def _cmd_extract(args, cfg, out):
    io.write_ply(out / "mesh.ply", read_volume_pair(args.volume).extract_mesh(args.backend))


def _cmd_render(args, cfg, out):
    mesh = io.read_ply(args.mesh)
    bundle = read_bundle(args.bundle)
    write_depth_dir(out / "rendered", run_render(mesh, bundle.poses, bundle.intrinsics, args.backend))


def _cmd_eval_mesh(args, cfg, out):
    pred, gt = io.read_ply(args.pred), io.read_ply(args.gt)
    _report(out, eval_mesh(_nonempty(pred, args.pred), _nonempty(gt, args.gt), cfg, seed=args.seed).report())


def _nonempty(mesh, path):
    if mesh.is_empty:
        raise EmptyCloud(f"{path}: mesh has no faces")
    return mesh


def _cmd_eval_depth(args, cfg, out):
    pred = read_depth_dir(args.pred)
    gt = read_depth_dir(args.gt)
    frames = sorted(f for f, s in gt if s is None)
    missing = [f for f in frames if (f, None) not in pred]
    if not frames or missing:
        raise io.InputError(f"{args.pred}: missing predictions for frames {missing or 'all'}")
    try:
        m = eval_depth([pred[(f, None)] for f in frames], [gt[(f, None)] for f in frames], cfg)
    except NoValidPixels as exc:
        raise NoValidPixels(f"{args.pred} vs {args.gt}: {exc}") from exc
    _report(out, m.report())


def _cmd_pipeline(args, cfg, out):
    bundle, result = _align(args, cfg, out)
    k = bundle.intrinsics
    mesh, vol = run_fuse_extract(result.aligned, result.poses, k, cfg, args.backend)
    write_volume_pair(out, vol)
    io.write_ply(out / "mesh.ply", mesh)
    rendered = run_render(mesh, result.poses, k, args.backend)
    write_depth_dir(out / "rendered", rendered, frame_ids=result.frame_ids)
    report = {}
    if bundle.gt_mesh is not None and not mesh.is_empty:
        report.update(eval_mesh(mesh, bundle.gt_mesh, cfg, seed=args.seed).report())
    if bundle.gt_depths is not None:
        gt = [bundle.gt_depths[f] for f in result.frame_ids]
        report.update(eval_depth(rendered, gt, cfg).report())
    elif not report:
        # without ground truth, score the rendered depths against the aligned inputs
        report.update(eval_depth(rendered, result.aligned, cfg).report())
    _report(out, report)


COMMANDS = {
    "synth": _cmd_synth, "align": _cmd_align, "fuse": _cmd_fuse, "extract": _cmd_extract,
    "render": _cmd_render, "eval-mesh": _cmd_eval_mesh, "eval-depth": _cmd_eval_depth,
    "pipeline": _cmd_pipeline,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.profile)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, args.out)
    except (io.InputError, OSError) as exc:
        print(f"scalefuse: input error: {exc}", file=sys.stderr)
        return 1
    except (EmptyVolume, EmptyCloud, NoValidPixels) as exc:
        print(f"scalefuse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
