"""Time the numba and numpy backends of the three hot kernels on a synthetic room.

    python3 benchmarks/bench_kernels.py [--frames 40] [--repeat 3]

The first numba call includes JIT compilation (or cache load); it is reported
separately and excluded from the steady-state timings.
"""
import argparse
import time

import numpy as np

from scalefuse._accel import HAVE_NUMBA
from scalefuse.geometry import DepthValidityRange
from scalefuse.synth import synth_scene
from scalefuse.tsdf import fuse


def timed(fn, repeat):
    t0 = time.perf_counter()
    first = fn()
    warm = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return first, warm, min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--voxel", type=float, default=0.04)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    res = synth_scene(n_frames=args.frames)
    b = res.bundle
    depths, poses, k = b.gt_depths, b.poses, b.intrinsics
    validity = DepthValidityRange()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]

    print(f"{args.frames} frames {k.width}x{k.height}, voxel {args.voxel} m")
    print(f"{'kernel':<12}{'backend':<8}{'first (s)':>11}{'best (s)':>11}")
    outputs = {}
    for backend in backends:
        vol, w1, t1 = timed(lambda: fuse(depths, poses, k, validity, args.voxel, backend=backend), args.repeat)
        mesh, w2, t2 = timed(lambda: vol.extract_mesh(backend), args.repeat)
        from scalefuse.render import render_depth

        _, w3, t3 = timed(lambda: [render_depth(mesh, p, k, backend) for p in poses], args.repeat)
        for name, w, t in (("integrate", w1, t1), ("march", w2, t2), ("raster", w3, t3)):
            print(f"{name:<12}{backend:<8}{w:>11.3f}{t:>11.3f}")
        outputs[backend] = (vol.tsdf, mesh.vertices)
    if len(outputs) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(outputs["numba"], outputs["numpy"]))
        print(f"backends agree bit-for-bit: {same}")


if __name__ == "__main__":
    main()
