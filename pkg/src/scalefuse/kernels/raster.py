"""Z-buffer scan conversion of screen-space triangles.

Input triangles are already clipped to the near plane and projected:
``sx, sy`` are pixel coordinates and ``z`` camera-frame depths of the three
corners, each shaped ``(F, 3)``. Pixels are sampled at integer centres with a
top-left fill rule; depth is interpolated perspective-correctly (linear in 1/z).
Empty pixels are left at +inf.
"""
import numpy as np

from .._accel import njit, resolve_backend


@njit
def _raster_numba(sx, sy, z, zbuf):
    h, w = zbuf.shape
    for f in range(sx.shape[0]):
        ax, ay, az = sx[f, 0], sy[f, 0], z[f, 0]
        bx, by, bz = sx[f, 1], sy[f, 1], z[f, 1]
        cx, cy, cz = sx[f, 2], sy[f, 2], z[f, 2]
        area = (cx - ax) * (by - ay) - (cy - ay) * (bx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
            bz, cz = cz, bz
            area = -area
        x0 = max(int(np.ceil(min(ax, bx, cx))), 0)
        x1 = min(int(np.floor(max(ax, bx, cx))), w - 1)
        y0 = max(int(np.ceil(min(ay, by, cy))), 0)
        y1 = min(int(np.floor(max(ay, by, cy))), h - 1)
        # top-left flags for edges b->c, c->a, a->b
        tl0 = (cy - by > 0.0) or (cy - by == 0.0 and cx - bx < 0.0)
        tl1 = (ay - cy > 0.0) or (ay - cy == 0.0 and ax - cx < 0.0)
        tl2 = (by - ay > 0.0) or (by - ay == 0.0 and bx - ax < 0.0)
        for py in range(y0, y1 + 1):
            fy = float(py)
            for px in range(x0, x1 + 1):
                fx = float(px)
                w0 = (fx - bx) * (cy - by) - (fy - by) * (cx - bx)
                w1 = (fx - cx) * (ay - cy) - (fy - cy) * (ax - cx)
                w2 = (fx - ax) * (by - ay) - (fy - ay) * (bx - ax)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not tl0) or (w1 == 0.0 and not tl1) or (w2 == 0.0 and not tl2):
                    continue
                inv = (w0 / area) / az + (w1 / area) / bz + (w2 / area) / cz
                d = 1.0 / inv
                if d < zbuf[py, px]:
                    zbuf[py, px] = d


def _top_left(dx, dy):
    return (dy > 0.0) | ((dy == 0.0) & (dx < 0.0))


def coverage_numpy(sx, sy, z, width, height, chunk=1 << 22):
    """Yield ``(flat_pixel, depth)`` arrays of covered samples, chunked over triangles."""
    ax, bx, cx = sx[:, 0].copy(), sx[:, 1].copy(), sx[:, 2].copy()
    ay, by, cy = sy[:, 0].copy(), sy[:, 1].copy(), sy[:, 2].copy()
    az, bz, cz = z[:, 0].copy(), z[:, 1].copy(), z[:, 2].copy()
    area = (cx - ax) * (by - ay) - (cy - ay) * (bx - ax)
    flip = area < 0.0
    bx[flip], cx[flip] = cx[flip], bx[flip].copy()
    by[flip], cy[flip] = cy[flip], by[flip].copy()
    bz[flip], cz[flip] = cz[flip], bz[flip].copy()
    area = np.abs(area)

    x0 = np.maximum(np.ceil(np.minimum(np.minimum(ax, bx), cx)), 0).astype(np.int64)
    x1 = np.minimum(np.floor(np.maximum(np.maximum(ax, bx), cx)), width - 1).astype(np.int64)
    y0 = np.maximum(np.ceil(np.minimum(np.minimum(ay, by), cy)), 0).astype(np.int64)
    y1 = np.minimum(np.floor(np.maximum(np.maximum(ay, by), cy)), height - 1).astype(np.int64)
    bw = np.maximum(x1 - x0 + 1, 0)
    counts = bw * np.maximum(y1 - y0 + 1, 0)
    counts[area == 0.0] = 0
    tl0 = _top_left(cx - bx, cy - by)
    tl1 = _top_left(ax - cx, ay - cy)
    tl2 = _top_left(bx - ax, by - ay)

    tris = np.flatnonzero(counts)
    csum = np.cumsum(counts[tris])
    start = 0
    while start < len(tris):
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + chunk, side="right"))
        stop = max(stop, start + 1)
        sel = tris[start:stop]
        cnt = counts[sel]
        t = np.repeat(sel, cnt)
        local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        px = x0[t] + local % bw[t]
        py = y0[t] + local // bw[t]
        fx = px.astype(np.float64)
        fy = py.astype(np.float64)
        w0 = (fx - bx[t]) * (cy[t] - by[t]) - (fy - by[t]) * (cx[t] - bx[t])
        w1 = (fx - cx[t]) * (ay[t] - cy[t]) - (fy - cy[t]) * (ax[t] - cx[t])
        w2 = (fx - ax[t]) * (by[t] - ay[t]) - (fy - ay[t]) * (bx[t] - ax[t])
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        inside &= ~((w0 == 0.0) & ~tl0[t]) & ~((w1 == 0.0) & ~tl1[t]) & ~((w2 == 0.0) & ~tl2[t])
        t, a = t[inside], area[t[inside]]
        inv = (w0[inside] / a) / az[t] + (w1[inside] / a) / bz[t] + (w2[inside] / a) / cz[t]
        yield py[inside] * width + px[inside], 1.0 / inv
        start = stop


def _raster_numpy(sx, sy, z, zbuf):
    h, w = zbuf.shape
    flat = zbuf.reshape(-1)
    for pix, depth in coverage_numpy(sx, sy, z, w, h):
        np.minimum.at(flat, pix, depth)


def rasterize(sx, sy, z, width, height, backend=None):
    """Nearest depth per pixel; ``inf`` where no triangle covers the pixel centre."""
    zbuf = np.full((height, width), np.inf)
    sx = np.ascontiguousarray(sx, dtype=np.float64).reshape(-1, 3)
    sy = np.ascontiguousarray(sy, dtype=np.float64).reshape(-1, 3)
    z = np.ascontiguousarray(z, dtype=np.float64).reshape(-1, 3)
    if len(sx) == 0:
        return zbuf
    if resolve_backend(backend) == "numba":
        _raster_numba(sx, sy, z, zbuf)
    else:
        _raster_numpy(sx, sy, z, zbuf)
    return zbuf
