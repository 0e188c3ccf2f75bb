"""Depth rendering of triangle meshes by z-buffer rasterization."""
import numpy as np

from .geometry import DepthMap
from .kernels.raster import rasterize

NEAR = 1e-4


def _edge_point(a, b, near):
    t = (near - a[:, 2]) / (b[:, 2] - a[:, 2])
    p = a + t[:, None] * (b - a)
    p[:, 2] = near
    return p


def clip_near(tris_cam, near=NEAR):
    """Drop triangles fully in front of ``near`` and split straddling ones.

    A straddling triangle is rotated (keeping its winding) so the lone vertex
    on its side of the plane comes first; one inside vertex leaves a triangle,
    two leave a quad that is split in two.
    """
    tris_cam = np.asarray(tris_cam, dtype=np.float64).reshape(-1, 3, 3)
    inside = tris_cam[:, :, 2] >= near
    n_in = inside.sum(axis=1)
    parts = [tris_cam[n_in == 3]]
    for count in (1, 2):
        sel = n_in == count
        if not sel.any():
            continue
        odd = inside[sel] if count == 1 else ~inside[sel]
        lead = np.argmax(odd, axis=1)
        order = (lead[:, None] + np.arange(3)) % 3
        t = np.take_along_axis(tris_cam[sel], order[:, :, None], axis=1)
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        p_ab, p_ca = _edge_point(a, b, near), _edge_point(c, a, near)
        if count == 1:
            parts.append(np.stack([a, p_ab, p_ca], axis=1))
        else:
            parts.append(np.stack([p_ab, b, c], axis=1))
            parts.append(np.stack([p_ab, c, p_ca], axis=1))
    return np.concatenate(parts)


def screen_triangles(mesh, pose, k, near=NEAR):
    """Near-clipped triangles as screen coordinates ``(sx, sy, z)``, each ``(F, 3)``.

    Triangles that cannot cover any pixel centre are culled.
    """
    if mesh.is_empty:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3))
    cam = pose.to_camera(mesh.vertices)
    z_v = cam[:, 2]
    front = z_v >= near
    with np.errstate(divide="ignore", invalid="ignore"):
        u_v = np.where(front, k.fx * cam[:, 0] / z_v + k.cx, np.nan)
        v_v = np.where(front, k.fy * cam[:, 1] / z_v + k.cy, np.nan)
    f = mesh.faces
    f0, f1, f2 = f[:, 0], f[:, 1], f[:, 2]
    n_front = front[f0].astype(np.int8) + front[f1] + front[f2]
    # reductions over the length-3 axis are slow; compare columns directly
    u0, u1, u2, v0, v1, v2 = u_v[f0], u_v[f1], u_v[f2], v_v[f0], v_v[f1], v_v[f2]
    on_screen = ((n_front == 3)
                 & ((u0 >= 0) | (u1 >= 0) | (u2 >= 0))
                 & ((u0 <= k.width - 1) | (u1 <= k.width - 1) | (u2 <= k.width - 1))
                 & ((v0 >= 0) | (v1 >= 0) | (v2 >= 0))
                 & ((v0 <= k.height - 1) | (v1 <= k.height - 1) | (v2 <= k.height - 1)))
    full = f[on_screen]
    sx, sy, z = u_v[full], v_v[full], z_v[full]
    split = f[(n_front > 0) & (n_front < 3)]
    if len(split):
        tris = clip_near(cam[split], near)
        cz = tris[:, :, 2]
        sx = np.concatenate([sx, k.fx * tris[:, :, 0] / cz + k.cx])
        sy = np.concatenate([sy, k.fy * tris[:, :, 1] / cz + k.cy])
        z = np.concatenate([z, cz])
    return sx, sy, z


def render_depth(mesh, pose, k, backend=None):
    """Per-pixel nearest camera-frame z of ``mesh``; uncovered pixels are 0."""
    sx, sy, z = screen_triangles(mesh, pose, k)
    zbuf = rasterize(sx, sy, z, k.width, k.height, backend)
    zbuf[~np.isfinite(zbuf)] = 0.0
    return DepthMap(zbuf)
