"""TSDF running-average integration kernels.

Both backends update ``tsdf`` and ``weight`` (shape ``(nx, ny, nz)``) in place
and return the number of voxels touched. Grid point ``(i, j, k)`` sits at
``origin + voxel_size * (i, j, k)``.
"""
import numpy as np

from .._accel import njit, resolve_backend


@njit
def _integrate_numba(tsdf, weight, origin, voxel_size, rot_wc, t_wc, fx, fy, cx, cy,
                     depth, eps, d_max, trunc, w_cap):
    nx, ny, nz = tsdf.shape
    h, w = depth.shape
    touched = 0
    for i in range(nx):
        px = origin[0] + voxel_size * i
        for j in range(ny):
            py = origin[1] + voxel_size * j
            for k in range(nz):
                pz = origin[2] + voxel_size * k
                # world -> camera
                xc = rot_wc[0, 0] * px + rot_wc[0, 1] * py + rot_wc[0, 2] * pz + t_wc[0]
                yc = rot_wc[1, 0] * px + rot_wc[1, 1] * py + rot_wc[1, 2] * pz + t_wc[1]
                zc = rot_wc[2, 0] * px + rot_wc[2, 1] * py + rot_wc[2, 2] * pz + t_wc[2]
                if zc <= 0.0:
                    continue
                u = np.floor(fx * xc / zc + cx + 0.5)
                v = np.floor(fy * yc / zc + cy + 0.5)
                if u < 0 or v < 0 or u >= w or v >= h:
                    continue
                d = depth[int(v), int(u)]
                if not (d >= eps and d <= d_max):
                    continue
                sdf = d - zc
                if sdf <= -trunc:
                    continue
                obs = sdf / trunc
                if obs > 1.0:
                    obs = 1.0
                elif obs < -1.0:
                    obs = -1.0
                wt = weight[i, j, k]
                tsdf[i, j, k] = (tsdf[i, j, k] * wt + obs) / (wt + 1.0)
                weight[i, j, k] = min(wt + 1.0, w_cap)
                touched += 1
    return touched


def _integrate_numpy(tsdf, weight, origin, voxel_size, rot_wc, t_wc, fx, fy, cx, cy,
                     depth, eps, d_max, trunc, w_cap, slab=32):
    nx, ny, nz = tsdf.shape
    h, w = depth.shape
    gy, gz = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    py = origin[1] + voxel_size * gy
    pz = origin[2] + voxel_size * gz
    touched = 0
    # slabs along x bound the temporary memory
    for i0 in range(0, nx, slab):
        i1 = min(i0 + slab, nx)
        px = (origin[0] + voxel_size * np.arange(i0, i1))[:, None, None]
        xc = rot_wc[0, 0] * px + rot_wc[0, 1] * py + rot_wc[0, 2] * pz + t_wc[0]
        yc = rot_wc[1, 0] * px + rot_wc[1, 1] * py + rot_wc[1, 2] * pz + t_wc[1]
        zc = rot_wc[2, 0] * px + rot_wc[2, 1] * py + rot_wc[2, 2] * pz + t_wc[2]
        front = zc > 0.0
        zs = np.where(front, zc, 1.0)
        u = np.floor(fx * xc / zs + cx + 0.5)
        v = np.floor(fy * yc / zs + cy + 0.5)
        inside = front & (u >= 0) & (v >= 0) & (u < w) & (v < h)
        d = np.zeros(zc.shape)
        d[inside] = depth[v[inside].astype(np.int64), u[inside].astype(np.int64)]
        sdf = d - zc
        upd = inside & (d >= eps) & (d <= d_max) & (sdf > -trunc)
        obs = np.clip(sdf[upd] / trunc, -1.0, 1.0)
        t_blk = tsdf[i0:i1]
        w_blk = weight[i0:i1]
        wt = w_blk[upd]
        t_blk[upd] = (t_blk[upd] * wt + obs) / (wt + 1.0)
        w_blk[upd] = np.minimum(wt + 1.0, w_cap)
        touched += int(upd.sum())
    return touched


def integrate_kernel(tsdf, weight, origin, voxel_size, pose, k, depth, eps, d_max, trunc,
                     w_cap, backend=None):
    rot_wc = np.ascontiguousarray(pose.rotation.T)
    t_wc = -rot_wc @ pose.translation
    args = (tsdf, weight, np.asarray(origin, dtype=np.float64), float(voxel_size), rot_wc, t_wc,
            float(k.fx), float(k.fy), float(k.cx), float(k.cy),
            np.ascontiguousarray(depth, dtype=np.float64), float(eps), float(d_max),
            float(trunc), float(w_cap))
    if resolve_backend(backend) == "numba":
        return _integrate_numba(*args)
    return _integrate_numpy(*args)
