"""Marching cubes over a TSDF grid.

The backend kernels only classify cubes and emit, for every triangle, the
global ids of the three grid edges it cuts. Vertex deduplication and the
zero-crossing interpolation are shared, so both backends give identical meshes.

Global edge id of the edge leaving grid point ``(i, j, k)`` along axis ``a``:
``((i * ny + j) * nz + k) * 3 + a``.
"""
import numpy as np

from .._accel import njit, resolve_backend
from ._mc_table import CORNERS, EDGES, TRI_TABLE

N_TRIS = (np.sum(TRI_TABLE >= 0, axis=1) // 3).astype(np.int64)


def _edge_offsets():
    # lower endpoint offset and axis of each cube edge
    out = np.zeros((12, 4), dtype=np.int64)
    for e, (a, b) in enumerate(EDGES):
        lo = np.minimum(CORNERS[a], CORNERS[b])
        axis = int(np.argmax(np.abs(CORNERS[a] - CORNERS[b])))
        out[e, :3] = lo
        out[e, 3] = axis
    return out


EDGE_OFFSETS = _edge_offsets()


@njit
def _cube_case(tsdf, weight, i, j, k, corners):
    case = 0
    for c in range(8):
        ci = i + corners[c, 0]
        cj = j + corners[c, 1]
        ck = k + corners[c, 2]
        if weight[ci, cj, ck] <= 0.0:
            return -1
        if tsdf[ci, cj, ck] < 0.0:
            case |= 1 << c
    return case


@njit
def _mc_numba(tsdf, weight, corners, tri_table, n_tris, edge_offsets):
    nx, ny, nz = tsdf.shape
    total = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case = _cube_case(tsdf, weight, i, j, k, corners)
                if case > 0:
                    total += n_tris[case]
    out = np.empty((total, 3), dtype=np.int64)
    f = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            for k in range(nz - 1):
                case = _cube_case(tsdf, weight, i, j, k, corners)
                if case <= 0:
                    continue
                for t in range(n_tris[case]):
                    for s in range(3):
                        e = tri_table[case, 3 * t + s]
                        gi = i + edge_offsets[e, 0]
                        gj = j + edge_offsets[e, 1]
                        gk = k + edge_offsets[e, 2]
                        out[f, s] = ((gi * ny + gj) * nz + gk) * 3 + edge_offsets[e, 3]
                    f += 1
    return out


def _mc_numpy(tsdf, weight):
    nx, ny, nz = tsdf.shape
    if min(nx, ny, nz) < 2:
        return np.zeros((0, 3), dtype=np.int64)
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    observed = np.ones(case.shape, dtype=bool)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        sl = (slice(dx, dx + nx - 1), slice(dy, dy + ny - 1), slice(dz, dz + nz - 1))
        case |= (tsdf[sl] < 0.0).astype(np.int64) << c
        observed &= weight[sl] > 0.0
    case[~observed] = 0
    flat = np.flatnonzero(N_TRIS[case.ravel()] > 0)
    if flat.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    cases = case.ravel()[flat]
    ci, cj, ck = np.unravel_index(flat, case.shape)
    tris = TRI_TABLE[cases, :15].reshape(-1, 5, 3)
    keep = tris[:, :, 0] >= 0
    cube_of = np.repeat(np.arange(flat.size), 5).reshape(-1, 5)[keep]
    edges = tris[keep]
    off = EDGE_OFFSETS[edges]
    gi = ci[cube_of][:, None] + off[..., 0]
    gj = cj[cube_of][:, None] + off[..., 1]
    gk = ck[cube_of][:, None] + off[..., 2]
    return ((gi * ny + gj) * nz + gk) * 3 + off[..., 3]


def face_edges(tsdf, weight, backend=None):
    """``(F, 3)`` global edge ids per output triangle, in cube scan order."""
    if resolve_backend(backend) == "numba":
        if min(tsdf.shape) < 2:
            return np.zeros((0, 3), dtype=np.int64)
        return _mc_numba(tsdf, weight, CORNERS, TRI_TABLE, N_TRIS, EDGE_OFFSETS)
    return _mc_numpy(tsdf, weight)


def marching_cubes(tsdf, weight, origin, voxel_size, backend=None):
    """Zero level set of ``tsdf`` over cubes whose 8 corners all have weight > 0.

    Returns ``(vertices (V, 3), faces (F, 3))`` with one vertex per cut grid edge.
    """
    tsdf = np.ascontiguousarray(tsdf, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    fe = face_edges(tsdf, weight, backend)
    if len(fe) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    uniq, inverse = np.unique(fe.ravel(), return_inverse=True)
    faces = inverse.reshape(-1, 3).astype(np.int64)

    nx, ny, nz = tsdf.shape
    axis = uniq % 3
    i, j, k = np.unravel_index(uniq // 3, (nx, ny, nz))
    step = np.eye(3, dtype=np.int64)[axis]
    v0 = tsdf[i, j, k]
    v1 = tsdf[i + step[:, 0], j + step[:, 1], k + step[:, 2]]
    t = v0 / (v0 - v1)
    grid = np.stack([i, j, k], axis=1).astype(np.float64) + t[:, None] * step
    vertices = np.asarray(origin, dtype=np.float64) + voxel_size * grid
    return vertices, faces
