"""Readers and writers for the on-disk formats.

* poses: TUM trajectory lines ``timestamp tx ty tz qx qy qz qw`` (camera-to-world)
* intrinsics: ``fx fy cx cy`` then ``width height``
* depth: 16-bit PNG in millimetres, or raw float32 with a 16-byte ``DPTH`` header
* correspondences: ``frame_a frame_b ua va ub vb`` per line
* meshes: binary little-endian PLY with float32 positions and int32 faces
* TSDF dump: one ASCII header line ``nx ny nz voxel_size ox oy oz`` then raw
  little-endian float32 values, x fastest
"""
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .anchors import Correspondence
from .geometry import DepthMap, Intrinsics, Pose, TriangleMesh

DEPTH_MAGIC = b"DPTH"
RAW_DEPTH_SUFFIX = ".dpt"


class InputError(ValueError):
    """Malformed or missing input file."""


def data_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_tum(path):
    """Returns ``(timestamps, poses)``."""
    stamps, poses = [], []
    for lineno, line in data_lines(path):
        parts = line.split()
        if len(parts) != 8:
            raise InputError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            v = [float(p) for p in parts]
            poses.append(Pose.from_quaternion(v[1:4], v[4:8]))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        stamps.append(v[0])
    if not poses:
        raise InputError(f"{path}: no poses")
    return stamps, poses


def write_tum(path, poses, timestamps=None):
    timestamps = range(len(poses)) if timestamps is None else timestamps
    with open(path, "w") as fh:
        fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for ts, p in zip(timestamps, poses):
            vals = [*p.translation, *p.quaternion()]
            fh.write(f"{float(ts):.6f} " + " ".join(f"{x:.17g}" for x in vals) + "\n")


def read_intrinsics(path):
    tokens = [t for _, line in data_lines(path) for t in line.split()]
    if len(tokens) != 6:
        raise InputError(f"{path}: expected fx fy cx cy width height")
    try:
        fx, fy, cx, cy = (float(t) for t in tokens[:4])
        return Intrinsics(fx, fy, cx, cy, int(tokens[4]), int(tokens[5]))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_intrinsics(path, k):
    Path(path).write_text(f"{k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g}\n{k.width} {k.height}\n")


def read_depth(path):
    path = Path(path)
    if path.suffix.lower() == ".png":
        try:
            img = np.asarray(Image.open(path))
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        if img.ndim != 2:
            raise InputError(f"{path}: depth PNG must be single-channel")
        return DepthMap(img.astype(np.float64) / 1000.0)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if len(data) < 16 or data[:4] != DEPTH_MAGIC:
        raise InputError(f"{path}: missing DPTH header")
    w, h, _ = struct.unpack("<III", data[4:16])
    if len(data) != 16 + 4 * w * h:
        raise InputError(f"{path}: expected {w}x{h} floats")
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w)
    return DepthMap(values.astype(np.float64))


def write_depth(path, depth):
    path = Path(path)
    v = depth.values
    if path.suffix.lower() == ".png":
        mm = np.where(depth.valid_mask(), np.round(v * 1000.0), 0)
        Image.fromarray(np.clip(mm, 0, 65535).astype(np.uint16)).save(path)
        return
    header = DEPTH_MAGIC + struct.pack("<III", depth.width, depth.height, 0)
    path.write_bytes(header + np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_correspondences(path, k=None):
    out = []
    for lineno, line in data_lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise InputError(f"{path}:{lineno}: expected 6 fields")
        try:
            c = Correspondence(int(parts[0]), int(parts[1]), (float(parts[2]), float(parts[3])),
                               (float(parts[4]), float(parts[5])))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        if k is not None and not c.in_bounds(k):
            raise InputError(f"{path}:{lineno}: pixel outside the image")
        out.append(c)
    return out


def write_correspondences(path, corrs):
    with open(path, "w") as fh:
        for c in corrs:
            fh.write(f"{c.frame_a} {c.frame_b} {c.pixel_a[0]:.17g} {c.pixel_a[1]:.17g} "
                     f"{c.pixel_b[0]:.17g} {c.pixel_b[1]:.17g}\n")


def write_ply(path, mesh):
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {len(mesh.faces)}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    faces = np.empty(len(mesh.faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
    faces["n"] = 3
    faces["idx"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f4").tobytes())
        fh.write(faces.tobytes())


def read_ply(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise InputError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise InputError(f"{path}: only binary little-endian PLY is supported")
    counts = {}
    vprops = []
    current = None
    for line in header:
        parts = line.split()
        if parts[:1] == ["element"]:
            current = parts[1]
            counts[current] = int(parts[2])
        elif parts[:1] == ["property"] and current == "vertex":
            vprops.append(parts)
    if any(p[1] != "float" for p in vprops):
        raise InputError(f"{path}: vertex properties must be float32")
    nv, nf = counts.get("vertex", 0), counts.get("face", 0)
    off = end + len(b"end_header\n")
    if len(vprops) < 3:
        raise InputError(f"{path}: vertices need x, y and z")
    try:
        verts = np.frombuffer(data, dtype="<f4", count=nv * len(vprops), offset=off)
        verts = verts.reshape(nv, len(vprops))[:, :3]
        off += 4 * nv * len(vprops)
        faces = np.frombuffer(data, dtype=[("n", "u1"), ("idx", "<i4", (3,))], count=nf, offset=off)
    except ValueError as exc:
        raise InputError(f"{path}: truncated PLY payload") from exc
    if nf and np.any(faces["n"] != 3):
        raise InputError(f"{path}: only triangle faces are supported")
    try:
        return TriangleMesh(verts.astype(np.float64), faces["idx"].astype(np.int64))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_volume(path, values, origin, voxel_size):
    nx, ny, nz = values.shape
    head = f"{nx} {ny} {nz} {voxel_size:.17g} {origin[0]:.17g} {origin[1]:.17g} {origin[2]:.17g}\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.ascontiguousarray(values.transpose(2, 1, 0), dtype="<f4").tobytes())


def read_volume(path):
    """Returns ``(values (nx, ny, nz), origin, voxel_size)``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    nl = data.find(b"\n")
    try:
        head = data[:nl].decode("ascii").split()
        nx, ny, nz = (int(h) for h in head[:3])
        voxel_size = float(head[3])
        origin = np.array([float(h) for h in head[4:7]])
    except (ValueError, UnicodeDecodeError, IndexError) as exc:
        raise InputError(f"{path}: bad volume header") from exc
    if len(data) - nl - 1 != 4 * nx * ny * nz:
        raise InputError(f"{path}: expected {nx * ny * nz} values")
    flat = np.frombuffer(data, dtype="<f4", offset=nl + 1)
    if flat.size != nx * ny * nz:
        raise InputError(f"{path}: expected {nx * ny * nz} values")
    return flat.reshape(nz, ny, nx).transpose(2, 1, 0).astype(np.float64), origin, voxel_size
