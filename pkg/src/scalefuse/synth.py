"""Synthetic box scenes with exact depths, correspondences and injected scale drift.

Depths are computed by analytic ray/box intersection, never by the
rasterizer, so the generator can serve as an independent oracle.
"""
from dataclasses import dataclass

import numpy as np

from .anchors import Correspondence
from .bundle import SceneBundle
from .geometry import DepthMap, Intrinsics, TriangleMesh, look_at, pixel_rays, project_points
from .keyframes import SubmapConfig, partition_submaps


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    # "room": camera inside, rays hit the exit face; "solid": rays hit the entry face
    kind: str = "room"

    def contains(self, p, margin=0.0):
        p = np.asarray(p)
        return bool(np.all(p > np.asarray(self.lo) + margin) and np.all(p < np.asarray(self.hi) - margin))

    def mesh(self):
        """Triangulated faces; a solid box omits its bottom face (it stands on the floor)."""
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        v = np.array([[x, y, z] for z in (lo[2], hi[2]) for y in (lo[1], hi[1]) for x in (lo[0], hi[0])])
        # corners indexed x + 2y + 4z
        quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
        if self.kind == "solid":
            quads = quads[1:]
        faces = [f for a, b, c, d in quads for f in ((a, b, c), (a, c, d))]
        return TriangleMesh(v, np.array(faces))

    def ray_depth(self, origin, dirs):
        """Ray parameter of the first visible hit along ``origin + t * dirs`` (inf on miss)."""
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        t_near = np.nanmax(np.minimum(t1, t2), axis=1)
        t_far = np.nanmin(np.maximum(t1, t2), axis=1)
        if self.kind == "room":
            return np.where(t_far > 0, t_far, np.inf)
        hit = (t_near <= t_far) & (t_near > 0)
        return np.where(hit, t_near, np.inf)


@dataclass
class Scene:
    boxes: list

    def mesh(self):
        verts, faces = [], []
        for b in self.boxes:
            m = b.mesh()
            faces.append(m.faces + sum(len(v) for v in verts))
            verts.append(m.vertices)
        return TriangleMesh(np.concatenate(verts), np.concatenate(faces))

    def ray_depth(self, origin, dirs):
        return np.min([b.ray_depth(origin, dirs) for b in self.boxes], axis=0)

    def render(self, pose, k):
        """Exact z-depth at every pixel centre (0 where nothing is hit)."""
        v, u = np.mgrid[0:k.height, 0:k.width]
        return DepthMap(self.depth_at(np.stack([u.ravel(), v.ravel()], 1), pose, k).reshape(k.shape))

    def depth_at(self, pixels, pose, k):
        rays = pixel_rays(pixels, k)  # unit z, so the ray parameter is z-depth
        t = self.ray_depth(pose.translation, rays @ pose.rotation.T)
        return np.where(np.isfinite(t), t, 0.0)

    def surface_lattice(self, spacing, inset=0.05):
        pts = []
        for b in self.boxes:
            lo, hi = np.asarray(b.lo, float), np.asarray(b.hi, float)
            for axis in range(3):
                a1, a2 = [a for a in range(3) if a != axis]
                g1 = np.arange(lo[a1] + inset, hi[a1] - inset + 1e-9, spacing)
                g2 = np.arange(lo[a2] + inset, hi[a2] - inset + 1e-9, spacing)
                m1, m2 = np.meshgrid(g1, g2, indexing="ij")
                for level in (lo[axis], hi[axis]):
                    p = np.zeros((m1.size, 3))
                    p[:, axis] = level
                    p[:, a1] = m1.ravel()
                    p[:, a2] = m2.ravel()
                    pts.append(p)
        return np.concatenate(pts)


@dataclass
class SynthResult:
    bundle: SceneBundle
    gt_mesh: TriangleMesh
    factors: np.ndarray
    scene: Scene


def room_scene(dims=(3.0, 3.0, 2.2), obstacle=False):
    lx, ly, lz = dims
    boxes = [Box((0.0, 0.0, 0.0), (lx, ly, lz), "room")]
    if obstacle:
        c = np.array([lx, ly]) / 2
        boxes.append(Box((c[0] - 0.25, c[1] - 0.25, 0.0), (c[0] + 0.25, c[1] + 0.25, 0.6), "solid"))
    return Scene(boxes)


def default_intrinsics(width=160, height=120):
    f = 0.4 * width
    return Intrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def circular_trajectory(dims, n_frames, style="inward", radius=None, height=None,
                        pitch_deg=30.0, turns=1.0):
    """Camera loop around the room centre, pitching up and down as it goes.

    ``inward`` cameras look across the centre, ``outward`` ones at the walls.
    """
    lx, ly, lz = dims
    center = np.array([lx / 2, ly / 2, lz / 2 if height is None else height])
    radius = 0.3 * min(lx, ly) if radius is None else radius
    poses = []
    for i in range(n_frames):
        th = 2 * np.pi * turns * i / n_frames
        eye = center + radius * np.array([np.cos(th), np.sin(th), 0.0])
        heading = -np.array([np.cos(th), np.sin(th)]) if style == "inward" else np.array([np.cos(th), np.sin(th)])
        if style not in ("inward", "outward"):
            raise ValueError(f"unknown trajectory style {style!r}")
        # sideways sweep plus pitch oscillation widen coverage
        yaw = np.radians(35.0) * np.sin(3 * th)
        c, s = np.cos(yaw), np.sin(yaw)
        heading = np.array([c * heading[0] - s * heading[1], s * heading[0] + c * heading[1]])
        pitch = np.radians(pitch_deg) * np.sin(2 * th + 0.5)
        fwd = np.array([heading[0] * np.cos(pitch), heading[1] * np.cos(pitch), np.sin(pitch)])
        poses.append(look_at(eye, eye + fwd))
    return poses


def make_correspondences(scene, poses, k, pairs, spacing=0.3, max_per_pair=40, rng=None):
    """Exact projections of a surface lattice into both views of each frame pair."""
    lattice = scene.surface_lattice(spacing)
    proj = [project_points(lattice, p, k) for p in poses]
    visible = []
    for f, (uv, z) in enumerate(proj):
        ok = (z > 0) & np.all(np.isfinite(uv), axis=1)
        ok &= (uv[:, 0] >= 0) & (uv[:, 0] <= k.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= k.height - 1)
        idx = np.flatnonzero(ok)
        d = scene.depth_at(uv[idx], poses[f], k)
        vis = np.zeros(len(lattice), dtype=bool)
        vis[idx[np.abs(d - z[idx]) < 1e-6]] = True
        visible.append(vis)
    out = []
    for a, b in pairs:
        idx = np.flatnonzero(visible[a] & visible[b])
        if rng is not None and len(idx) > max_per_pair:
            idx = np.sort(rng.choice(idx, size=max_per_pair, replace=False))
        for i in idx[:max_per_pair]:
            out.append(Correspondence(a, b, proj[a][0][i], proj[b][0][i]))
    return out


def synth_scene(dims=(3.0, 3.0, 2.2), n_frames=40, style="inward", seed=0,
                scale_range=(1.0, 1.0), submaps=SubmapConfig(), k=None, obstacle=False,
                spacing=0.3, max_per_pair=40):
    """Build a posed room sequence whose per-submap depth predictions carry
    multiplicative scale errors drawn uniformly from ``scale_range``.

    ``factors[m]`` is the error injected into submap m: its predictions equal
    ``factors[m] * gt_depth``. The partition assumes every frame is a keyframe.
    """
    if min(dims) <= 0:
        raise ValueError("room dimensions must be positive")
    if n_frames < 2:
        raise ValueError("need at least two cameras")
    lo_s, hi_s = scale_range
    if not 0 < lo_s <= hi_s:
        raise ValueError("scale range must be positive and ordered")
    k = default_intrinsics() if k is None else k
    scene = room_scene(dims, obstacle)
    poses = circular_trajectory(dims, n_frames, style)
    room = scene.boxes[0]
    for p in poses:
        if not room.contains(p.translation, margin=0.05):
            raise ValueError("trajectory leaves the room")
        if any(b.kind == "solid" and b.contains(p.translation, margin=-0.05) for b in scene.boxes):
            raise ValueError("trajectory enters an obstacle")

    rng = np.random.default_rng(seed)
    windows = partition_submaps(n_frames, submaps)
    factors = rng.uniform(lo_s, hi_s, size=len(windows))
    gt = [scene.render(p, k) for p in poses]
    predictions = {}
    for sm, c in zip(windows, factors):
        for f in sm.positions:
            predictions[(f, sm.index)] = gt[f].scaled(float(c))
    pairs = sorted({(a, b) for sm in windows for a in sm.positions for b in sm.positions if a < b})
    corrs = make_correspondences(scene, poses, k, pairs, spacing, max_per_pair, rng)
    gt_mesh = scene.mesh()
    bundle = SceneBundle(k, poses, predictions, corrs, gt_mesh=gt_mesh, gt_depths=gt)
    return SynthResult(bundle, gt_mesh, factors, scene)
