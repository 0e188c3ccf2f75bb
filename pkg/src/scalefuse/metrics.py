"""Mesh and depth evaluation metrics and the reference loss terms."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

MESH_KEYS = ("acc_cm", "comp_cm", "cham_cm", "prec", "recall", "f1")
DEPTH_KEYS = ("abs_rel", "abs_diff_m", "sq_rel", "delta_105", "delta_125", "depth_comp")


class EmptyCloud(ValueError):
    pass


class NoValidPixels(ValueError):
    pass


def nearest_distances(query, reference):
    """Distance from every query point to its nearest reference point."""
    d, _ = cKDTree(reference).query(query, k=1)
    return d


@dataclass(frozen=True)
class MeshMetrics:
    acc: float
    comp: float
    cham: float
    prec: float
    recall: float
    f1: float
    tau: float

    def report(self):
        return dict(zip(MESH_KEYS, (self.acc, self.comp, self.cham, self.prec, self.recall, self.f1)))


def f_score(prec, recall):
    return 2.0 * prec * recall / (prec + recall) if prec + recall > 0 else 0.0


def mesh_metrics(pred, gt, tau=0.05):
    """Bidirectional nearest-neighbour metrics between two point clouds.

    Distances are reported in centimetres, precision/recall/F1 as fractions
    of points closer than ``tau`` metres.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(pred) == 0 or len(gt) == 0:
        raise EmptyCloud("both point sets must be non-empty")
    d_pred = nearest_distances(pred, gt)
    d_gt = nearest_distances(gt, pred)
    acc = 100.0 * float(d_pred.mean())
    comp = 100.0 * float(d_gt.mean())
    prec = float(np.mean(d_pred < tau))
    recall = float(np.mean(d_gt < tau))
    return MeshMetrics(acc, comp, 0.5 * (acc + comp), prec, recall, f_score(prec, recall), tau)


def sample_surface(mesh, density=10000.0, seed=0):
    """Area-weighted uniform samples, ``density`` points per square metre."""
    if mesh.is_empty:
        raise EmptyCloud("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if total <= 0:
        return mesh.vertices[np.unique(mesh.faces)]
    n = max(int(np.ceil(total * density)), 1)
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles()[face]
    return ((1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1]
            + (r1 * r2)[:, None] * tri[:, 2])


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    abs_diff: float
    sq_rel: float
    delta_105: float
    delta_125: float
    comp: float

    def report(self):
        return dict(zip(DEPTH_KEYS, (self.abs_rel, self.abs_diff, self.sq_rel,
                                     self.delta_105, self.delta_125, self.comp)))


def depth_metrics(pred, gt, validity):
    """2-D metrics over pixels valid in both maps; ``pred``/``gt`` may be DepthMaps
    or lists of them (pixels are pooled across frames)."""
    preds = pred if isinstance(pred, (list, tuple)) else [pred]
    gts = gt if isinstance(gt, (list, tuple)) else [gt]
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth frame counts differ")
    d_all, g_all = [], []
    n_gt = 0
    for p, g in zip(preds, gts):
        if p.shape != g.shape:
            raise ValueError(f"depth maps differ in size: {p.shape} vs {g.shape}")
        g_ok = validity.mask(g.values)
        both = g_ok & validity.mask(p.values)
        n_gt += int(g_ok.sum())
        d_all.append(p.values[both])
        g_all.append(g.values[both])
    d = np.concatenate(d_all)
    g = np.concatenate(g_all)
    if d.size == 0:
        raise NoValidPixels("no pixel is valid in both prediction and ground truth")
    diff = d - g
    ratio = np.maximum(d / g, g / d)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        abs_diff=float(np.mean(np.abs(diff))),
        sq_rel=float(np.mean(diff**2 / g)),
        delta_105=float(np.mean(ratio < 1.05)),
        delta_125=float(np.mean(ratio < 1.25)),
        comp=d.size / n_gt,
    )


def format_report(values):
    return "".join(f"{k}={float(v):.4f}\n" for k, v in values.items())


def parse_report(text):
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k.strip()] = float(v)
    return out


# --- loss terms -------------------------------------------------------------


@dataclass(frozen=True)
class SupervisionSample:
    occupancy: float
    sdf_gt: float
    occupancy_pred: float
    sdf_logit: float
    point: tuple = (0.0, 0.0, 0.0)


def log_transform(x):
    """``sign(x) * ln(|x| + 1)``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.sign(x) * np.log1p(np.abs(x))
    return float(out) if out.ndim == 0 else out


def _columns(samples):
    a = np.array([(s.occupancy, s.sdf_gt, s.occupancy_pred, s.sdf_logit) for s in samples],
                 dtype=np.float64).reshape(-1, 4)
    return a.T


def sdf_loss(samples):
    """Mean L1 between log-transformed tanh(logit) and gt SDF over occupied samples.

    Returns None when no sample has occupancy > 0.5 (the term is absent).
    """
    occ, sdf_gt, _, logit = _columns(samples)
    sel = occ > 0.5
    if not np.any(sel):
        return None
    pred = np.tanh(logit[sel])
    return float(np.mean(np.abs(log_transform(pred) - log_transform(sdf_gt[sel]))))


def occ_loss(samples):
    """Binary cross-entropy of predicted occupancy probabilities."""
    occ, _, p, _ = _columns(samples)
    if occ.size == 0:
        raise ValueError("occupancy loss needs at least one sample")
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("predicted occupancy must lie strictly inside (0, 1)")
    return float(np.mean(-(occ * np.log(p) + (1 - occ) * np.log1p(-p))))


def total_loss(samples):
    sdf = sdf_loss(samples)
    return (0.0 if sdf is None else sdf) + occ_loss(samples)

