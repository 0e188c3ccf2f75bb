"""Submap scale graph: overlap ratios, relative-scale edges and the log-scale solve.

Unknowns are log-scales ``x_i = ln s_i``. The objective is

    F(x) = sum_e w_e (x_i - x_j - rho_e)^2 + lam * sum_i (x_i - prior_i)^2

where ``prior_i = ln s_i^(0)``. It is solved with Levenberg-Marquardt starting
from the median prior.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .anchors import lower_median

log = logging.getLogger(__name__)

W_MIN = 1e-3
N_REF_FRACTION = 0.1


class DimensionMismatch(ValueError):
    pass


class SingularSystem(ArithmeticError):
    pass


@dataclass(frozen=True)
class ScaleEdge:
    i: int
    j: int
    rho: float
    weight: float = 1.0
    valid_pixel_count: int = 0

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError("edge requires i < j")
        if not np.isfinite(self.rho):
            raise ValueError("edge log-ratio must be finite")
        if not (0.0 <= self.weight <= 1.0):
            raise ValueError("edge weight must lie in [0, 1]")


@dataclass(frozen=True)
class ScaleGraphProblem:
    priors: tuple
    edges: tuple = ()
    lam: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "priors", tuple(float(p) for p in self.priors))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(self.priors) < 1:
            raise ValueError("need at least one node")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not np.all(np.isfinite(self.priors)):
            raise ValueError("priors must be finite")
        for e in self.edges:
            if e.j >= self.node_count:
                raise ValueError(f"edge ({e.i}, {e.j}) references a missing node")

    @property
    def node_count(self):
        return len(self.priors)

    @classmethod
    def from_scales(cls, initial_scales, edges=(), lam=0.1):
        return cls(tuple(np.log(initial_scales)), edges, lam)

    def _arrays(self):
        ii = np.array([e.i for e in self.edges], dtype=np.int64)
        jj = np.array([e.j for e in self.edges], dtype=np.int64)
        rho = np.array([e.rho for e in self.edges], dtype=np.float64)
        w = np.array([e.weight for e in self.edges], dtype=np.float64)
        return ii, jj, rho, w

    def residuals(self, x):
        """Weighted residual vector r with F(x) = r . r."""
        ii, jj, rho, w = self._arrays()
        x = np.asarray(x, dtype=np.float64)
        edge_r = np.sqrt(w) * (x[ii] - x[jj] - rho)
        prior_r = np.sqrt(self.lam) * (x - np.asarray(self.priors))
        return np.concatenate([edge_r, prior_r])

    def jacobian(self):
        ii, jj, _, w = self._arrays()
        m = self.node_count
        jac = np.zeros((len(ii) + m, m))
        rows = np.arange(len(ii))
        jac[rows, ii] = np.sqrt(w)
        jac[rows, jj] = -np.sqrt(w)
        jac[len(ii):, :] = np.sqrt(self.lam) * np.eye(m)
        return jac

    def cost(self, x):
        r = self.residuals(x)
        return float(r @ r)

    def gradient(self, x):
        return 2.0 * self.jacobian().T @ self.residuals(x)


@dataclass(frozen=True)
class ScaleSolution:
    log_scales: np.ndarray
    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool = True
    scales: np.ndarray = field(init=False)

    def __post_init__(self):
        x = np.array(self.log_scales, dtype=np.float64)
        x.setflags(write=False)
        s = np.exp(x)
        s.setflags(write=False)
        object.__setattr__(self, "log_scales", x)
        object.__setattr__(self, "scales", s)


def overlap_ratios(d_i, d_j, validity):
    """Per-pixel ``d_i / d_j`` where both depths lie in ``[epsilon, d_max]``."""
    if d_i.shape != d_j.shape:
        raise DimensionMismatch(f"{d_i.shape} vs {d_j.shape}")
    both = validity.mask(d_i.values) & validity.mask(d_j.values)
    return d_i.values[both] / d_j.values[both]


@dataclass(frozen=True)
class EdgeEstimate:
    r: float
    weight: float
    valid_count: int


def edge_relative_scale(ratio_sets, pixels_per_frame, w_min=W_MIN):
    """Median relative scale over ratios pooled from all overlapping frames.

    Weight is the pixel support relative to a tenth of the overlap area,
    clamped to ``[w_min, 1]``. An empty pool gives ``r = 1`` at weight ``w_min``.
    """
    ratio_sets = [np.asarray(r, dtype=np.float64).ravel() for r in ratio_sets]
    pool = np.concatenate(ratio_sets) if ratio_sets else np.zeros(0)
    if pool.size == 0:
        return EdgeEstimate(1.0, w_min, 0)
    n_ref = N_REF_FRACTION * len(ratio_sets) * pixels_per_frame
    weight = float(np.clip(pool.size / n_ref, w_min, 1.0)) if n_ref > 0 else 1.0
    return EdgeEstimate(lower_median(pool), weight, int(pool.size))


def solve_scales(problem, max_iters=100, tol=1e-10, x0=None):
    """Levenberg-Marquardt on the log-scale objective.

    Damping starts at ``1e-4 * max(diag(J^T J))``, grows x10 on a rejected step
    and shrinks /3 on an accepted one. Only strictly cost-reducing steps are
    accepted. Stops once both the gradient max-norm and the last accepted
    step's max-norm drop below ``tol``.
    """
    jac = problem.jacobian()
    jtj = jac.T @ jac
    m = problem.node_count
    x = np.full(m, lower_median(problem.priors)) if x0 is None else np.array(x0, dtype=np.float64)

    r = problem.residuals(x)
    cost = float(r @ r)
    initial_cost = cost
    mu = 1e-4 * float(np.max(np.diag(jtj)))
    eye = np.eye(m)
    accepted_steps = 0
    last_step = np.inf
    for _ in range(max_iters):
        g = jac.T @ r
        # a small gradient alone bounds the error only by tol / lambda
        if np.max(np.abs(2.0 * g)) < tol and last_step < tol:
            break
        accepted = False
        while mu <= 1e30:
            try:
                step = np.linalg.solve(jtj + mu * eye, -g)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem(str(exc)) from exc
            # residuals are affine in x, so this is the exact cost change; unlike
            # cost_new - cost it does not cancel to noise near the optimum
            jstep = jac @ step
            delta = float(2.0 * g @ step + jstep @ jstep)
            if delta < 0:
                x = x + step
                last_step = float(np.max(np.abs(step)))
                r = problem.residuals(x)
                cost = float(r @ r)
                mu /= 3.0
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            # no representable descent left
            break
        accepted_steps += 1
    converged = bool(np.max(np.abs(2.0 * jac.T @ r)) < tol)
    if not converged:
        log.warning("scale solve stopped after %d steps above tol=%g", accepted_steps, tol)
    return ScaleSolution(x, initial_cost, cost, accepted_steps, converged)


def apply_scales(submap_depths, submaps, solution):
    """Scale each keyframe's prediction by its submap's optimised scale.

    ``submap_depths[m][t]`` is the prediction of submap ``m`` for its ``t``-th
    keyframe. A keyframe covered by several submaps takes the first one.
    Returns one DepthMap per keyframe position.
    """
    if len(solution.scales) < len(submaps):
        raise ValueError("solution does not cover every submap")
    out = {}
    for sm, depths in zip(submaps, submap_depths):
        for pos, depth in zip(sm.positions, depths):
            if pos not in out:
                out[pos] = depth.scaled(float(solution.scales[sm.index]))
    return [out[p] for p in sorted(out)]


def dump_graph(path, problem, solution):
    """Write ``i j r weight count`` per edge then ``i s0 s_star`` per node."""
    with open(path, "w") as fh:
        for e in problem.edges:
            fh.write(f"{e.i} {e.j} {np.exp(e.rho):.9g} {e.weight:.9g} {e.valid_pixel_count}\n")
        for i, (p, s) in enumerate(zip(problem.priors, solution.scales)):
            fh.write(f"{i} {np.exp(p):.9g} {s:.9g}\n")
