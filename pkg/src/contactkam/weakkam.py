"""Implicit backward Lax-Oleinik operator and the contact fixed point.

At node j the update solves the scalar equation

    w = min_i [u_i + c0_ij] + c*dt + dt*g(x_j, eps*w)

where only the coupling term involves w.  Since dg/du < 0 the right-hand
side is decreasing in w, so the root is unique and bisection is monotone.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractionViolated, NoConvergence, NonFiniteState
from .grid import CostGraph, fmt

BISECTION_TOL = 1e-13


@dataclass
class ValueField:
    values: np.ndarray
    eps: float = 0.0
    iterations: int = 0
    final_change: float = 0.0
    changes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)

    def sup(self) -> float:
        return float(np.abs(self.values).max(initial=0.0))

    def contraction_ratios(self) -> np.ndarray:
        ch = np.asarray(self.changes)
        ok = ch[:-1] > 0
        return ch[1:][ok] / ch[:-1][ok]

    def to_csv(self, path, graph: CostGraph) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{d}" for d in range(graph.dim)] + ["u"])
            for i in range(graph.num_nodes):
                w.writerow([fmt(v) for v in graph.coords[i]] + [fmt(self.values[i])])


def _values(u) -> np.ndarray:
    return np.asarray(getattr(u, "values", u), dtype=float)


def check_contraction(graph: CostGraph, eps: float) -> None:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps > 0 and eps * graph.slope_max * graph.dt >= 1.0:
        raise ContractionViolated(
            f"eps*Delta'*dt = {eps * graph.slope_max * graph.dt:.4g} >= 1")


def lax_oleinik_step(u, graph: CostGraph, c: float, eps: float) -> ValueField:
    """One Jacobi application of the implicit operator (plain min-plus at eps=0)."""
    check_contraction(graph, eps)
    out = kernels.contact_sweep(_values(u), graph, c, eps, BISECTION_TOL)
    return ValueField(out, eps=eps, iterations=1)


def solve_contact(graph: CostGraph, c: float, eps: float, tol_fix: float = 1e-10,
                  max_iter: int = 1_000_000, u0=None) -> ValueField:
    """Fixed point of the implicit operator, iterated from ``u0`` (default 0)."""
    if not eps > 0:
        raise ValueError("solve_contact needs eps > 0")
    check_contraction(graph, eps)
    start = np.zeros(graph.num_nodes) if u0 is None else _values(u0)
    u, it, changes = kernels.contact_iterate(start, graph, c, eps, tol_fix, max_iter,
                                             BISECTION_TOL)
    final = float(changes[-1]) if len(changes) else 0.0
    if not np.isfinite(u).all() or final != final:
        raise NonFiniteState("non-finite value during the contact iteration")
    if final > tol_fix:
        raise NoConvergence(
            f"sup-change {final:.3g} > {tol_fix:.3g} after {it} iterations at eps={eps}")
    return ValueField(u, eps=eps, iterations=int(it), final_change=final, changes=changes)


def _arrival(u, graph: CostGraph):
    """Per target node: best incoming edge (smallest source on ties) and its value."""
    vals = _values(u)
    cand = vals[graph.src] + graph.base_cost
    best = np.full(graph.num_nodes, -1, dtype=np.int64)
    for j in range(graph.num_nodes):
        lo, hi = graph.in_ptr[j], graph.in_ptr[j + 1]
        if hi > lo:
            best[j] = lo + int(np.argmin(cand[lo:hi]))
    return best, cand


def backward_calibrated_path(u, graph: CostGraph, c: float, eps: float, start: int,
                             steps: int) -> list[int]:
    """Greedy predecessor chain start <- i1 <- i2 ... of length ``steps``.

    The coupling term at the target does not depend on the predecessor, so
    the argmin only involves u_i + c0_ij.  A warning is issued when the
    chosen edge sits on the stencil boundary.
    """
    best, _ = _arrival(u, graph)
    radius = graph.stencil_radius
    path = [int(start)]
    node = int(start)
    saturated = False
    for _ in range(steps):
        e = int(best[node])
        if graph.grid is not None and np.linalg.norm(graph.disp[e]) >= radius * (1 - 1e-12) > 0:
            saturated = True
        node = int(graph.src[e])
        path.append(node)
    if saturated:
        warnings.warn("calibrated path uses the largest stencil velocity; consider a larger vmax",
                      RuntimeWarning, stacklevel=2)
    return path


def calibration_defects(u, graph: CostGraph, c: float, eps: float, path) -> np.ndarray:
    """|u_j - u_i - dt*L(x_j, v_ij, eps*u_j) - c*dt| along consecutive path nodes."""
    vals = _values(u)
    out = []
    for j, i in zip(path[:-1], path[1:]):
        e = graph.edge_index(i, j)
        uu = eps * vals[j]
        g = -graph.lam[j] * uu - graph.kappa * uu ** 3 / (1.0 + uu * uu)
        cost = graph.base_cost[e] + graph.dt * g + c * graph.dt
        out.append(abs(vals[j] - vals[i] - cost))
    return np.array(out)


def subsolution_defect(u, graph: CostGraph, c: float) -> float:
    """max over edges of u_j - u_i - c0_ij - c*dt (<= 0 for exact subsolutions)."""
    vals = _values(u)
    return float(np.max(vals[graph.dst] - vals[graph.src] - graph.base_cost - c * graph.dt))


def lipschitz_estimate(u, graph: CostGraph) -> float:
    """max over non-loop edges of |u_j - u_i| / |d_ij|."""
    vals = _values(u)
    length = np.sqrt((graph.disp ** 2).sum(axis=1))
    m = length > 0
    if not m.any():
        return 0.0
    return float(np.max(np.abs(vals[graph.dst[m]] - vals[graph.src[m]]) / length[m]))


def lipschitz_bound(graph: CostGraph, c: float, sup_bound: float, eps_max: float = 1.0) -> float:
    """Bound on the discrete Lipschitz constant of any eps-solution with |u| <= sup_bound.

    Each edge i -> j gives u_j - u_i <= dt*(L0 + |g| + |c|) and the reverse
    edge j -> i gives the other inequality; |g(x, eps*u)| <= Delta'*eps*|u|.
    """
    length = np.sqrt((graph.disp ** 2).sum(axis=1))
    m = length > 0
    if not m.any():
        return 0.0
    rev = np.array([graph.edge_index(int(j), int(i)) for i, j in zip(graph.src[m], graph.dst[m])])
    fwd = graph.base_cost[m]
    back = np.where(rev >= 0, graph.base_cost[np.maximum(rev, 0)], np.inf)
    slack = graph.dt * (abs(c) + graph.slope_max * eps_max * sup_bound)
    return float(np.max((np.maximum(fwd, back) + slack) / length[m]))
