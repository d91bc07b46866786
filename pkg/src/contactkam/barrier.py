"""Mañé potential, Peierls barrier and Aubry classes on the cost graph.

The barrier is assembled from the potential through the Aubry set,
h(y, x) = min_{z in A} Phi(y, z) + Phi(z, x); :func:`liminf_check` evaluates
the long-time liminf of finite-step actions directly as an independent check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .critical import (_karp_min_mean, augmented_costs, default_tol, discrete_aubry, exact_aubry,
                       strict_tol)
from .errors import IterationLimit, NegativeCycle, Unreachable
from .grid import CostGraph, fmt


@dataclass
class BarrierMatrix:
    """h[y, x] (barrier) and phi[y, x] (Mañé potential) as dense arrays."""

    h: np.ndarray
    phi: np.ndarray
    aubry: np.ndarray
    c: float

    @property
    def num_nodes(self) -> int:
        return self.h.shape[0]

    def row(self, y: int) -> np.ndarray:
        """h(y, .), a discrete weak KAM solution."""
        return self.h[y]

    def d_c(self, a: int, b: int) -> float:
        return float(self.h[a, b] + self.h[b, a])

    def to_csv(self, path) -> None:
        N = self.num_nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "x", "h"])
            for y in range(N):
                for x in range(N):
                    w.writerow([y, x, fmt(self.h[y, x])])

    def rows_to_csv(self, path, graph: CostGraph, rows) -> None:
        """One column per requested y holding h(y, .) for plotting."""
        rows = [int(r) for r in rows]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{d}" for d in range(graph.dim)] + [f"h_{y}" for y in rows])
            for x in range(graph.num_nodes):
                w.writerow([fmt(v) for v in graph.coords[x]] + [fmt(self.h[y, x]) for y in rows])


def floored_costs(graph: CostGraph, c: float, tol_tight: float) -> np.ndarray:
    """Augmented costs with values in [-tol_tight, 0) raised to zero."""
    a = augmented_costs(graph, c).copy()
    a[(a < 0) & (a >= -tol_tight)] = 0.0
    return a


def _potential_costs(graph: CostGraph, c: float, tol_tight: float) -> np.ndarray:
    """Costs for the shortest-path pass.

    When c is the exact discrete critical value the raw costs have no
    negative cycle and only rounding-level negatives are cleared.  When c
    overshoots by less than the tolerance (e.g. the continuum value was
    supplied) the costs are floored at tol_tight.  Anything worse is an error.
    """
    stol = strict_tol(graph)
    raw = augmented_costs(graph, c)
    mean, _ = _karp_min_mean(graph, raw)
    floor = stol if mean >= -stol else tol_tight
    costs = floored_costs(graph, c, floor)
    mean, cyc = _karp_min_mean(graph, costs)
    if mean < -stol:
        total = float(np.sum(costs[cyc]))
        raise NegativeCycle(
            f"cycle of length {len(cyc)} with augmented cost {total:.3g} < 0; c is below critical")
    return costs


def finite_action(graph: CostGraph, c: float, k: int, y: int, x=None):
    """Minimal k-step path cost from y with edge costs c0 + c*dt.

    Returns the value at ``x`` (or the whole row when ``x`` is None).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    costs = augmented_costs(graph, c)
    vec = np.full(graph.num_nodes, np.inf)
    vec[y] = 0.0
    for _ in range(k):
        vec = kernels.minplus_step(vec, graph, costs)
    if x is None:
        return vec
    val = float(vec[x])
    if not np.isfinite(val):
        raise Unreachable(f"no {k}-step path from {y} to {x}")
    return val


def mane_potential(graph: CostGraph, c: float, tol_tight: float | None = None,
                   sources=None) -> np.ndarray:
    """All-pairs shortest paths phi[y, x] with floored augmented costs.

    Costs are reweighted by a potential p (Johnson's trick) so the
    Bellman-Ford pass runs on nonnegative reduced costs; zero-mean cycles
    then cannot keep relaxing by rounding noise.
    """
    tol_tight = default_tol(graph) if tol_tight is None else tol_tight
    costs = _potential_costs(graph, c, tol_tight)
    p = np.zeros(graph.num_nodes)
    for _ in range(graph.num_nodes + 1):
        nxt = np.minimum(p, kernels.minplus_step(p, graph, costs))
        if np.array_equal(nxt, p):
            break
        p = nxt
    reduced = np.maximum(costs + p[graph.src] - p[graph.dst], 0.0)
    src = np.arange(graph.num_nodes) if sources is None else np.asarray(sources)
    D, _, conv = kernels.bellman_ford_rows(graph, reduced, src, graph.num_nodes + 1)
    if not conv.all():
        raise IterationLimit("Bellman-Ford did not settle within N+1 rounds")
    return D - p[src][:, None] + p[None, :]


def peierls_matrix(graph: CostGraph, c: float, aubry=None,
                   tol_tight: float | None = None) -> BarrierMatrix:
    """Barrier through the Aubry set; ``aubry`` defaults to the exactly optimal nodes."""
    aubry = exact_aubry(graph) if aubry is None else np.asarray(aubry, dtype=np.int64)
    if len(aubry) == 0:
        raise ValueError("empty Aubry set")
    phi = mane_potential(graph, c, tol_tight)
    h = np.full_like(phi, np.inf)
    for z in aubry:
        np.minimum(h, phi[:, z][:, None] + phi[z][None, :], out=h)
    return BarrierMatrix(h=h, phi=phi, aubry=np.sort(aubry), c=float(c))


def liminf_check(graph: CostGraph, c: float, y: int, x, k_max: int, k_min: int | None = None):
    """min over k in [k_min, k_max] of the k-step action from y (at x, or the whole row).

    ``k_min`` defaults to the node count.  Short non-optimal loops can undercut
    the barrier at small k, so a late window is the faithful liminf in general.
    """
    N = graph.num_nodes
    k_min = N if k_min is None else int(k_min)
    if k_max < N or k_min > k_max:
        raise ValueError("need N <= k_min <= k_max")
    costs = augmented_costs(graph, c)
    vec = np.full(N, np.inf)
    vec[y] = 0.0
    best = np.full(N, np.inf)
    for k in range(1, k_max + 1):
        vec = kernels.minplus_step(vec, graph, costs)
        if k >= k_min:
            np.minimum(best, vec, out=best)
    return best if x is None else float(best[x])


def aubry_classes(barrier: BarrierMatrix, aubry, tol_class: float) -> list[np.ndarray]:
    """Partition of ``aubry`` by d_c(x, y) <= tol_class, ordered by smallest node."""
    nodes = np.sort(np.asarray(aubry, dtype=np.int64))
    if len(nodes) == 0:
        return []
    sub = barrier.h[np.ix_(nodes, nodes)]
    close = (sub + sub.T) <= tol_class
    count, labels = connected_components(csr_matrix(close), directed=False)
    classes = [nodes[labels == k] for k in range(count)]
    return sorted(classes, key=lambda a: int(a[0]))


def barrier_aubry(barrier: BarrierMatrix, tol: float) -> np.ndarray:
    """Nodes with h(x, x) <= tol."""
    return np.nonzero(np.diag(barrier.h) <= tol)[0]


def aubry_candidates(graph: CostGraph, barrier: BarrierMatrix, potential, c: float,
                     tol_tight: float | None = None, tol_class: float | None = None) -> np.ndarray:
    """Tight-cycle nodes that also satisfy h(x, x) <= tol_class."""
    tol_class = default_class_tol(graph) if tol_class is None else tol_class
    tight = discrete_aubry(graph, potential, c, tol_tight)
    return np.intersect1d(tight, barrier_aubry(barrier, tol_class))


def default_class_tol(graph: CostGraph) -> float:
    return 20.0 * graph.dx if graph.grid is not None else 1e-9


def solution_bound(barrier: BarrierMatrix) -> float:
    """K with |u_eps| <= K for every eps > 0.

    h(y, .) - min and h(y, .) - max are a super- and a subsolution of the
    implicit scheme for any y, so the oscillation of the flattest row bounds
    every solution.
    """
    rows = barrier.h[barrier.aubry]
    osc = rows.max(axis=1) - rows.min(axis=1)
    return float(osc.min())
