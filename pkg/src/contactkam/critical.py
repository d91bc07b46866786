"""Discrete critical value, tight subgraph, Aubry set and Mather measures.

On the cost graph the critical value is minus the minimum cycle mean of the
base costs divided by dt.  Mather measures are unit-mass circulations that
attain that mean; the extreme ones are uniform measures on optimal simple
cycles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import kernels
from .errors import IterationLimit, NotSubsolution
from .grid import CostGraph, TorusGrid, build_cost_graph, fmt
from .model import LagrangianModel


def default_tol(graph: CostGraph) -> float:
    """Loose tolerance 10*dx*dt on grid graphs; 1e-9 on abstract graphs."""
    if graph.grid is None:
        return 1e-9
    return 10.0 * graph.dx * graph.dt


def strict_tol(graph: CostGraph) -> float:
    """Rounding-level tolerance used to identify exactly optimal cycles."""
    scale = float(np.max(np.abs(graph.base_cost))) if graph.num_edges else 1.0
    return 1e-9 * max(1.0, scale)


def _values(potential) -> np.ndarray:
    return np.asarray(getattr(potential, "values", potential), dtype=float)


@dataclass
class DiscreteMeasure:
    """Nonnegative edge weights of total mass one on a cost graph."""

    graph: CostGraph
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @classmethod
    def on_cycle(cls, graph: CostGraph, edges) -> "DiscreteMeasure":
        w = np.zeros(graph.num_edges)
        edges = list(edges)
        np.add.at(w, edges, 1.0 / len(edges))
        return cls(graph, w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def marginal(self) -> np.ndarray:
        """Node marginal mu_i = sum of outgoing weight."""
        return np.bincount(self.graph.src, weights=self.weights, minlength=self.graph.num_nodes)

    @property
    def support_edges(self) -> np.ndarray:
        return np.nonzero(self.weights > 0)[0]

    @property
    def support_nodes(self) -> np.ndarray:
        return np.nonzero(self.marginal > 0)[0]

    def mean_velocity(self) -> np.ndarray:
        """Outgoing mean velocity per node, NaN off the support."""
        g = self.graph
        mu = self.marginal
        out = np.full((g.num_nodes, g.dim), np.nan)
        for d in range(g.dim):
            flux = np.bincount(g.src, weights=self.weights * g.velocity[:, d], minlength=g.num_nodes)
            with np.errstate(invalid="ignore", divide="ignore"):
                out[:, d] = np.where(mu > 0, flux / np.where(mu > 0, mu, 1.0), np.nan)
        return out

    def objective(self) -> float:
        """Sum of m_e * base_cost_e, i.e. dt times the mean action."""
        return float(self.weights @ self.graph.base_cost)

    def action_gap(self, c: float) -> float:
        """Integral of L0 against the measure plus c."""
        return self.objective() / self.graph.dt + c

    def conservation_defect(self) -> float:
        g = self.graph
        inflow = np.bincount(g.dst, weights=self.weights, minlength=g.num_nodes)
        return float(np.abs(inflow - self.marginal).max(initial=0.0))

    def closedness_defect(self, harmonics: int = 3) -> float:
        """max over test functions cos/sin(k x_d) of |sum_e m_e <grad phi(x_i), v_e>|."""
        g = self.graph
        x = g.coords[g.src]
        vel = g.velocity
        worst = 0.0
        for d in range(g.dim):
            for k in range(1, harmonics + 1):
                for dphi in (-k * np.sin(k * x[:, d]), k * np.cos(k * x[:, d])):
                    worst = max(worst, abs(float(np.sum(self.weights * dphi * vel[:, d]))))
        return worst

    def check(self, atol_mass: float = 1e-12, atol_flow: float = 1e-10) -> None:
        if (self.weights < 0).any():
            raise ValueError("negative edge weight")
        if abs(self.mass - 1.0) > atol_mass:
            raise ValueError(f"mass {self.mass} != 1")
        if self.conservation_defect() > atol_flow:
            raise ValueError("flow is not conserved")

    def support_key(self) -> tuple[int, ...]:
        return tuple(int(e) for e in self.support_edges)

    def to_csv(self, path) -> None:
        g = self.graph
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "weight"])
            for e in self.support_edges:
                w.writerow([int(g.src[e]), int(g.dst[e]), fmt(self.weights[e])])

    def marginal_to_csv(self, path) -> None:
        g = self.graph
        mu = self.marginal
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{d}" for d in range(g.dim)] + ["mu"])
            for i in range(g.num_nodes):
                w.writerow([fmt(v) for v in g.coords[i]] + [fmt(mu[i])])


# ---------------------------------------------------------------- Karp

def _karp_component(graph: CostGraph, costs: np.ndarray, source: int):
    """Karp on the edges with finite cost reachable from ``source``.

    Returns (mean, cycle edge indices) or (inf, []) when no cycle exists.
    """
    N = graph.num_nodes
    D, P = kernels.karp_table(graph, costs, source)
    last = D[N]
    ok = np.isfinite(last)
    if not ok.any():
        return np.inf, []
    k = np.arange(N)[:, None]
    with np.errstate(invalid="ignore"):
        ratio = (last[None, :] - D[:N]) / (N - k)
    ratio[~np.isfinite(D[:N])] = -np.inf
    worst = ratio.max(axis=0)
    worst[~ok] = np.inf
    v = int(np.argmin(worst))
    # walk the optimal N-edge walk backwards until a node repeats
    seen = {v: N}
    walk_edges = []
    node, step = v, N
    while True:
        e = int(P[step, node])
        walk_edges.append(e)
        node = int(graph.src[e])
        step -= 1
        if node in seen:
            first = seen[node]
            cyc = walk_edges[len(walk_edges) - (first - step):]
            cyc.reverse()
            return float(np.sum(costs[cyc]) / len(cyc)), cyc
        seen[node] = step


def _components(graph: CostGraph, mask: np.ndarray | None = None):
    """Strongly connected components that carry at least one cycle."""
    sel = np.ones(graph.num_edges, dtype=bool) if mask is None else mask
    _, labels = connected_components(graph.adjacency(sel), directed=True, connection="strong")
    inside = sel & (labels[graph.src] == labels[graph.dst])
    comps = []
    for lab in np.unique(labels[graph.src[inside]]):
        nodes = np.nonzero(labels == lab)[0]
        edges = np.nonzero(inside & (labels[graph.src] == lab))[0]
        comps.append((nodes, edges))
    return comps


def _cycle_nodes(graph: CostGraph, cycle_edges) -> list[int]:
    return [int(graph.src[e]) for e in cycle_edges]


def _karp_min_mean(graph: CostGraph, costs: np.ndarray, mask: np.ndarray | None = None):
    best_mean, best_cycle = np.inf, []
    for nodes, edges in _components(graph, mask):
        if len(nodes) == 1:
            e = int(edges[np.argmin(costs[edges])])
            mean, cyc = float(costs[e]), [e]
        else:
            restricted = np.full(graph.num_edges, np.inf)
            restricted[edges] = costs[edges]
            mean, cyc = _karp_component(graph, restricted, int(nodes[0]))
        if mean < best_mean:
            best_mean, best_cycle = mean, cyc
    return best_mean, best_cycle


def karp_min_mean_cycle(graph: CostGraph) -> tuple[float, list[int]]:
    """Minimum cycle mean of the base costs and a cycle attaining it.

    Every strongly connected component is handled separately with Karp's
    recurrence, so graphs that are not strongly connected are fine too.
    """
    mean, cyc = _karp_min_mean(graph, graph.base_cost)
    return mean, _cycle_nodes(graph, cyc)


def critical_value_graph(graph: CostGraph) -> float:
    mean, _ = _karp_min_mean(graph, graph.base_cost)
    return -mean / graph.dt


def critical_value(model: LagrangianModel, grid: TorusGrid) -> float:
    return critical_value_graph(build_cost_graph(model, grid))


def value_iteration_bounds(graph: CostGraph, iterations: int | None = None) -> tuple[float, float]:
    """Bracket of c from undiscounted min-plus value iteration.

    With u_{k+1} = min_i (u_k(i) + c0_ij), min_j and max_j of the increment
    bound the minimum cycle mean from below and above.
    """
    iterations = iterations or 4 * graph.num_nodes
    u = np.zeros(graph.num_nodes)
    lo, hi = -np.inf, np.inf
    for _ in range(iterations):
        nxt = kernels.minplus_step(u, graph, graph.base_cost)
        inc = nxt - u
        lo, hi = max(lo, float(inc.min())), min(hi, float(inc.max()))
        u = nxt - nxt.min()
    return -hi / graph.dt, -lo / graph.dt


# ---------------------------------------------------------------- tight graph

def augmented_costs(graph: CostGraph, c: float) -> np.ndarray:
    return graph.base_cost + c * graph.dt


def reduced_costs(graph: CostGraph, potential, c: float) -> np.ndarray:
    u = _values(potential)
    return augmented_costs(graph, c) + u[graph.src] - u[graph.dst]


def critical_potential(graph: CostGraph, c: float | None = None) -> np.ndarray:
    """A discrete subsolution: shortest-path distances from a node on an optimal cycle."""
    mean, cyc = _karp_min_mean(graph, graph.base_cost)
    if c is None:
        c = -mean / graph.dt
    src = np.array([int(graph.src[cyc[0]])])
    D, _, _ = kernels.bellman_ford_rows(graph, augmented_costs(graph, c), src,
                                        graph.num_nodes + 1)
    return D[0]


def tight_subgraph(graph: CostGraph, potential, c: float, tol_tight: float | None = None,
                   tol_sub: float | None = None) -> np.ndarray:
    """Boolean mask of edges whose reduced cost is at most ``tol_tight``."""
    tol_tight = default_tol(graph) if tol_tight is None else tol_tight
    tol_sub = default_tol(graph) if tol_sub is None else tol_sub
    r = reduced_costs(graph, potential, c)
    worst = float(-r.min())
    if not np.isfinite(worst) or worst > tol_sub:
        raise NotSubsolution(f"potential violates the subsolution inequality by {worst:.3g}")
    return r <= tol_tight


def discrete_aubry(graph: CostGraph, potential, c: float, tol: float | None = None,
                   tol_sub: float | None = None) -> np.ndarray:
    """Sorted nodes lying on a cycle of the tight subgraph."""
    mask = tight_subgraph(graph, potential, c, tol, tol_sub)
    nodes = [n for n, _ in _components(graph, mask)]
    return np.sort(np.concatenate(nodes)) if nodes else np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------------- measures

def mather_measure_karp(graph: CostGraph, c: float | None = None) -> DiscreteMeasure:
    """Uniform measure on the Karp witness cycle."""
    _, cyc = _karp_min_mean(graph, graph.base_cost)
    return DiscreteMeasure.on_cycle(graph, cyc)


def _negative_residual_cycle(graph: CostGraph, weights: np.ndarray, obj: float, eps: float):
    """Bellman-Ford on the residual graph with reduced costs c_e - obj.

    Forward arcs exist for every edge, backward arcs for edges carrying
    weight.  Returns a list of (edge, direction) or None.
    """
    r = graph.base_cost - obj
    back = np.nonzero(weights > 0)[0]
    a_src = np.concatenate([graph.src, graph.dst[back]])
    a_dst = np.concatenate([graph.dst, graph.src[back]])
    a_cost = np.concatenate([r, -r[back]])
    a_edge = np.concatenate([np.arange(graph.num_edges), back])
    a_dir = np.concatenate([np.ones(graph.num_edges, dtype=np.int8),
                            -np.ones(len(back), dtype=np.int8)])
    N = graph.num_nodes
    d = np.zeros(N)
    pred = np.full(N, -1, dtype=np.int64)
    for _ in range(N + 1):
        cand = d[a_src] + a_cost
        order = np.lexsort((cand, a_dst))
        first = np.ones(len(order), dtype=bool)
        first[1:] = a_dst[order[1:]] != a_dst[order[:-1]]
        best = order[first]
        nodes = a_dst[best]
        improve = cand[best] < d[nodes] - eps
        if not improve.any():
            return None
        d[nodes[improve]] = cand[best[improve]]
        pred[nodes[improve]] = best[improve]
        last_changed = int(nodes[improve][0])
    # follow predecessors into the cycle
    node = last_changed
    for _ in range(N):
        node = int(a_src[pred[node]])
    cycle, start = [], node
    while True:
        arc = int(pred[node])
        cycle.append(arc)
        node = int(a_src[arc])
        if node == start:
            break
    cycle.reverse()
    total = float(np.sum(a_cost[cycle]))
    if total >= -eps:
        return None
    return [(int(a_edge[a]), int(a_dir[a])) for a in cycle]


def mather_measure_circulation(graph: CostGraph, c: float | None = None,
                               start: DiscreteMeasure | None = None,
                               max_cancel: int | None = None) -> DiscreteMeasure:
    """Minimum-cost unit circulation by cycle canceling.

    A residual cycle whose reduced costs (c_e - current mean) sum to a
    negative number strictly lowers the mean after augmentation and
    renormalization; none remaining certifies optimality.
    """
    meas = start if start is not None else mather_measure_karp(graph)
    w = meas.weights.copy()
    limit = 10 * graph.num_edges if max_cancel is None else max_cancel
    eps = 1e-13 * max(1.0, float(np.abs(graph.base_cost).max()))
    count = 0
    while True:
        obj = float(w @ graph.base_cost)
        cyc = _negative_residual_cycle(graph, w, obj, eps)
        if cyc is None:
            break
        if count >= limit:
            raise IterationLimit(f"cycle canceling exceeded {limit} augmentations")
        count += 1
        back = [e for e, s in cyc if s < 0]
        if not back:
            w = DiscreteMeasure.on_cycle(graph, [e for e, _ in cyc]).weights
            continue
        theta = min(w[e] for e in back)
        for e, s in cyc:
            w[e] += s * theta
        for e in back:
            if w[e] <= theta * 1e-12:
                w[e] = 0.0
        w = np.maximum(w, 0.0)
        w /= w.sum()
    out = DiscreteMeasure(graph, w)
    out.cancellations = count
    return out


def _elementary_cycles(graph: CostGraph, mask: np.ndarray, max_len: int, cap: int):
    """Bounded DFS for simple cycles of the masked subgraph, smallest node first."""
    out_edges = [[] for _ in range(graph.num_nodes)]
    for e in np.nonzero(mask)[0]:
        out_edges[int(graph.src[e])].append(int(e))
    found = []
    for s in sorted({int(v) for v in graph.src[mask]}):
        stack = [(s, iter(out_edges[s]))]
        path_edges: list[int] = []
        on_path = {s}
        while stack:
            node, it = stack[-1]
            e = next(it, None)
            if e is None:
                stack.pop()
                if path_edges:
                    on_path.discard(node)
                    path_edges.pop()
                continue
            t = int(graph.dst[e])
            if t == s:
                found.append(path_edges + [e])
                if len(found) >= cap:
                    return found
            elif t > s and t not in on_path and len(path_edges) + 1 < max_len:
                path_edges.append(e)
                on_path.add(t)
                stack.append((t, iter(out_edges[t])))
    return found


def enumerate_extreme_measures(graph: CostGraph, potential, c: float,
                               tol_tight: float | None = None, tol_sub: float | None = None,
                               cap: int = 64) -> list[DiscreteMeasure]:
    """Optimal cycle measures, one per tight component plus DFS extras.

    Karp runs inside each strongly connected component of the tight
    subgraph; a component contributes only if its best mean is optimal.
    Extra simple cycles come from a bounded DFS over the exactly optimal
    edges.  The list is deduplicated by support.
    """
    mask = tight_subgraph(graph, potential, c, tol_tight, tol_sub)
    stol = strict_tol(graph)
    mstar, _ = _karp_min_mean(graph, graph.base_cost)
    measures: list[DiscreteMeasure] = []
    keys = set()

    def add(cyc):
        m = DiscreteMeasure.on_cycle(graph, cyc)
        key = m.support_key()
        if key not in keys:
            keys.add(key)
            measures.append(m)

    for nodes, edges in _components(graph, mask):
        sub = np.zeros(graph.num_edges, dtype=bool)
        sub[edges] = True
        mean, cyc = _karp_min_mean(graph, graph.base_cost, sub)
        if cyc and mean <= mstar + stol:
            add(cyc)
    exact = reduced_costs(graph, critical_potential(graph), -mstar / graph.dt) <= stol
    n = graph.grid.n if graph.grid is not None else graph.num_nodes
    for cyc in _elementary_cycles(graph, exact, 2 * n, cap):
        if len(keys) >= cap:
            break
        if np.sum(graph.base_cost[cyc]) / len(cyc) <= mstar + stol:
            add(cyc)
    return measures


def exact_aubry(graph: CostGraph) -> np.ndarray:
    """Nodes on exactly optimal cycles (rounding-level tolerance)."""
    mstar, _ = _karp_min_mean(graph, graph.base_cost)
    c = -mstar / graph.dt
    u = critical_potential(graph, c)
    tol = strict_tol(graph)
    return discrete_aubry(graph, u, c, tol=tol, tol_sub=tol)
