"""The eps -> 0 sweep and the selection formulas for its limit.

The limit of u_eps is characterised in two ways: as the largest critical
subsolution u with sum_y u(y) dL/du(y, v(y), 0) mu(y) >= 0 for every Mather
measure mu, and as the pointwise infimum over Mather measures of the
weighted barrier averages h_mu(x).  Both are evaluated here on the graph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .barrier import BarrierMatrix
from .critical import DiscreteMeasure
from .errors import EmptyMeasureList
from .grid import CostGraph, fmt
from .weakkam import (ValueField, _values, backward_calibrated_path, check_contraction,
                      lipschitz_estimate, solve_contact)


@dataclass
class SweepResult:
    eps: list[float]
    fields: list[ValueField]
    gaps: list[float]
    u0_direct: np.ndarray
    u_smallest: np.ndarray
    lipschitz: list[float]
    sups: list[float]

    def gap_ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.gaps[:-1], self.gaps[1:]) if a > 0]


def richardson_limit(eps, fields) -> np.ndarray:
    """Per-node least-squares line through (eps_k, u_k) over the given points; returns the intercept."""
    e = np.asarray(eps, dtype=float)
    U = np.stack([_values(f) for f in fields])
    if len(e) == 1:
        return U[0].copy()
    A = np.stack([np.ones_like(e), e], axis=1)
    coef, *_ = np.linalg.lstsq(A, U, rcond=None)
    return coef[0]


def sweep(graph: CostGraph, c: float, eps_list, tol_fix: float = 1e-10,
          max_iter: int = 1_000_000, warm_start: bool = False, fit_points: int = 3) -> SweepResult:
    """Solve the contact equation for each eps (strictly decreasing) and extrapolate."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("empty eps list")
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be positive and strictly decreasing")
    for e in eps_list:
        check_contraction(graph, e)
    fields = []
    prev = None
    for e in eps_list:
        u = solve_contact(graph, c, e, tol_fix, max_iter, u0=prev if warm_start else None)
        fields.append(u)
        prev = u
    gaps = [float(np.abs(a.values - b.values).max()) for a, b in zip(fields[:-1], fields[1:])]
    k = min(fit_points, len(fields))
    u0 = richardson_limit(eps_list[-k:], fields[-k:])
    return SweepResult(eps=eps_list, fields=fields, gaps=gaps, u0_direct=u0,
                       u_smallest=fields[-1].values.copy(),
                       lipschitz=[lipschitz_estimate(f, graph) for f in fields],
                       sups=[f.sup() for f in fields])


# ---------------------------------------------------------------- selection

def coupling_weights(graph: CostGraph) -> np.ndarray:
    """w(y) = dL/du(y, v, 0) = -lam(y); independent of v for these couplings."""
    return -graph.lam


@dataclass
class SelectionReport:
    fields: list[np.ndarray]
    u0_hat: np.ndarray
    weighted: bool
    argmin: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self) -> dict:
        return {"measures": len(self.fields), "weighted": self.weighted}


def measure_average(barrier: BarrierMatrix, mu: DiscreteMeasure, weights: np.ndarray | None):
    """h_mu(x) = sum_y h(y, x) w(y) mu(y) / sum_y w(y) mu(y)."""
    m = mu.marginal
    wm = m if weights is None else weights * m
    support = np.nonzero(m > 0)[0]
    return (wm[support] @ barrier.h[support]) / wm[support].sum()


def selection_inf(barrier: BarrierMatrix, measures, graph: CostGraph,
                  weighted: bool = True) -> SelectionReport:
    """Pointwise minimum over measures of the (weighted) barrier averages."""
    measures = list(measures)
    if not measures:
        raise EmptyMeasureList("no Mather measures supplied")
    w = coupling_weights(graph) if weighted else None
    fields = [measure_average(barrier, mu, w) for mu in measures]
    stack = np.stack(fields)
    return SelectionReport(fields=fields, u0_hat=stack.min(axis=0), weighted=weighted,
                           argmin=stack.argmin(axis=0))


def constraint_values(u, measures, graph: CostGraph) -> list[float]:
    """I_mu = sum_y u(y) dL/du(y, v(y), 0) mu(y) for each measure."""
    vals = _values(u)
    w = coupling_weights(graph)
    return [float(np.sum(vals * w * mu.marginal)) for mu in measures]


def constraint_check(u, measures, graph: CostGraph, c: float, tol_con: float,
                     tol_sub: float) -> dict:
    from .weakkam import subsolution_defect

    I = constraint_values(u, measures, graph)
    defect = subsolution_defect(u, graph, c)
    return {"I": I, "defect": defect,
            "member": bool(all(v >= -tol_con for v in I) and defect <= tol_sub)}


def witness_subsolutions(barrier: BarrierMatrix, measures, u0_hat: np.ndarray):
    """omega_y(x) = -phi(x, y) + u0_hat(y) for y in each measure's support."""
    out = []
    seen = set()
    for mu in measures:
        for y in mu.support_nodes:
            if int(y) in seen:
                continue
            seen.add(int(y))
            out.append((int(y), -barrier.phi[:, y] + u0_hat[y]))
    return out


# ---------------------------------------------------------------- occupation

@dataclass
class OccupationMeasure:
    measure: DiscreteMeasure
    raw_mass: float
    path: list[int]
    closedness: float
    action_gap: float


def _alpha(graph: CostGraph, nodes: np.ndarray, u: np.ndarray, eps: float) -> np.ndarray:
    """int_0^1 dL/du(y, v, tau eps u) dtau = g(y, eps u) / (eps u)."""
    lam = graph.lam[nodes]
    s = eps * u[nodes]
    if not graph.kappa:
        return -lam
    with np.errstate(invalid="ignore", divide="ignore"):
        sat = np.where(s != 0, s * s / (1.0 + s * s), 0.0)
    return -lam - graph.kappa * sat


def occupation_measure(u, graph: CostGraph, c: float, eps: float, start: int,
                       horizon: int | None = None) -> OccupationMeasure:
    """Discounted occupation measure of the backward calibrated path from ``start``.

    The edge traversed during [-k dt, -(k-1) dt] gets weight
    eps*dt*exp(eps * sum of alpha*dt from its midpoint to 0); alpha < 0 so
    the weights decay into the past.
    """
    vals = _values(u)
    if horizon is None:
        horizon = int(np.ceil(10.0 / (eps * graph.delta * graph.dt)))
    path = backward_calibrated_path(vals, graph, c, eps, start, horizon)
    nodes = np.asarray(path)
    a = _alpha(graph, nodes, vals, eps)
    abar = 0.5 * (a[:-1] + a[1:])
    acc = np.concatenate([[0.0], np.cumsum(abar)[:-1]]) + 0.5 * abar
    w_step = eps * graph.dt * np.exp(eps * graph.dt * acc)
    weights = np.zeros(graph.num_edges)
    for k in range(len(nodes) - 1):
        e = graph.edge_index(int(nodes[k + 1]), int(nodes[k]))
        weights[e] += w_step[k]
    raw = float(weights.sum())
    mu = DiscreteMeasure(graph, weights / raw)
    return OccupationMeasure(measure=mu, raw_mass=raw, path=path,
                             closedness=mu.closedness_defect(), action_gap=mu.action_gap(c))


# ---------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    fields: dict
    norms: dict
    gap_tol: float
    gap_detected: bool

    def summary(self) -> dict:
        return {"norms": self.norms, "gap_tol": self.gap_tol,
                "gap_detected": self.gap_detected,
                "verdict": "gap detected" if self.gap_detected else "no gap detected"}


def compare_discounted_contact(graphF: CostGraph, graphG: CostGraph, c: float, eps_list,
                               barrier: BarrierMatrix, measures, gap_tol: float,
                               tol_fix: float = 1e-10, max_iter: int = 1_000_000):
    """Direct limits for the discounted (F) and general (G) couplings against both formulas.

    The two graphs must share their base costs.
    """
    if not np.array_equal(graphF.base_cost, graphG.base_cost):
        raise ValueError("the two models must share L0")
    sF = sweep(graphF, c, eps_list, tol_fix, max_iter)
    sG = sweep(graphG, c, eps_list, tol_fix, max_iter)
    unweighted = selection_inf(barrier, measures, graphG, weighted=False).u0_hat
    weighted = selection_inf(barrier, measures, graphG, weighted=True).u0_hat
    fields = {"u_F_direct": sF.u0_direct, "u_G_direct": sG.u0_direct,
              "formula_unweighted": unweighted, "formula_weighted": weighted}
    names = list(fields)
    norms = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            norms[f"{a}|{b}"] = float(np.abs(fields[a] - fields[b]).max())
    for a in names:
        norms[f"{a}|zero"] = float(np.abs(fields[a]).max())
    pair = [v for k, v in norms.items() if not k.endswith("|zero")]
    report = ComparisonReport(fields=fields, norms=norms, gap_tol=gap_tol,
                              gap_detected=bool(max(pair) > gap_tol))
    return report, sF, sG


def write_wide_csv(path, graph: CostGraph, sw: SweepResult, extra: dict) -> None:
    """Columns x..., u_eps_k for each eps, u0_direct, then the ``extra`` fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = [f"x{d}" for d in range(graph.dim)]
        head += [f"u_eps_{fmt(e)}" for e in sw.eps] + ["u0_direct"] + list(extra)
        w.writerow(head)
        for i in range(graph.num_nodes):
            row = [fmt(v) for v in graph.coords[i]]
            row += [fmt(f.values[i]) for f in sw.fields] + [fmt(sw.u0_direct[i])]
            row += [fmt(v[i]) for v in extra.values()]
            w.writerow(row)
