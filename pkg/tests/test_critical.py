from __future__ import annotations

import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactkam import critical as C
from contactkam.errors import IterationLimit, NotSubsolution
from contactkam.grid import build_grid, graph_from_edges
from contactkam.model import make_model

from conftest import PI, grid_graph, pendulum


def brute_min_mean(num_nodes, edges):
    """Exhaustive minimum over simple cycles (parallel edges reduced to the cheapest)."""
    best = {}
    for i, j, c in edges:
        best[(i, j)] = min(c, best.get((i, j), np.inf))
    G = nx.DiGraph()
    G.add_nodes_from(range(num_nodes))
    for (i, j), c in best.items():
        G.add_edge(i, j, w=c)
    out = np.inf
    for cyc in nx.simple_cycles(G):
        pairs = zip(cyc, cyc[1:] + cyc[:1])
        out = min(out, sum(G[a][b]["w"] for a, b in pairs) / len(cyc))
    return out


def random_graph(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 13))
    edges = []
    for i in range(N):
        for j in range(N):
            if rng.random() < 0.3:
                edges.append((i, j, float(rng.normal())))
    # a Hamiltonian cycle keeps the graph strongly connected
    perm = rng.permutation(N)
    for a, b in zip(perm, np.roll(perm, -1)):
        edges.append((int(a), int(b), float(rng.normal())))
    return N, edges


# ---------------------------------------------------------------- Karp

def test_karp_single_loop():
    mean, cyc = C.karp_min_mean_cycle(graph_from_edges(1, [(0, 0, 0.4)]))
    assert mean == pytest.approx(0.4)
    assert cyc == [0]


def test_karp_two_cycle():
    mean, cyc = C.karp_min_mean_cycle(graph_from_edges(2, [(0, 1, -1.0), (1, 0, 0.5)]))
    assert mean == pytest.approx(-0.25)
    assert sorted(cyc) == [0, 1]


def test_karp_prefers_loop():
    g = graph_from_edges(2, [(0, 1, 1.0), (1, 0, 3.0), (1, 1, 1.5)])
    mean, cyc = C.karp_min_mean_cycle(g)
    assert mean == pytest.approx(1.5)
    assert cyc == [1]


@pytest.mark.parametrize("seed", range(40))
def test_karp_and_circulation_match_enumeration(seed):
    N, edges = random_graph(seed)
    g = graph_from_edges(N, edges)
    ref = brute_min_mean(N, edges)
    mean, cyc = C.karp_min_mean_cycle(g)
    assert mean == pytest.approx(ref, abs=1e-9)
    mu = C.mather_measure_circulation(g)
    mu.check()
    assert mu.objective() == pytest.approx(ref, abs=1e-9)


def test_karp_handles_graph_that_is_not_strongly_connected():
    g = graph_from_edges(4, [(0, 1, 5.0), (1, 0, 5.0), (1, 2, 0.0), (2, 3, -1.0), (3, 2, 0.0)])
    mean, _ = C.karp_min_mean_cycle(g)
    assert mean == pytest.approx(-0.5)


def test_value_iteration_brackets_karp(pend):
    lo, hi = C.value_iteration_bounds(pend.graph, 400)
    assert lo - 1e-12 <= pend.c <= hi + 1e-12


# ---------------------------------------------------------------- critical values

def test_constant_potential_exact():
    m = make_model("mechanical", 1, W=0.7)
    assert C.critical_value(m, build_grid(1, 200, 0.05, 3.0)) == pytest.approx(-0.7, abs=1e-9)


def test_pendulum_critical_value(pend):
    assert abs(pend.c) <= 2e-2


def test_drift_critical_value(drift_b):
    assert abs(drift_b.c) <= 2e-2


# ---------------------------------------------------------------- tight graph

def test_pendulum_tight_loops(pend):
    g = pend.graph
    mask = C.tight_subgraph(g, pend.potential, pend.c)
    assert mask[g.edge_index(0, 0)]
    top = g.grid.nearest_node([PI])
    assert not mask[g.edge_index(top, top)]
    r = C.reduced_costs(g, pend.potential, pend.c)
    assert r[g.edge_index(top, top)] == pytest.approx(g.dt * 2.0, rel=1e-12)


def test_constant_w_all_loops_tight():
    g = grid_graph(make_model("mechanical", 1, W=0.7), n=50)
    c = C.critical_value_graph(g)
    mask = C.tight_subgraph(g, C.critical_potential(g, c), c)
    assert all(mask[g.edge_index(i, i)] for i in range(g.num_nodes))


def test_not_subsolution_raises(pend):
    bad = pend.potential.copy()
    bad[5] += 1.0
    with pytest.raises(NotSubsolution):
        C.tight_subgraph(pend.graph, bad, pend.c)


def test_critical_potential_is_subsolution(pend, dwell, drift_b):
    for b in (pend, dwell, drift_b):
        r = C.reduced_costs(b.graph, b.potential, b.c)
        assert r.min() >= -C.strict_tol(b.graph)


def test_aubry_sets(pend, dwell, drift_b):
    assert list(C.exact_aubry(pend.graph)) == [0]
    assert 0 in C.discrete_aubry(pend.graph, pend.potential, pend.c)
    ex = C.exact_aubry(dwell.graph)
    assert list(ex) == [0, 100]
    # loose set: loops with dt*W(x) <= tol, i.e. |x| <= arccos(1 - tol/dt)
    g = pend.graph
    loose = C.discrete_aubry(g, pend.potential, pend.c)
    xs = g.coords[loose, 0]
    reach = math.acos(1 - C.default_tol(g) / g.dt) + g.dx
    assert np.all(np.minimum(xs, 2 * PI - xs) <= reach)
    assert len(C.discrete_aubry(drift_b.graph, drift_b.potential, drift_b.c)) == drift_b.graph.num_nodes


# ---------------------------------------------------------------- measures

def test_pendulum_measure_is_rest_point(pend):
    mu = C.mather_measure_karp(pend.graph)
    assert list(mu.support_edges) == [pend.graph.edge_index(0, 0)]
    mu.check()
    circ = C.mather_measure_circulation(pend.graph)
    assert circ.objective() == pytest.approx(mu.objective(), abs=1e-12)


def test_constant_w_measure_first_node():
    g = grid_graph(make_model("mechanical", 1, W=0.7), n=50)
    mu = C.mather_measure_karp(g)
    assert len(mu.support_edges) == 1
    assert g.src[mu.support_edges[0]] == g.dst[mu.support_edges[0]]


def test_double_well_circulation_objective(dwell):
    circ = C.mather_measure_circulation(dwell.graph)
    assert circ.objective() == pytest.approx(-dwell.c * dwell.graph.dt, abs=1e-9)


def test_drift_measure_marginal_follows_inverse_speed():
    # fine velocity resolution dx/dt = 0.157 so the cycle can follow V
    g = grid_graph(make_model("drift", 1, V=[1.5, 0.5]), n=400, dt=0.1)
    mu = C.mather_measure_karp(g)
    mu.check()
    # a closed orbit: total displacement is a whole number of turns
    turns = float(mu.weights @ g.disp[:, 0]) * len(mu.support_edges) / (2 * PI)
    assert turns >= 1 and abs(turns - round(turns)) < 1e-9
    # compare binned marginals against the density proportional to 1/V
    x = g.coords[:, 0]
    V = 1.5 + 0.5 * np.cos(x)
    bins = 10
    idx = (x // (2 * PI / bins)).astype(int)
    got = np.bincount(idx, weights=mu.marginal, minlength=bins)
    dens = (1 / V) / (1 / V).sum()
    want = np.bincount(idx, weights=dens, minlength=bins)
    assert np.abs(got - want).max() < 0.02


def test_enumerated_measures(pend, dwell, drift_b):
    assert len(pend.measures) == 1
    assert len(dwell.measures) == 2
    assert len(drift_b.measures) == 1
    for b in (pend, dwell, drift_b):
        for mu in b.measures:
            mu.check()
            assert mu.objective() == pytest.approx(-b.c * b.graph.dt, abs=1e-9)
            assert mu.closedness_defect() <= 3 * b.graph.dx


def test_circulation_iteration_limit():
    # start from a bad cycle so at least one cancellation is needed
    g = graph_from_edges(3, [(0, 0, 1.0), (0, 1, 0.0), (1, 2, 0.0), (2, 0, 0.0), (1, 1, 0.5)])
    start = C.DiscreteMeasure.on_cycle(g, [g.edge_index(0, 0)])
    with pytest.raises(IterationLimit):
        C.mather_measure_circulation(g, start=start, max_cancel=0)
    out = C.mather_measure_circulation(g, start=start)
    assert out.objective() == pytest.approx(0.0)


def test_measure_csv(tmp_path, pend):
    mu = C.mather_measure_karp(pend.graph)
    mu.to_csv(tmp_path / "m.csv")
    mu.marginal_to_csv(tmp_path / "mm.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == ["i,j,weight", "0,0,1"]
    assert len((tmp_path / "mm.csv").read_text().splitlines()) == pend.graph.num_nodes + 1


# ---------------------------------------------------------------- properties

@st.composite
def edge_lists(draw):
    N = draw(st.integers(1, 7))
    costs = st.floats(-5, 5, allow_nan=False)
    edges = [(i, (i + 1) % N, draw(costs)) for i in range(N)]
    extra = draw(st.lists(st.tuples(st.integers(0, N - 1), st.integers(0, N - 1), costs),
                          max_size=12))
    return N, edges + extra


@settings(max_examples=100, deadline=None)
@given(edge_lists())
def test_circulation_never_beats_karp(data):
    N, edges = data
    g = graph_from_edges(N, edges)
    mean, _ = C.karp_min_mean_cycle(g)
    obj = C.mather_measure_circulation(g).objective()
    assert obj <= mean + 1e-12
    assert obj >= mean - 1e-9
    assert mean == pytest.approx(brute_min_mean(N, edges), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(edge_lists(), st.floats(-3, 3))
def test_shifted_costs_shift_the_mean(data, s):
    N, edges = data
    m0, _ = C.karp_min_mean_cycle(graph_from_edges(N, edges))
    m1, _ = C.karp_min_mean_cycle(graph_from_edges(N, [(i, j, c + s) for i, j, c in edges]))
    assert m1 == pytest.approx(m0 + s, abs=1e-9)


def test_action_gap_first_order():
    # refine dx at fixed dt; the velocity quantum dx/dt shrinks with it
    gaps = []
    for n in (100, 200, 400):
        g = grid_graph(make_model("drift", 1, V=[1.5, 0.5]), n=n, dt=0.1)
        gaps.append(abs(C.mather_measure_karp(g).objective() / g.dt))
    assert gaps[0] / gaps[1] >= 2.0 and gaps[1] / gaps[2] >= 2.0
