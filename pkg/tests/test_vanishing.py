from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from contactkam import barrier as B
from contactkam import critical as C
from contactkam import vanishing as VN
from contactkam.errors import EmptyMeasureList
from contactkam.grid import graph_from_edges
from contactkam.model import make_model
from contactkam.weakkam import solve_contact, subsolution_defect

from conftest import EPS_SWEEP, PI, grid_graph, pendulum, two_node

TWO_NODE_EPS = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 0.0005, 0.00025]


def test_sweep_validates_eps():
    g = two_node()
    for bad in ([], [0.1, 0.1], [0.1, 0.2], [0.1, -0.1]):
        with pytest.raises(ValueError):
            VN.sweep(g, 0.0, bad)


def test_single_eps_sweep():
    sw = VN.sweep(two_node(), 0.0, [0.1])
    assert sw.gaps == []
    assert np.array_equal(sw.u0_direct, sw.fields[0].values)


def test_two_node_closed_form_family():
    g = two_node()
    sw = VN.sweep(g, 0.0, TWO_NODE_EPS)
    for e, f in zip(sw.eps, sw.fields):
        assert f.values[1] == pytest.approx(min(0.2 / e, 1 / (1 + e)), abs=1e-9)
    assert np.abs(sw.u0_direct - np.array([0.0, 1.0])).max() <= 1e-6


def test_richardson_exact_for_linear_family():
    eps = [0.3, 0.2, 0.1]
    fields = [np.array([1.0 + 2 * e, -e]) for e in eps]
    assert np.allclose(VN.richardson_limit(eps, fields), [1.0, 0.0], atol=1e-14)


def test_warm_start_same_limit(pend):
    eps = [0.2, 0.1, 0.05]
    cold = VN.sweep(pend.graph, pend.c, eps)
    warm = VN.sweep(pend.graph, pend.c, eps, warm_start=True)
    assert np.abs(cold.u0_direct - warm.u0_direct).max() <= 1e-8


def test_pendulum_gap_ratios(pend):
    sw = VN.sweep(pend.graph, pend.c, EPS_SWEEP)
    r = sw.gap_ratios()
    assert all(0.4 <= x <= 0.6 for x in r)
    assert subsolution_defect(sw.u0_direct, pend.graph, pend.c) <= C.default_tol(pend.graph)


# ---------------------------------------------------------------- selection

def test_atomic_measure_returns_row(dwell):
    g, bm = dwell.graph, dwell.barrier
    mu = C.DiscreteMeasure.on_cycle(g, [g.edge_index(0, 0)])
    for w in (None, VN.coupling_weights(g), np.linspace(-1, -3, g.num_nodes)):
        assert np.allclose(VN.measure_average(bm, mu, w), bm.row(0), atol=1e-14)


def test_two_atoms_pointwise_min(dwell):
    g, bm = dwell.graph, dwell.barrier
    atoms = [C.DiscreteMeasure.on_cycle(g, [g.edge_index(y, y)]) for y in (0, 100)]
    rep = VN.selection_inf(bm, atoms, g)
    assert np.array_equal(rep.u0_hat, np.minimum(bm.row(0), bm.row(100)))
    assert rep.to_dict() == {"measures": 2, "weighted": True}


def test_empty_measure_list(pend):
    with pytest.raises(EmptyMeasureList):
        VN.selection_inf(pend.barrier, [], pend.graph)


def test_weights_negative_on_support(dwell):
    g = dwell.graph
    w = VN.coupling_weights(g)
    for mu in dwell.measures:
        assert np.all(w[mu.support_nodes] <= -g.delta)


def test_two_point_weighted_gap():
    # both nodes on zero-cost loops: a two-point "Aubry set"
    lamA, lamB, a, b = 1.0, 3.0, 1.0, 2.0
    g = graph_from_edges(2, [(0, 0, 0.0), (1, 1, 0.0), (0, 1, a), (1, 0, b)], lam=[lamA, lamB])
    bm = B.peierls_matrix(g, 0.0, aubry=[0, 1])
    w = np.zeros(g.num_edges)
    w[[g.edge_index(0, 0), g.edge_index(1, 1)]] = 0.5
    mu = C.DiscreteMeasure(g, w)
    unweighted = VN.selection_inf(bm, [mu], g, weighted=False).u0_hat
    weighted = VN.selection_inf(bm, [mu], g, weighted=True).u0_hat
    # h = [[0, a], [b, 0]]
    assert np.allclose(unweighted, [b / 2, a / 2])
    assert np.allclose(weighted, [lamB * b / (lamA + lamB), lamA * a / (lamA + lamB)])
    assert np.abs(weighted - unweighted).max() == pytest.approx(0.5, abs=1e-12)


def test_discounted_formulas_coincide(pend, dwell, drift_b):
    for b in (pend, dwell):
        w = VN.selection_inf(b.barrier, b.measures, b.graph, weighted=True).u0_hat
        u = VN.selection_inf(b.barrier, b.measures, b.graph, weighted=False).u0_hat
        assert np.abs(w - u).max() <= 1e-12


def test_drift_weights_make_marginal_uniform(drift_b):
    g = drift_b.graph
    mu = drift_b.measures[0]
    wm = -VN.coupling_weights(g) * mu.marginal
    support = wm > 0
    # lam = V and mu ~ 1/V: the product is flat up to the velocity quantum
    assert wm[support].std() / wm[support].mean() < 0.5


def test_u0_hat_is_subsolution(pend, dwell):
    for b in (pend, dwell):
        u0 = VN.selection_inf(b.barrier, b.measures, b.graph).u0_hat
        assert subsolution_defect(u0, b.graph, b.c) <= C.default_tol(b.graph)


# ---------------------------------------------------------------- constraints

def test_constraint_examples(pend):
    g = pend.graph
    zero = VN.constraint_check(np.zeros(g.num_nodes), pend.measures, g, pend.c, 1e-9, 1e-9)
    assert zero["I"] == [0.0]
    assert zero["member"]
    one = VN.constraint_check(np.ones(g.num_nodes), pend.measures, g, pend.c, 1e-9, 1e-9)
    assert one["I"] == [pytest.approx(-1.0)]
    assert not one["member"]


def test_pendulum_limit_membership(pend):
    sw = VN.sweep(pend.graph, pend.c, EPS_SWEEP)
    scale = np.abs(sw.u0_direct).max()
    res = VN.constraint_check(sw.u0_direct, pend.measures, pend.graph, pend.c,
                              1e-3 * scale, C.default_tol(pend.graph))
    assert res["member"]
    u0_hat = VN.selection_inf(pend.barrier, pend.measures, pend.graph).u0_hat
    for y, omega in VN.witness_subsolutions(pend.barrier, pend.measures, u0_hat):
        assert np.all(omega <= sw.u0_direct + 5e-2)


def test_monotone_in_lambda_on_pendulum():
    g1 = grid_graph(pendulum(), n=100)
    g2 = grid_graph(pendulum(lam=[1.5, 0.5]), n=100)
    c = C.critical_value_graph(g1)
    for eps in (0.2, 0.05):
        u1 = solve_contact(g1, c, eps).values
        u2 = solve_contact(g2, c, eps).values
        assert u1.min() >= -1e-9
        assert np.all(u2 <= u1 + 1e-9)


# ---------------------------------------------------------------- occupation

def test_occupation_basic(pend):
    g = pend.graph
    eps = 0.05
    u = solve_contact(g, pend.c, eps)
    occ = VN.occupation_measure(u, g, pend.c, eps, g.grid.nearest_node([PI / 2]))
    assert occ.measure.mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(occ.measure.weights >= 0)
    # the raw weights integrate eps*exp(-eps*lam*t) over a long horizon
    assert occ.raw_mass == pytest.approx(1.0, abs=0.01)
    # constant test functions have zero gradient, so a closed measure only needs the flux term
    assert occ.closedness == occ.measure.closedness_defect()


def test_occupation_trend(pend):
    g = pend.graph
    start = g.grid.nearest_node([PI / 2])
    gaps, closed = [], []
    for eps in EPS_SWEEP:
        u = solve_contact(g, pend.c, eps)
        occ = VN.occupation_measure(u, g, pend.c, eps, start)
        gaps.append(occ.action_gap)
        closed.append(occ.closedness)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert all(b < a for a, b in zip(closed, closed[1:]))
    assert gaps[-1] <= 5e-2 and closed[-1] <= 5e-2


def test_alpha_saturating_matches_integral():
    m = make_model("mechanical", 1, W=[1.0, -1.0], coupling="saturating", kappa=0.8)
    g = grid_graph(m, n=20, dt=0.5)
    u = np.linspace(-3, 3, g.num_nodes)
    eps = 0.3
    nodes = np.arange(g.num_nodes)
    got = VN._alpha(g, nodes, u, eps)
    taus = np.linspace(0, 1, 20001)
    for j in (0, 5, 13):
        want = trapezoid(_slope_at(g, j, taus * eps * u[j]), taus)
        assert got[j] == pytest.approx(want, abs=1e-6)


def _slope_at(g, j, s):
    """dL/du at node j for coupling values s."""
    s2 = s * s
    return -g.lam[j] - g.kappa * (s2 * s2 + 3 * s2) / ((1 + s2) ** 2)


# ---------------------------------------------------------------- comparison

def test_compare_rejects_different_l0(pend, dwell):
    with pytest.raises(ValueError):
        VN.compare_discounted_contact(pend.graph, dwell.graph, 0.0, [0.1], pend.barrier,
                                      pend.measures, 1.0)


def test_compare_on_pendulum_atomic(pend):
    gF = pend.graph
    gG = grid_graph(pendulum(lam=[1.0, 0.5]))
    rep, sF, sG = VN.compare_discounted_contact(gF, gG, pend.c, [0.05, 0.025, 0.0125],
                                                pend.barrier, pend.measures, 1.0)
    assert rep.norms["formula_unweighted|formula_weighted"] <= 1e-12
    assert rep.norms["u_F_direct|formula_weighted"] <= 5e-2
    assert rep.norms["u_G_direct|formula_weighted"] <= 5e-2
    assert rep.summary()["verdict"] == "no gap detected"


def test_wide_csv(tmp_path):
    g = two_node()
    sw = VN.sweep(g, 0.0, [0.1, 0.05])
    VN.write_wide_csv(tmp_path / "w.csv", g, sw, {"extra": np.array([1.0, 2.0])})
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "x0,u_eps_0.10000000000000001,u_eps_0.050000000000000003,u0_direct,extra"
    assert len(lines) == 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 3.0), min_size=2, max_size=2),
       st.lists(st.floats(0.0, 3.0), min_size=2, max_size=2))
def test_selection_formula_bounds(lams, costs):
    # a weighted average of barrier rows lies between their pointwise min and max
    g = graph_from_edges(2, [(0, 0, 0.0), (1, 1, 0.0), (0, 1, costs[0]), (1, 0, costs[1])],
                         lam=lams)
    bm = B.peierls_matrix(g, 0.0, aubry=[0, 1])
    w = np.zeros(g.num_edges)
    w[[g.edge_index(0, 0), g.edge_index(1, 1)]] = 0.5
    avg = VN.measure_average(bm, C.DiscreteMeasure(g, w), VN.coupling_weights(g))
    assert np.all(avg >= bm.h.min(axis=0) - 1e-12)
    assert np.all(avg <= bm.h.max(axis=0) + 1e-12)
