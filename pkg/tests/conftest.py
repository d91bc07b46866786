from __future__ import annotations

import math

import numpy as np
import pytest

from contactkam import barrier as B
from contactkam import critical as C
from contactkam.grid import build_cost_graph, build_grid, graph_from_edges
from contactkam.model import make_model

PI = math.pi
EPS_SWEEP = [0.2, 0.1, 0.05, 0.025, 0.0125]


def pendulum(**kw):
    return make_model("mechanical", 1, W=[1.0, -1.0], **kw)


def double_well(**kw):
    return make_model("mechanical", 1, W={"cos": [0.5, 0.0, -0.5]}, **kw)


def drift(**kw):
    return make_model("drift", 1, V=[1.5, 0.5], **kw)


def grid_graph(model, n=200, dt=0.05, vmax=3.0):
    return build_cost_graph(model, build_grid(model.dim, n, dt, vmax))


def two_node(lam=1.0):
    # nodes A=0, B=1
    return graph_from_edges(2, [(0, 0, 0.0), (0, 1, 1.0), (1, 1, 0.2), (1, 0, 1.0)], lam=lam)


class Bundle:
    """Graph plus the critical objects derived from it."""

    def __init__(self, graph):
        self.graph = graph
        self.c = C.critical_value_graph(graph)
        self.potential = C.critical_potential(graph, self.c)
        self._barrier = None
        self._measures = None

    @property
    def barrier(self):
        if self._barrier is None:
            self._barrier = B.peierls_matrix(self.graph, self.c)
        return self._barrier

    @property
    def measures(self):
        if self._measures is None:
            self._measures = C.enumerate_extreme_measures(self.graph, self.potential, self.c)
        return self._measures


@pytest.fixture(scope="session")
def pend():
    return Bundle(grid_graph(pendulum()))


@pytest.fixture(scope="session")
def dwell():
    return Bundle(grid_graph(double_well()))


@pytest.fixture(scope="session")
def drift_b():
    return Bundle(grid_graph(drift(lam=[1.5, 0.5])))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
