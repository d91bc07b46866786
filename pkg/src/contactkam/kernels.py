"""Backend selection for the inner loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``CONTACTKAM_PURE_PYTHON=1`` is set, the numpy fallback
is used.  Both produce identical floats.
"""

from __future__ import annotations

import contextlib
import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_FORCE_PURE = os.environ.get("CONTACTKAM_PURE_PYTHON", "").lower() in ("1", "true", "yes")

_state = {
    "impl": _pykernels if (_FORCE_PURE or _ckernels is None) else _ckernels,
    "threads": 1,
}


def backend_name() -> str:
    return "cython" if _state["impl"] is _ckernels else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def set_threads(n: int) -> None:
    _state["threads"] = max(1, int(n))


def get_threads() -> int:
    return _state["threads"]


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch backends (used by tests and the benchmark)."""
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        impl = _ckernels
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(name)
    saved = _state["impl"]
    _state["impl"] = impl
    try:
        yield
    finally:
        _state["impl"] = saved


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def contact_sweep(u, graph, c, eps, tol=1e-13):
    return _state["impl"].contact_sweep(
        _f(u), _i(graph.in_ptr), _i(graph.src), _f(graph.base_cost), _f(graph.lam),
        float(graph.kappa), float(eps), float(graph.dt), float(c), tol, _state["threads"])


def contact_iterate(u0, graph, c, eps, tol_fix, max_iter, tol=1e-13):
    return _state["impl"].contact_iterate(
        _f(u0), _i(graph.in_ptr), _i(graph.src), _f(graph.base_cost), _f(graph.lam),
        float(graph.kappa), float(eps), float(graph.dt), float(c), float(tol_fix),
        int(max_iter), tol, _state["threads"])


def minplus_step(vec, graph, costs):
    return _state["impl"].minplus_step(_f(vec), _i(graph.in_ptr), _i(graph.src), _f(costs),
                                       _state["threads"])


def karp_table(graph, costs, source):
    return _state["impl"].karp_table(int(graph.num_nodes), _i(graph.in_ptr), _i(graph.src),
                                     _f(costs), int(source), _state["threads"])


def bellman_ford_rows(graph, costs, sources, max_rounds):
    return _state["impl"].bellman_ford_rows(
        _i(sources), int(graph.num_nodes), _i(graph.in_ptr), _i(graph.src), _f(costs),
        int(max_rounds), _state["threads"])
