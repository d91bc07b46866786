"""Compare the compiled and numpy kernels on the hot loops.

    python benchmarks/bench_kernels.py [--n 400] [--repeat 3] [--threads 1]

Each kernel runs on both backends; the script checks that the outputs are
bit-identical and prints the best wall time and the speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from contactkam import kernels
from contactkam.critical import augmented_costs, critical_value_graph
from contactkam.grid import build_cost_graph, build_grid
from contactkam.model import make_model


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and bool(np.array_equal(a, b, equal_nan=a.dtype.kind == "f"))
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    model = make_model("mechanical", 1, W=[1.0, -1.0], coupling="saturating", kappa=0.5)
    # dt scales with dx so the stencil keeps the same number of offsets
    graph = build_cost_graph(model, build_grid(1, args.n, 0.05 * 200 / args.n, 3.0))
    c = critical_value_graph(graph)
    costs = augmented_costs(graph, c)
    nonneg = np.maximum(costs, 0.0)
    kernels.set_threads(args.threads)

    cases = {
        "contact_iterate (eps=0.05)": lambda: kernels.contact_iterate(
            np.zeros(graph.num_nodes), graph, c, 0.05, 1e-10, 10**6),
        "karp_table": lambda: kernels.karp_table(graph, graph.base_cost, 0),
        "bellman_ford_rows (all pairs)": lambda: kernels.bellman_ford_rows(
            graph, nonneg, np.arange(graph.num_nodes), graph.num_nodes + 1),
    }
    backends = kernels.available_backends()
    print(f"N = {graph.num_nodes}, E = {graph.num_edges}, backends = {backends}, "
          f"threads = {args.threads}")
    print(f"{'kernel':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  identical")
    for name, fn in cases.items():
        times, outs = {}, {}
        for b in backends:
            with kernels.use_backend(b):
                times[b], outs[b] = _best(fn, args.repeat)
        if "cython" in times:
            same = _same(outs["python"], outs["cython"])
            print(f"{name:32s} {times['python']:11.4f} {times['cython']:11.4f} "
                  f"{times['python'] / times['cython']:8.1f}  {same}")
        else:
            print(f"{name:32s} {times['python']:11.4f} {'-':>11s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
