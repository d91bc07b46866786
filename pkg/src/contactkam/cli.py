"""Command line front end.

    contactkam [--threads N] [--dump-graph] <command> <config.json>

Each run writes <command>_<hash>.json (and usually a .csv) into the output
directory, where <hash> is the first 12 hex digits of the SHA-256 of the
canonical resolved config.  Exit status 2 flags a configuration error and 3
a numeric failure; in the latter case the JSON carries the error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import barrier as B
from . import critical as C
from . import vanishing as Vn
from . import weakkam as K
from .config import build_graph, build_model, config_hash, load_config
from .errors import BadGrid, ConfigError, ContactKAMError, NumericFailure
from .grid import CostGraph, fmt
from .model import make_model, validate_model

COMMANDS = ("validate", "critical", "solve", "barrier", "mather", "vanish", "compare")
OUTPUT_ENV = "CONTACTKAM_OUTPUT_DIR"


def _clean(obj):
    """Convert numpy scalars/arrays to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class Run:
    """Shared state for one command invocation."""

    def __init__(self, cfg: dict, command: str, outdir: Path):
        self.cfg = cfg
        self.command = command
        self.outdir = outdir
        self.stem = f"{command}_{config_hash(cfg)}"
        self.model = build_model(cfg) if "model" in cfg else None
        self.graph = build_graph(cfg, self.model)
        self._c = None
        self._barrier = None
        self._potential = None

    # lazily computed critical objects -------------------------------------------------
    @property
    def c(self) -> float:
        if self._c is None:
            self._c = C.critical_value_graph(self.graph)
        return self._c

    @property
    def potential(self) -> np.ndarray:
        if self._potential is None:
            self._potential = C.critical_potential(self.graph, self.c)
        return self._potential

    @property
    def barrier(self) -> B.BarrierMatrix:
        if self._barrier is None:
            self._barrier = B.peierls_matrix(self.graph, self.c,
                                             tol_tight=self.solver.get("tol_tight"))
        return self._barrier

    @property
    def solver(self) -> dict:
        return self.cfg["solver"]

    @property
    def options(self) -> dict:
        return self.cfg["options"]

    def tol(self, name: str) -> float:
        if name in self.solver:
            return float(self.solver[name])
        if name == "tol_class":
            return B.default_class_tol(self.graph)
        if name == "tol_con":
            return 1e-3
        return C.default_tol(self.graph)

    def node(self, coords) -> int:
        if self.graph.grid is None:
            return int(coords[0])
        return self.graph.grid.nearest_node(coords)

    def start_node(self) -> int:
        if "start_node" in self.options:
            return int(self.options["start_node"])
        if "start" in self.options:
            return self.node(self.options["start"])
        return 0

    def measures(self):
        return C.enumerate_extreme_measures(self.graph, self.potential, self.c,
                                            self.tol("tol_tight"), self.tol("tol_sub"))

    def classes(self):
        cand = B.aubry_candidates(self.graph, self.barrier, self.potential, self.c,
                                  self.tol("tol_tight"), self.tol("tol_class"))
        return cand, B.aubry_classes(self.barrier, cand, self.tol("tol_class"))

    def sweep(self, graph: CostGraph | None = None):
        return Vn.sweep(graph or self.graph, self.c, self.cfg["eps_list"],
                        self.solver["tol_fix"], self.solver["max_iter"],
                        self.solver.get("warm_start", False))

    # output ------------------------------------------------------------------------------
    def path(self, suffix: str) -> Path:
        return self.outdir / f"{self.stem}{suffix}"

    def write_json(self, payload: dict) -> Path:
        doc = {"command": self.command, "version": __version__, "config": self.cfg}
        doc.update(payload)
        p = self.path(".json")
        with open(p, "w") as fh:
            json.dump(_clean(doc), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return p


def _class_summary(run: Run, classes) -> list[dict]:
    out = []
    for cl in classes:
        xs = run.graph.coords[cl]
        out.append({"size": len(cl), "nodes": cl, "x_min": xs.min(axis=0), "x_max": xs.max(axis=0)})
    return out


# ---------------------------------------------------------------- commands

def cmd_validate(run: Run) -> dict:
    out = {"num_nodes": run.graph.num_nodes, "num_edges": run.graph.num_edges}
    if run.model is not None:
        out["model_report"] = validate_model(run.model).to_dict()
        out["stencil"] = [list(s) for s in run.graph.grid.stencil()]
    loops = run.graph.is_loop
    out["self_loops_everywhere"] = bool(np.all(np.bincount(run.graph.src[loops],
                                                           minlength=run.graph.num_nodes) > 0))
    from .grid import is_strongly_connected
    out["strongly_connected"] = is_strongly_connected(run.graph)
    return out


def cmd_critical(run: Run) -> dict:
    mean, cycle = C.karp_min_mean_cycle(run.graph)
    mu = C.mather_measure_karp(run.graph)
    mu.marginal_to_csv(run.path(".csv"))
    out = {"c": run.c, "karp_mean": mean, "cycle": cycle, "cycle_length": len(cycle),
           "action_gap": mu.action_gap(run.c)}
    if run.options.get("value_iteration"):
        lo, hi = C.value_iteration_bounds(run.graph)
        out["value_iteration"] = {"c_lower": lo, "c_upper": hi}
    return out


def cmd_solve(run: Run) -> dict:
    eps = float(run.options.get("eps", run.cfg["eps_list"][-1]))
    u = K.solve_contact(run.graph, run.c, eps, run.solver["tol_fix"], run.solver["max_iter"])
    u.to_csv(run.path(".csv"), run.graph)
    start = run.start_node()
    steps = int(run.options.get("path_steps", 20))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        path = K.backward_calibrated_path(u, run.graph, run.c, eps, start, steps)
    defects = K.calibration_defects(u, run.graph, run.c, eps, path)
    return {"c": run.c, "eps": eps, "iterations": u.iterations, "final_change": u.final_change,
            "sup": u.sup(), "lipschitz": K.lipschitz_estimate(u, run.graph),
            "subsolution_defect": K.subsolution_defect(u, run.graph, run.c),
            "calibrated_path": path, "max_calibration_defect": float(defects.max(initial=0.0)),
            "stencil_saturated": bool(caught)}


def cmd_barrier(run: Run) -> dict:
    bm = run.barrier
    bm.to_csv(run.path(".csv"))
    cand, classes = run.classes()
    N = run.graph.num_nodes
    k_max = int(run.options.get("liminf_factor", 4)) * N
    pairs = []
    for y_c, x_c in run.options.get("pairs", []):
        y, x = run.node(y_c), run.node(x_c)
        pairs.append({"y": y, "x": x, "h": bm.h[y, x], "phi": bm.phi[y, x],
                      "liminf": B.liminf_check(run.graph, run.c, y, x, k_max)})
    return {"c": run.c, "aubry_exact": bm.aubry, "aubry_candidates": len(cand),
            "classes": _class_summary(run, classes), "num_classes": len(classes),
            "sup_bound": B.solution_bound(bm), "pairs": pairs}


def cmd_mather(run: Run) -> dict:
    measures = run.measures()
    circ = C.mather_measure_circulation(run.graph, run.c)
    rows = []
    summary = []
    for k, mu in enumerate(measures + [circ]):
        label = "circulation" if k == len(measures) else f"extreme_{k}"
        for e in mu.support_edges:
            rows.append([label, int(run.graph.src[e]), int(run.graph.dst[e]), fmt(mu.weights[e])])
        summary.append({"label": label, "support_edges": len(mu.support_edges),
                        "support_nodes": mu.support_nodes, "objective": mu.objective(),
                        "action_gap": mu.action_gap(run.c), "mass": mu.mass,
                        "conservation_defect": mu.conservation_defect(),
                        "closedness_defect": mu.closedness_defect()})
    with open(run.path(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["measure", "i", "j", "weight"])
        w.writerows(rows)
    return {"c": run.c, "num_extreme": len(measures), "measures": summary,
            "cancellations": circ.cancellations}


def cmd_vanish(run: Run) -> dict:
    g = run.graph
    sw = run.sweep()
    measures = run.measures()
    bm = run.barrier
    weighted = Vn.selection_inf(bm, measures, g, weighted=True)
    unweighted = Vn.selection_inf(bm, measures, g, weighted=False)
    norm_u0 = float(np.abs(sw.u0_direct).max())
    check = Vn.constraint_check(sw.u0_direct, measures, g, run.c,
                                run.tol("tol_con") * max(norm_u0, 1e-300), run.tol("tol_sub"))
    witnesses = Vn.witness_subsolutions(bm, measures, weighted.u0_hat)
    excess = max(float((om - sw.u0_direct).max()) for _, om in witnesses)
    K_bound = B.solution_bound(bm)
    Vn.write_wide_csv(run.path(".csv"), g, sw,
                      {"u0_formula_weighted": weighted.u0_hat,
                       "u0_formula_unweighted": unweighted.u0_hat})
    out = {
        "c": run.c, "eps": sw.eps, "gaps": sw.gaps, "gap_ratios": sw.gap_ratios(),
        "iterations": [f.iterations for f in sw.fields], "sups": sw.sups,
        "lipschitz": sw.lipschitz, "sup_bound": K_bound,
        "lipschitz_bound": K.lipschitz_bound(g, run.c, K_bound),
        "num_measures": len(measures),
        "selection_gap_weighted": float(np.abs(sw.u0_direct - weighted.u0_hat).max()),
        "selection_gap_unweighted": float(np.abs(sw.u0_direct - unweighted.u0_hat).max()),
        "constraint": check, "witness_max_excess": excess, "u0_norm": norm_u0,
    }
    if g.grid is not None:
        _, classes = run.classes()
        out["num_classes"] = len(classes)
    if run.options.get("occupation") and g.grid is not None:
        start = run.start_node()
        occ = []
        for f in sw.fields:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                om = Vn.occupation_measure(f, g, run.c, f.eps, start, run.options.get("horizon"))
            occ.append({"eps": f.eps, "closedness": om.closedness, "action_gap": om.action_gap,
                        "raw_mass": om.raw_mass})
        out["occupation"] = {"start": start, "per_eps": occ}
    return out


def cmd_compare(run: Run) -> dict:
    if run.model is None:
        raise ConfigError("compare needs a model/grid config")
    m = run.model
    F = make_model(family=m.family, dim=m.dim, W=m.W, V=m.V, lam=1.0)
    gF = build_graph(run.cfg, F)
    gG = run.graph
    c = C.critical_value_graph(gF)
    bm = B.peierls_matrix(gF, c, tol_tight=run.solver.get("tol_tight"))
    measures = C.enumerate_extreme_measures(gF, C.critical_potential(gF, c), c,
                                            run.tol("tol_tight"), run.tol("tol_sub"))
    gap_tol = float(run.options.get("gap_tol_dx", 1.0)) * gG.dx
    rep, sF, sG = Vn.compare_discounted_contact(gF, gG, c, run.cfg["eps_list"], bm, measures,
                                                gap_tol, run.solver["tol_fix"],
                                                run.solver["max_iter"])
    with open(run.path(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{d}" for d in range(gG.dim)] + list(rep.fields))
        for i in range(gG.num_nodes):
            w.writerow([fmt(v) for v in gG.coords[i]] + [fmt(f[i]) for f in rep.fields.values()])
    out = {"c": c, "num_measures": len(measures), "gaps_F": sF.gaps, "gaps_G": sG.gaps}
    out.update(rep.summary())
    return out


HANDLERS = {"validate": cmd_validate, "critical": cmd_critical, "solve": cmd_solve,
            "barrier": cmd_barrier, "mather": cmd_mather, "vanish": cmd_vanish,
            "compare": cmd_compare}


def run_command(command: str, config_path, outdir=None, threads: int = 1,
                dump_graph: bool = False, stream=None) -> int:
    """Execute one command; returns the process exit code."""
    stream = sys.stderr if stream is None else stream
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return 2
    outdir = Path(os.environ.get(OUTPUT_ENV) or outdir or cfg.get("output_dir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    kernels.set_threads(threads)
    try:
        run = Run(cfg, command, outdir)
    except (ConfigError, BadGrid, ValueError) as exc:
        print(f"config error: {exc}", file=stream)
        return 2
    if dump_graph:
        run.graph.dump_csv(outdir / f"graph_{config_hash(cfg)}.csv")
    try:
        if run.model is not None and command != "validate":
            validate_model(run.model)
        payload = HANDLERS[command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return 2
    except NumericFailure as exc:
        run.write_json({"status": "error",
                        "error": {"type": type(exc).__name__, "message": str(exc)}})
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=stream)
        return 3
    except ContactKAMError as exc:
        print(f"error: {exc}", file=stream)
        return 2
    payload["status"] = "ok"
    path = run.write_json(payload)
    print(path, file=sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactkam", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="worker threads for the kernels")
    p.add_argument("--dump-graph", action="store_true", help="also write the edge list as CSV")
    p.add_argument("--out", default=None, help="output directory (env %s wins)" % OUTPUT_ENV)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="JSON experiment config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command(args.command, args.config, args.out, args.threads, args.dump_graph)


if __name__ == "__main__":
    sys.exit(main())
