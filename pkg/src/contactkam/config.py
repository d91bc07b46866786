"""Experiment configuration: schema, defaults and object construction."""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .errors import ConfigError
from .grid import CostGraph, build_cost_graph, build_grid, graph_from_edges
from .model import LagrangianModel, make_model

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_trig = {
    "oneOf": [
        _num,
        {"type": "array", "items": _num, "minItems": 1},
        {"type": "object", "additionalProperties": False,
         "properties": {"cos": {"type": "array", "items": _num},
                        "sin": {"type": "array", "items": _num}}},
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["mechanical", "drift", "mechanical_drift"]},
                "dim": {"enum": [1, 2]},
                "W": _trig,
                "V": {"oneOf": [_trig, {"type": "array", "items": _trig, "minItems": 1,
                                        "maxItems": 2}]},
                "lam": _trig,
                "coupling": {"enum": ["linear", "saturating"]},
                "kappa": {"type": "number", "minimum": 0},
                "delta": _pos,
                "Delta": _pos,
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "n", "dt", "vmax"],
            "properties": {"dim": {"enum": [1, 2]}, "n": {"type": "integer"}, "dt": _num,
                           "vmax": _num},
        },
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["num_nodes", "edges"],
            "properties": {
                "num_nodes": {"type": "integer", "minimum": 1},
                "edges": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "minItems": 3, "maxItems": 3,
                                    "items": _num}},
                "dt": _pos,
                "lam": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
                "kappa": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_fix": _pos, "max_iter": {"type": "integer", "minimum": 1},
                "tol_sub": _pos, "tol_tight": _pos, "tol_class": _pos, "tol_con": _pos,
                "warm_start": {"type": "boolean"},
            },
        },
        "eps_list": {"type": "array", "items": _pos, "minItems": 1},
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": _pos,
                "start": {"type": "array", "items": _num},
                "start_node": {"type": "integer", "minimum": 0},
                "path_steps": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 1},
                "pairs": {"type": "array",
                          "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                    "items": {"type": "array", "items": _num}}},
                "liminf_factor": {"type": "integer", "minimum": 1},
                "value_iteration": {"type": "boolean"},
                "gap_tol_dx": _pos,
                "occupation": {"type": "boolean"},
            },
        },
        "output_dir": {"type": "string"},
    },
    "oneOf": [{"required": ["model", "grid"]}, {"required": ["graph"]}],
}

SOLVER_DEFAULTS = {"tol_fix": 1e-10, "max_iter": 1_000_000, "warm_start": False}
DEFAULT_EPS = [0.2, 0.1, 0.05, 0.025, 0.0125]


def _error_text(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "oneOf" and not err.absolute_path:
        return "config needs either a 'model' and 'grid' block or a 'graph' block"
    return f"{where}: {err.message}"


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        # report the most specific problem first
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_error_text(best))
    if "model" in cfg and cfg["model"].get("dim", cfg["grid"]["dim"]) != cfg["grid"]["dim"]:
        raise ConfigError("model/dim must equal grid/dim")
    eps = cfg.get("eps_list")
    if eps and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_list must be strictly decreasing")


def resolve(cfg: dict) -> dict:
    """Validated copy with solver defaults and eps list filled in."""
    validate_config(cfg)
    out = copy.deepcopy(cfg)
    solver = dict(SOLVER_DEFAULTS)
    solver.update(out.get("solver", {}))
    out["solver"] = solver
    out.setdefault("eps_list", list(DEFAULT_EPS))
    out.setdefault("options", {})
    if "model" in out:
        out["model"].setdefault("dim", out["grid"]["dim"])
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return resolve(raw)


def canonical(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:12]


def build_model(cfg: dict) -> LagrangianModel:
    m = cfg["model"]
    return make_model(family=m["family"], dim=m.get("dim", 1), W=m.get("W"), V=m.get("V"),
                      lam=m.get("lam", 1.0), coupling=m.get("coupling", "linear"),
                      kappa=m.get("kappa", 0.0), delta=m.get("delta"), Delta=m.get("Delta"))


def build_graph(cfg: dict, model: LagrangianModel | None = None) -> CostGraph:
    if "graph" in cfg:
        g = cfg["graph"]
        return graph_from_edges(g["num_nodes"], g["edges"], dt=g.get("dt", 1.0),
                                lam=g.get("lam", 1.0), kappa=g.get("kappa", 0.0))
    gr = cfg["grid"]
    grid = build_grid(gr["dim"], gr["n"], gr["dt"], gr["vmax"])
    return build_cost_graph(model if model is not None else build_model(cfg), grid)
