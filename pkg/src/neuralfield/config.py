"""Run configuration: JSON schema, defaults, env overrides, validation.

A config document is merged over the defaults below, checked key by key
(unknown keys are errors, every violation is collected before failing), and
turned into constructed model/grid/solver objects.  Environment variables
prefixed ``NF_`` override single values by their uppercased key path, e.g.
``NF_MODEL_GAMMA=0.5`` or ``NF_SOLVER_PICARD_TOL=1e-8``.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .discretization import FieldState, Grid, Quadrature, make_quadrature
from .errors import ParseError, SchemaError
from .model import (
    FIRING_KINDS,
    KERNEL_KINDS,
    LEARNING_KINDS,
    MODEL_MODES,
    FiringRate,
    LearningKernel,
    ModelSpec,
    SynapticKernel,
)
from .solver import SOLVER_METHODS, SolverConfig

ENV_PREFIX = "NF_"

DEFAULT_CONFIG = {
    "model": {
        "kernel": {"kind": "exponential", "params": {"amplitude": 0.5, "decay": 1.0}},
        "firing": {"kind": "sigmoid", "params": {"slope": 1.0, "threshold": 0.0}},
        "learning": {"kind": "gaussian", "params": {"width": 1.0}},
        "gamma": 1.0,
        "mode": "well-posed",
    },
    "grid": {"bounds": [[-10.0, 10.0]], "nodes": [401], "boundary": "compact"},
    "quadrature": "trapezoid",
    "solver": {
        "method": "exp-euler",
        "dt": 0.05,
        "t_end": 10.0,
        "segment_rho": None,
        "picard_tol": 1e-10,
        "picard_max_iter": 200,
    },
    "initial": {"kind": "gaussian-bump", "params": {"amplitude": 0.5, "center": 0.0, "width": 2.0}},
    "seed": 12345,
    "stationary": {
        "method": "fp",
        "damping": 0.5,
        "tol": 1e-9,
        "max_iter": 5000,
        "t_max": 500.0,
        "settle_tol": 1e-8,
        "dt": 0.1,
    },
    "gainfield": {
        "lambda": 1.0,
        "half_width": 1.0,
        "k_pre": 1.0,
        "sign": "plus",
        "n_eigs": 12,
        "crosscheck_box": 20.0,
        "crosscheck_nodes": 2001,
    },
    "schrodinger": {
        "half_width": 1.0,
        "height": 2.0,
        "box": 20.0,
        "nodes": 2001,
        "n_states": 4,
        "lambda": None,
    },
    "study": {
        "plasticity": {
            "gamma_list": [0.4, 0.2, 0.1, 0.05, 0.025],
            "t_end": 10.0,
            "dt": 0.05,
            "method": "rk4",
            "slack": 0.0,
        },
        "dependence": {"eps_list": [0.2, 0.1, 0.05], "rho": None, "dt": 0.001, "slack_coeff": 10.0},
        "contraction": {"n_pairs": 200, "rho": None, "time_steps": 8, "slack": 0.01},
        # the stated L1 bound carries no (1 + gamma) factor, so it is a theorem
        # only without plasticity or below firing saturation; the default study
        # isolates the unconditional case (set "gamma": null to inherit the
        # model's value)
        "l1": {"t_end": 20.0, "dt": 0.05, "slack": 1e-6, "gamma": 0.0,
               "initials": ["zero", "step", "initial"]},
    },
}

# keys whose values are free-form and are validated by the constructors instead
_OPEN_SECTIONS = {
    ("model", "kernel", "params"),
    ("model", "firing", "params"),
    ("model", "learning", "params"),
    ("initial", "params"),
}

INITIAL_KINDS = ("zero", "constant", "gaussian-bump", "step")

_INITIAL_DEFAULTS = {
    "zero": {},
    "constant": {"value": 0.2},
    "gaussian-bump": {"amplitude": 0.5, "center": 0.0, "width": 2.0},
    "step": {"low": 0.0, "high": 1.0, "split": None},
}


@dataclass
class RunConfig:
    """Validated configuration with constructed objects and the echo document."""

    model: ModelSpec
    grid: Grid
    quadrature: Quadrature
    solver: SolverConfig
    seed: int
    document: dict

    @property
    def initial_section(self) -> dict:
        return self.document["initial"]

    @property
    def stationary_section(self) -> dict:
        return self.document["stationary"]

    @property
    def gainfield_section(self) -> dict:
        return self.document["gainfield"]

    @property
    def schrodinger_section(self) -> dict:
        return self.document["schrodinger"]

    @property
    def study_section(self) -> dict:
        return self.document["study"]


def _merge(defaults, user, path, violations):
    """Defaults overlaid with the user document; unknown keys are violations."""
    if not isinstance(user, dict):
        violations.append(f"{'.'.join(path) or '<root>'}: expected an object")
        return copy.deepcopy(defaults)
    merged = {}
    for key, default_value in defaults.items():
        if key in user:
            value = user[key]
            here = path + (key,)
            if isinstance(default_value, dict) and here not in _OPEN_SECTIONS:
                merged[key] = _merge(default_value, value, here, violations)
            else:
                merged[key] = copy.deepcopy(value)
        else:
            merged[key] = copy.deepcopy(default_value)
    for key in user:
        if key not in defaults:
            dotted = ".".join(path + (key,))
            violations.append(f"{dotted}: unknown key")
    return merged


def _env_overrides(doc, environ, violations):
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        tokens = name[len(ENV_PREFIX):].lower().split("_")
        node = doc
        parents = []
        while tokens:
            if not isinstance(node, dict):
                break
            # greedy longest match against keys containing underscores
            match = None
            for take in range(len(tokens), 0, -1):
                candidate = "_".join(tokens[:take])
                if candidate in node:
                    match = (candidate, take)
                    break
            if match is None:
                break
            key, take = match
            parents.append((node, key))
            node = node[key]
            tokens = tokens[take:]
        if tokens or not parents:
            violations.append(f"environment override {name}: no matching config key")
            continue
        holder, key = parents[-1]
        try:
            holder[key] = json.loads(raw)
        except json.JSONDecodeError:
            holder[key] = raw
    return doc


def _require(cond, violations, path, message):
    if not cond:
        violations.append(f"{path}: {message}")
    return cond


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate_document(doc: dict) -> list:
    """Every schema violation in the merged document, as 'path: message' strings."""
    v = []

    model = doc["model"]
    _require(model["kernel"]["kind"] in KERNEL_KINDS, v, "model.kernel.kind",
             f"must be one of {list(KERNEL_KINDS)}")
    _require(model["firing"]["kind"] in FIRING_KINDS, v, "model.firing.kind",
             f"must be one of {list(FIRING_KINDS)}")
    _require(model["learning"]["kind"] in LEARNING_KINDS, v, "model.learning.kind",
             f"must be one of {list(LEARNING_KINDS)}")
    _require(_is_number(model["gamma"]) and model["gamma"] >= 0, v, "model.gamma",
             "must be a nonnegative number")
    mode_ok = _require(model["mode"] in MODEL_MODES, v, "model.mode",
                       f"must be one of {list(MODEL_MODES)}")
    if mode_ok and model["mode"] == "well-posed" and model["firing"]["kind"] == "linear":
        v.append("model.firing.kind: linear firing is unbounded and only admitted "
                 "when model.mode is 'gain-field'")

    grid = doc["grid"]
    bounds = grid["bounds"]
    nodes = grid["nodes"]
    bounds_ok = _require(isinstance(bounds, list) and 1 <= len(bounds) <= 2
                         and all(isinstance(b, list) and len(b) == 2
                                 and all(_is_number(x) for x in b) and b[0] < b[1]
                                 for b in bounds),
                         v, "grid.bounds", "must be 1 or 2 pairs [lo, hi] with lo < hi")
    nodes_ok = _require(isinstance(nodes, list)
                        and all(isinstance(n, int) and n >= 3 for n in nodes),
                        v, "grid.nodes", "must be integers >= 3, one per axis")
    if bounds_ok and nodes_ok:
        _require(len(nodes) == len(bounds), v, "grid.nodes", "needs one entry per axis")
    _require(grid["boundary"] in ("compact", "periodic"), v, "grid.boundary",
             "must be 'compact' or 'periodic'")

    quad = doc["quadrature"]
    quad_ok = _require(quad in ("trapezoid", "simpson"), v, "quadrature",
                       "must be 'trapezoid' or 'simpson'")
    if quad_ok and quad == "simpson":
        if grid["boundary"] == "periodic":
            v.append("quadrature: simpson is not defined on periodic grids")
        elif nodes_ok and any(n % 2 == 0 for n in nodes):
            v.append("quadrature: simpson requires an odd node count per axis")

    solver = doc["solver"]
    _require(solver["method"] in SOLVER_METHODS, v, "solver.method",
             f"must be one of {list(SOLVER_METHODS)}")
    dt_ok = _require(_is_number(solver["dt"]) and solver["dt"] > 0, v, "solver.dt",
                     "must be a positive number")
    _require(_is_number(solver["t_end"]) and solver["t_end"] > 0, v, "solver.t_end",
             "must be a positive number")
    rho = solver["segment_rho"]
    if rho is not None:
        rho_ok = _require(_is_number(rho) and rho > 0, v, "solver.segment_rho",
                          "must be null or a positive number")
        if rho_ok and dt_ok and solver["dt"] > rho:
            v.append("solver.dt: must not exceed solver.segment_rho")
    _require(_is_number(solver["picard_tol"]) and solver["picard_tol"] > 0, v,
             "solver.picard_tol", "must be a positive number")
    _require(isinstance(solver["picard_max_iter"], int) and solver["picard_max_iter"] >= 1,
             v, "solver.picard_max_iter", "must be a positive integer")

    initial = doc["initial"]
    _require(initial["kind"] in INITIAL_KINDS, v, "initial.kind",
             f"must be one of {list(INITIAL_KINDS)}")

    _require(isinstance(doc["seed"], int), v, "seed", "must be an integer")

    stat = doc["stationary"]
    _require(stat["method"] in ("fp", "flow"), v, "stationary.method", "must be 'fp' or 'flow'")
    _require(_is_number(stat["damping"]) and 0 < stat["damping"] <= 1, v,
             "stationary.damping", "must lie in (0, 1]")
    for key in ("tol", "settle_tol", "t_max", "dt"):
        _require(_is_number(stat[key]) and stat[key] > 0, v, f"stationary.{key}",
                 "must be a positive number")
    _require(isinstance(stat["max_iter"], int) and stat["max_iter"] >= 1, v,
             "stationary.max_iter", "must be a positive integer")

    gf = doc["gainfield"]
    _require(_is_number(gf["lambda"]) and gf["lambda"] > 0, v, "gainfield.lambda",
             "must be a positive number")
    _require(_is_number(gf["half_width"]) and gf["half_width"] > 0, v,
             "gainfield.half_width", "must be a positive number")
    _require(_is_number(gf["k_pre"]) and gf["k_pre"] > 0, v, "gainfield.k_pre",
             "must be a positive number")
    _require(gf["sign"] in ("plus", "minus"), v, "gainfield.sign", "must be 'plus' or 'minus'")
    _require(isinstance(gf["n_eigs"], int) and gf["n_eigs"] >= 1, v, "gainfield.n_eigs",
             "must be a positive integer")
    _require(_is_number(gf["crosscheck_box"]) and gf["crosscheck_box"] > 0, v,
             "gainfield.crosscheck_box", "must be a positive number")
    _require(isinstance(gf["crosscheck_nodes"], int) and gf["crosscheck_nodes"] >= 3, v,
             "gainfield.crosscheck_nodes", "must be an integer >= 3")

    sch = doc["schrodinger"]
    _require(_is_number(sch["half_width"]) and sch["half_width"] > 0, v,
             "schrodinger.half_width", "must be a positive number")
    _require(_is_number(sch["height"]) and sch["height"] >= 0, v, "schrodinger.height",
             "must be a nonnegative number")
    _require(_is_number(sch["box"]) and sch["box"] > 0, v, "schrodinger.box",
             "must be a positive number")
    _require(isinstance(sch["nodes"], int) and sch["nodes"] >= 3, v, "schrodinger.nodes",
             "must be an integer >= 3")
    _require(isinstance(sch["n_states"], int) and sch["n_states"] >= 1, v,
             "schrodinger.n_states", "must be a positive integer")
    if sch["lambda"] is not None:
        _require(_is_number(sch["lambda"]) and sch["lambda"] > 0, v, "schrodinger.lambda",
                 "must be null or a positive number")

    study = doc["study"]
    pl = study["plasticity"]
    gl = pl["gamma_list"]
    gl_ok = _require(isinstance(gl, list) and len(gl) >= 2
                     and all(_is_number(g) and g > 0 for g in gl),
                     v, "study.plasticity.gamma_list", "must be a list of positive numbers")
    if gl_ok:
        _require(sorted(gl, reverse=True) == gl, v, "study.plasticity.gamma_list",
                 "must be descending")
    _require(pl["method"] in SOLVER_METHODS, v, "study.plasticity.method",
             f"must be one of {list(SOLVER_METHODS)}")
    ep = study["dependence"]["eps_list"]
    _require(isinstance(ep, list) and all(_is_number(e) and e >= 0 for e in ep), v,
             "study.dependence.eps_list", "must be a list of nonnegative numbers")
    _require(isinstance(study["contraction"]["n_pairs"], int)
             and study["contraction"]["n_pairs"] >= 1, v,
             "study.contraction.n_pairs", "must be a positive integer")
    _require(isinstance(study["contraction"]["time_steps"], int)
             and study["contraction"]["time_steps"] >= 1, v,
             "study.contraction.time_steps", "must be a positive integer")
    inits = study["l1"]["initials"]
    _require(isinstance(inits, list)
             and all(i in ("zero", "step", "initial") for i in inits), v,
             "study.l1.initials", "entries must be 'zero', 'step' or 'initial'")
    l1_gamma = study["l1"]["gamma"]
    if l1_gamma is not None:
        _require(_is_number(l1_gamma) and l1_gamma >= 0, v, "study.l1.gamma",
                 "must be null or a nonnegative number")

    return v


def build_config(user_doc: dict, environ=None) -> RunConfig:
    """Merge, override, validate, and construct a RunConfig."""
    violations = []
    doc = _merge(DEFAULT_CONFIG, user_doc, (), violations)
    if environ is None:
        environ = os.environ
    _env_overrides(doc, environ, violations)
    violations.extend(validate_document(doc))
    if violations:
        raise SchemaError(violations)

    model = ModelSpec.from_json(doc["model"])
    grid = Grid(bounds=doc["grid"]["bounds"], npts=doc["grid"]["nodes"],
                boundary=doc["grid"]["boundary"])
    quadrature = make_quadrature(grid, doc["quadrature"])
    s = doc["solver"]
    solver = SolverConfig(method=s["method"], dt=s["dt"], t_end=s["t_end"],
                          segment_rho=s["segment_rho"], picard_tol=s["picard_tol"],
                          picard_max_iter=s["picard_max_iter"])
    return RunConfig(model=model, grid=grid, quadrature=quadrature, solver=solver,
                     seed=doc["seed"], document=doc)


def parse_config(path, environ=None) -> RunConfig:
    """Load a JSON config file and validate it."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    try:
        user_doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user_doc, dict):
        raise ParseError(f"config {path} must contain a JSON object")
    return build_config(user_doc, environ=environ)


def initial_state(cfg: RunConfig, kind: str | None = None, params: dict | None = None) -> FieldState:
    """Build the initial field from the config's initial section (or overrides)."""
    section = cfg.initial_section
    kind = kind or section["kind"]
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial kind {kind!r}")
    merged = dict(_INITIAL_DEFAULTS[kind])
    merged.update(section.get("params", {}) if params is None else params)
    extra = set(merged) - set(_INITIAL_DEFAULTS[kind])
    if extra:
        raise ValueError(f"initial kind {kind!r} got unexpected params {sorted(extra)}")
    pts = cfg.grid.points
    x = pts[:, 0]
    if kind == "zero":
        values = np.zeros(cfg.grid.n_total)
    elif kind == "constant":
        values = np.full(cfg.grid.n_total, float(merged["value"]))
    elif kind == "gaussian-bump":
        center = np.atleast_1d(np.asarray(merged["center"], dtype=float))
        r2 = np.sum((pts - center) ** 2, axis=1)
        values = float(merged["amplitude"]) * np.exp(-r2 / (2.0 * float(merged["width"]) ** 2))
    else:  # step: indicator of the left half of the first axis
        split = merged["split"]
        if split is None:
            a, b = cfg.grid.bounds[0]
            split = 0.5 * (a + b)
        values = np.where(x < float(split), float(merged["high"]), float(merged["low"]))
    return FieldState(values=values, time=0.0)
