"""Scenario files: JSON schema, validation, case-study dynamics builders."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .barrier import ConjunctionBarrier, make_task_barrier
from .dynamics import Dynamics
from .encoder import ClassKGain, encode_disjunction
from .errors import SchemaError, SemanticError, StlrrtError
from .formula import And, Or, check_fragment, horizon, parse, to_conjunctions
from .geometry import LinearPredicate, Polytope, contains

SCENARIO_DIR = Path(__file__).parent / "scenarios"

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_hrep = {
    "oneOf": [
        {"type": "object", "required": ["A", "b"], "properties": {"A": _matrix, "b": _vector}},
        {"type": "object", "required": ["lower", "upper"],
         "properties": {"lower": _vector, "upper": _vector}},
    ]
}
_weight = {"oneOf": [{"type": "number"}, _vector, _matrix]}

SCHEMA = {
    "type": "object",
    "required": ["predicates", "formula", "x0"],
    "oneOf": [{"required": ["dynamics"]}, {"required": ["builtin"]}],
    "properties": {
        "name": {"type": "string"},
        "dynamics": {"type": "object", "required": ["A", "B"],
                     "properties": {"A": _matrix, "B": _matrix, "p": _vector}},
        "builtin": {"type": "object", "required": ["name"],
                    "properties": {"name": {"enum": ["drift_integrator", "clohessy_wiltshire"]},
                                   "args": {"type": "object"}}},
        "state_set": _hrep,
        "input_set": _hrep,
        "predicates": {
            "type": "object", "minProperties": 1,
            "additionalProperties": {
                "oneOf": [
                    {"type": "object", "required": ["D", "c"],
                     "properties": {"D": _matrix, "c": _vector}},
                    {"type": "object", "required": ["lower", "upper"],
                     "properties": {"lower": _vector, "upper": _vector}},
                ]
            },
        },
        "obstacles": {"type": "array", "items": _hrep},
        "formula": {"type": "string", "minLength": 1},
        "free_times": {"type": "object", "additionalProperties": {"type": "number"}},
        "x0": _vector,
        "kappa_gain": {"type": "number", "exclusiveMinimum": 0},
        "r_min": {"type": "number", "exclusiveMinimum": 0},
        "rollout_dt": {"type": "number", "exclusiveMinimum": 0},
        "planner": {
            "type": "object",
            "properties": {
                "Q": _weight, "R": _weight,
                "delta_max": {"type": "number", "exclusiveMinimum": 0},
                "eps_rewire": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "n_max": {"type": "integer", "minimum": 1},
                "collision_resolution": {"type": "number", "exclusiveMinimum": 0},
                "horizon_bias": {"type": "number", "minimum": 0, "maximum": 1},
                "rewire_cap": {"type": "integer", "minimum": 0},
            },
        },
        "seed": {"type": "integer"},
    },
}

PLANNER_DEFAULTS = {"Q": 1.0, "R": 1.0, "delta_max": 10.0, "eps_rewire": 5.0, "dt": 1.0,
                    "n_max": 500, "horizon_bias": 0.1, "rewire_cap": 25}


# ---------------------------------------------------------------- builders

def build_drift_integrator() -> Dynamics:
    """Planar single integrator with a position-dependent drift."""
    A = np.array([[-0.049, -0.029], [-0.071, -0.049]])
    X = Polytope.box([-10.0, -10.0], [10.0, 10.0], name="X")
    U = Polytope.box([-5.0, -5.0], [5.0, 5.0], name="U")
    return Dynamics(A, np.eye(2), np.zeros(2), X, U)


def build_clohessy_wiltshire(n_mean_motion: float = 1.13e-3, p_max: float = 120.0,
                             v_max: float = 0.5, u_max: float = 1.5) -> Dynamics:
    """Linearized relative motion about a circular orbit (state: position, velocity)."""
    if not n_mean_motion > 0.0:
        raise ValueError("mean motion must be positive")
    n = n_mean_motion
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3] = [3 * n ** 2, 0, 0, 0, 2 * n, 0]
    A[4] = [0, 0, 0, -2 * n, 0, 0]
    A[5] = [0, 0, -n ** 2, 0, 0, 0]
    B = np.vstack([np.zeros((3, 3)), np.eye(3)])
    hi = np.array([p_max] * 3 + [v_max] * 3)
    X = Polytope.box(-hi, hi, name="X")
    U = Polytope.box(-u_max * np.ones(3), u_max * np.ones(3), name="U")
    return Dynamics(A, B, np.zeros(6), X, U)


BUILTINS = {"drift_integrator": build_drift_integrator,
            "clohessy_wiltshire": build_clohessy_wiltshire}


# ---------------------------------------------------------------- scenario

@dataclass(eq=False)
class Scenario:
    name: str
    dyn: Dynamics
    predicates: dict
    obstacles: list
    formula_text: str
    formula: object
    x0: np.ndarray
    kappa_gain: float = 1.0
    r_min: float = 1e-3
    rollout_dt: float = 0.01
    free_times: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    seed: int = 0
    source: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def kappa(self):
        return ClassKGain(self.kappa_gain)

    def disjuncts(self):
        """Formula nodes of the top-level disjuncts."""
        return list(self.formula.children) if isinstance(self.formula, Or) else [self.formula]

    def task_barriers(self):
        """Unbound TaskBarrier lists per disjunct."""
        out = []
        for tasks in to_conjunctions(self.formula):
            out.append([make_task_barrier(t, self.predicates[t.predicate],
                                          self.free_times.get(t.label)) for t in tasks])
        return out

    def encode(self, solver=None):
        horizons = [horizon(d) for d in self.disjuncts()]
        return encode_disjunction(self.task_barriers(), self.dyn, self.x0, self.kappa,
                                  self.r_min, horizons, solver)

    def echo(self):
        """Validated scenario with defaults filled in (JSON-ready)."""
        d = dict(self.raw)
        d.update(kappa_gain=self.kappa_gain, r_min=self.r_min, rollout_dt=self.rollout_dt,
                 seed=self.seed, planner=_jsonable(self.planner))
        return d


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def _polytope(spec, field_name, name=None):
    try:
        if "A" in spec:
            return Polytope(spec["A"], spec["b"], name=name)
        return Polytope.box(spec["lower"], spec["upper"], name=name)
    except StlrrtError as exc:
        raise SemanticError(f"{field_name}: {exc}") from exc


def _weight_matrix(w, dim, field_name):
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        M = w * np.eye(dim)
    elif w.ndim == 1:
        M = np.diag(w)
    else:
        M = w
    if M.shape != (dim, dim):
        raise SemanticError(f"{field_name}: expected {dim}x{dim} weight, got {M.shape}")
    if not np.allclose(M, M.T) or np.min(np.linalg.eigvalsh(M)) <= 0.0:
        raise SemanticError(f"{field_name}: weight must be symmetric positive definite")
    return M


def scenario_from_dict(d: dict, source=None) -> Scenario:
    try:
        jsonschema.validate(d, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        reason = exc.message
        if exc.validator == "required":
            missing = [k for k in exc.validator_value if k not in exc.instance]
            if missing:
                where = missing[0] if where == "<root>" else f"{where}.{missing[0]}"
        raise SchemaError(where, reason) from None

    if "builtin" in d:
        spec = d["builtin"]
        try:
            dyn = BUILTINS[spec["name"]](**spec.get("args", {}))
        except TypeError as exc:
            raise SchemaError("builtin.args", str(exc)) from None
        X, U = dyn.state_set, dyn.input_set
        if "state_set" in d:
            X = _polytope(d["state_set"], "state_set", "X")
        if "input_set" in d:
            U = _polytope(d["input_set"], "input_set", "U")
        A, B, p = dyn.A, dyn.B, dyn.p
    else:
        for key in ("state_set", "input_set"):
            if key not in d:
                raise SchemaError(key, "required when 'dynamics' is given")
        X = _polytope(d["state_set"], "state_set", "X")
        U = _polytope(d["input_set"], "input_set", "U")
        A = d["dynamics"]["A"]
        B = d["dynamics"]["B"]
        p = d["dynamics"].get("p")
    try:
        dyn = Dynamics(A, B, p, X, U)
    except StlrrtError as exc:
        raise SemanticError(f"dynamics: {exc}") from exc
    n = dyn.n

    preds = {}
    for name, spec in d["predicates"].items():
        if "D" in spec:
            h = LinearPredicate(spec["D"], spec["c"], name=name)
        else:
            h = LinearPredicate.box(spec["lower"], spec["upper"], name=name)
        if h.dim != n:
            raise SemanticError(f"predicate {name!r} has dimension {h.dim}, state has {n}")
        preds[name] = h

    obstacles = [_polytope(o, f"obstacles.{i}", f"O{i}") for i, o in enumerate(d.get("obstacles", []))]
    for i, o in enumerate(obstacles):
        if o.dim != n:
            raise SemanticError(f"obstacle {i} has dimension {o.dim}, state has {n}")

    x0 = np.asarray(d["x0"], dtype=float)
    if x0.shape != (n,):
        raise SemanticError(f"x0 has {x0.size} entries, state has {n}")
    if not contains(X, x0, 0.0):
        raise SemanticError("x0 lies outside the state set")

    try:
        f = parse(d["formula"], preds)
        check_fragment(f)
    except StlrrtError as exc:
        raise SemanticError(f"formula: {exc}") from exc

    planner = dict(PLANNER_DEFAULTS)
    planner.update(d.get("planner", {}))
    planner["Q"] = _weight_matrix(planner["Q"], n, "planner.Q")
    planner["R"] = _weight_matrix(planner["R"], dyn.m, "planner.R")
    planner.setdefault("collision_resolution", planner["dt"] / 4.0)

    return Scenario(
        name=d.get("name", Path(source).stem if source else "scenario"),
        dyn=dyn, predicates=preds, obstacles=obstacles, formula_text=d["formula"], formula=f,
        x0=x0, kappa_gain=float(d.get("kappa_gain", 1.0)), r_min=float(d.get("r_min", 1e-3)),
        rollout_dt=float(d.get("rollout_dt", 0.01)), free_times=dict(d.get("free_times", {})),
        planner=planner, seed=int(d.get("seed", 0)), source=str(source) if source else None,
        raw=d,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        for cand in (SCENARIO_DIR / path, SCENARIO_DIR / path.with_suffix(".json")):
            if cand.exists():
                path = cand
                break
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise SchemaError("path", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError("<file>", f"invalid JSON: {exc}") from None
    return scenario_from_dict(data, source=path)


def shipped(name: str) -> Path:
    """Path of a scenario bundled with the package; ``.json`` is optional."""
    p = SCENARIO_DIR / name
    return p if p.suffix == ".json" else p.with_suffix(".json")
