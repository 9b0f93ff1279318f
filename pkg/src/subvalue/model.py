"""Problem ingestion: polynomial optimal-control problems and synthesis config.

An OCP is the tuple {c, g, f, Omega, U, T}: running cost c(x,u,t), terminal
cost g(x), dynamics f(x,u), state set Omega = {h_omega >= 0}, input set U
(a box or a single-inequality set {h_u >= 0}) and horizon T.  All
polynomials live over one shared variable universe [x1..xn, u1..um, t].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .poly import Polynomial, poly_from_text, poly_to_text

DEGREE_CAP = 30

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["states", "inputs", "running_cost", "terminal_cost",
                 "dynamics", "omega_h", "horizon_T", "lambda_box",
                 "weight", "degree"],
    "properties": {
        "states": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "inputs": {
            "type": "object",
            "additionalProperties": False,
            "required": ["names"],
            "properties": {
                "names": {"type": "array", "items": {"type": "string"}},
                "box": {"type": "array",
                        "items": {"type": "array", "items": {"type": "number"},
                                  "minItems": 2, "maxItems": 2}},
                "h_u": {"type": "string"},
            },
        },
        "running_cost": {"type": "string"},
        "terminal_cost": {"type": "string"},
        "dynamics": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "omega_h": {"type": "string"},
        "horizon_T": {"type": "number", "exclusiveMinimum": 0},
        "lambda_box": {"type": "array",
                       "items": {"type": "array", "items": {"type": "number"},
                                 "minItems": 2, "maxItems": 2}},
        "weight": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["uniform", "dirac"]},
                "time": {"type": "number"},
            },
        },
        "degree": {"type": "integer", "minimum": 1, "maximum": DEGREE_CAP},
    },
}


class ProblemError(ValueError):
    """Raised for malformed or non-polynomial problem descriptions."""


@dataclass(frozen=True)
class ProblemVars:
    """Name registry mapping states, inputs and time onto variable indices."""

    states: tuple
    inputs: tuple

    def __post_init__(self):
        names = list(self.states) + list(self.inputs) + ["t"]
        if len(set(names)) != len(names):
            raise ProblemError("duplicate variable name (note: 't' is reserved)")

    @property
    def n(self):
        return len(self.states)

    @property
    def m(self):
        return len(self.inputs)

    @property
    def nvars(self):
        return self.n + self.m + 1

    @property
    def t_index(self):
        return self.n + self.m

    @property
    def names(self):
        return list(self.states) + list(self.inputs) + ["t"]

    def x_indices(self):
        return list(range(self.n))

    def u_indices(self):
        return list(range(self.n, self.n + self.m))

    def full_point(self, x, u=None, t=0.0):
        pt = np.zeros(self.nvars)
        pt[:self.n] = x
        if self.m:
            pt[self.n:self.n + self.m] = u if u is not None else 0.0
        pt[-1] = t
        return pt


@dataclass(frozen=True)
class SemialgebraicSet:
    """The set {z : h(z) >= 0} for a single polynomial inequality."""

    defining_poly: Polynomial
    nvars: int

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.defining_poly.evaluate_batch(pts) >= 0.0


@dataclass(frozen=True)
class InputBox:
    intervals: tuple  # ((a_i, b_i), ...)

    def __post_init__(self):
        for a, b in self.intervals:
            if not a < b:
                raise ProblemError(f"degenerate input interval [{a}, {b}]")

    def is_unit(self) -> bool:
        return all(a == -1.0 and b == 1.0 for a, b in self.intervals)


@dataclass(frozen=True)
class Weight:
    kind: str               # "uniform" | "dirac"
    time: float = 0.0       # Dirac location s, in [0, T]


@dataclass(frozen=True)
class OcpSpec:
    """Polynomial OCP {c, g, f, Omega, U, T} over the shared universe."""

    variables: ProblemVars
    c: Polynomial
    g: Polynomial
    f: tuple                     # n dynamics components, over (x, u)
    omega: SemialgebraicSet      # over x
    u_set: SemialgebraicSet | None
    input_box: InputBox | None
    horizon_T: float

    def __post_init__(self):
        v = self.variables
        x_and_u = set(range(v.n + v.m))
        if self.horizon_T <= 0:
            raise ProblemError("horizon_T must be positive")
        if len(self.f) != v.n:
            raise ProblemError("need one dynamics component per state")
        for fi in self.f:
            if not fi.used_vars() <= x_and_u:
                raise ProblemError("dynamics may only involve states and inputs")
        if not self.g.used_vars() <= set(range(v.n)):
            raise ProblemError("terminal cost may only involve states")
        if not self.omega.defining_poly.used_vars() <= set(range(v.n)):
            raise ProblemError("omega_h may only involve states")
        if self.u_set is not None and not (
                self.u_set.defining_poly.used_vars() <= set(v.u_indices())):
            raise ProblemError("h_u may only involve inputs")

    @property
    def n_states(self):
        return self.variables.n

    @property
    def m_inputs(self):
        return self.variables.m

    def input_membership(self) -> Polynomial:
        """Single-inequality description of U (box inputs get a covering ball)."""
        if self.u_set is not None:
            return self.u_set.defining_poly
        v = self.variables
        if v.m == 0:
            return Polynomial.constant(0.0, v.nvars)
        if self.input_box is None or not self.input_box.is_unit():
            raise ProblemError("normalize_input_box before requesting h_u")
        # m=1 gives exactly 1-u^2; m>1 is a covering superset (conservative)
        h = Polynomial.constant(float(v.m), v.nvars)
        for i in v.u_indices():
            h = h - Polynomial.variable(i, v.nvars) * Polynomial.variable(i, v.nvars)
        return h


@dataclass(frozen=True)
class SynthesisConfig:
    lambda_box: tuple            # per-state (lo, hi)
    weight: Weight
    degree: int
    multiplier_pad: int = 0      # extra degree allowance for Putinar multipliers
    tol_feas: float = 1e-9
    tol_gap: float = 1e-9
    max_iter: int = 200


def _parse_poly(text, names, what):
    try:
        return poly_from_text(text, names)
    except ValueError as exc:
        raise ProblemError(f"{what}: {exc}") from exc


def parse_problem(config) -> tuple[OcpSpec, SynthesisConfig]:
    """Build a validated (OcpSpec, SynthesisConfig) from a JSON dict or text."""
    if isinstance(config, str):
        config = json.loads(config)
    import jsonschema
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ProblemError(f"config schema violation: {exc.message}") from exc

    pv = ProblemVars(tuple(config["states"]), tuple(config["inputs"]["names"]))
    names = pv.names
    c = _parse_poly(config["running_cost"], names, "running_cost")
    g = _parse_poly(config["terminal_cost"], names, "terminal_cost")
    if len(config["dynamics"]) != pv.n:
        raise ProblemError("dynamics length != number of states")
    f = tuple(_parse_poly(s, names, "dynamics") for s in config["dynamics"])
    omega = SemialgebraicSet(_parse_poly(config["omega_h"], names, "omega_h"),
                             pv.nvars)
    for poly, cap in [(c, DEGREE_CAP), (g, DEGREE_CAP), (omega.defining_poly, DEGREE_CAP)]:
        if poly.degree > cap:
            raise ProblemError(f"degree overflow (> {cap})")

    inputs = config["inputs"]
    u_set = None
    input_box = None
    if pv.m:
        if ("box" in inputs) == ("h_u" in inputs):
            raise ProblemError("inputs need exactly one of 'box' or 'h_u'")
        if "box" in inputs:
            if len(inputs["box"]) != pv.m:
                raise ProblemError("input box length != number of inputs")
            input_box = InputBox(tuple(tuple(map(float, ab)) for ab in inputs["box"]))
        else:
            u_set = SemialgebraicSet(_parse_poly(inputs["h_u"], names, "h_u"),
                                     pv.nvars)

    T = float(config["horizon_T"])
    spec = OcpSpec(pv, c, g, f, omega, u_set, input_box, T)

    if len(config["lambda_box"]) != pv.n:
        raise ProblemError("lambda_box length != number of states")
    lam = tuple(tuple(map(float, ab)) for ab in config["lambda_box"])
    for a, b in lam:
        if not a < b:
            raise ProblemError(f"degenerate lambda_box interval [{a}, {b}]")

    w = config["weight"]
    if w["type"] == "dirac":
        s = float(w.get("time", 0.0))
        if not 0.0 <= s <= T:
            raise ProblemError("dirac weight time outside [0, T]")
        weight = Weight("dirac", s)
    else:
        weight = Weight("uniform")

    cfg = SynthesisConfig(lambda_box=lam, weight=weight, degree=int(config["degree"]))
    return spec, cfg


def serialize(spec: OcpSpec, cfg: SynthesisConfig) -> dict:
    """Inverse of parse_problem on canonical specs."""
    pv = spec.variables
    names = pv.names
    inputs: dict = {"names": list(pv.inputs)}
    if pv.m:
        if spec.input_box is not None:
            inputs["box"] = [list(ab) for ab in spec.input_box.intervals]
        else:
            inputs["h_u"] = poly_to_text(spec.u_set.defining_poly, names)
    weight = {"type": cfg.weight.kind}
    if cfg.weight.kind == "dirac":
        weight["time"] = cfg.weight.time
    return {
        "states": list(pv.states),
        "inputs": inputs,
        "running_cost": poly_to_text(spec.c, names),
        "terminal_cost": poly_to_text(spec.g, names),
        "dynamics": [poly_to_text(fi, names) for fi in spec.f],
        "omega_h": poly_to_text(spec.omega.defining_poly, names),
        "horizon_T": spec.horizon_T,
        "lambda_box": [list(ab) for ab in cfg.lambda_box],
        "weight": weight,
        "degree": cfg.degree,
    }


def decompose_input_affine(spec: OcpSpec):
    """Split c = c0 + sum_i c_i u_i and f = f0 + sum_i f_i u_i exactly.

    Returns (c0, c_parts, f0, f_parts) with c_parts[i] a Polynomial and
    f_parts[i] a tuple of n Polynomials; raises ProblemError if any term is
    nonlinear in the inputs.
    """
    pv = spec.variables
    u_idx = pv.u_indices()

    def split(p: Polynomial):
        base = {}
        parts = [dict() for _ in range(pv.m)]
        for exps, c in p.terms.items():
            u_exps = [exps[i] for i in u_idx]
            tot = sum(u_exps)
            if tot == 0:
                base[exps] = c
            elif tot == 1:
                which = u_exps.index(1)
                stripped = list(exps)
                stripped[u_idx[which]] = 0
                parts[which][tuple(stripped)] = c
            else:
                raise ProblemError("term nonlinear in the inputs")
        return (Polynomial(base, pv.nvars),
                tuple(Polynomial(d, pv.nvars) for d in parts))

    c0, c_parts = split(spec.c)
    pieces = [split(fi) for fi in spec.f]
    f0 = tuple(p[0] for p in pieces)
    f_parts = tuple(tuple(p[1][i] for p in pieces) for i in range(pv.m))
    return c0, c_parts, f0, f_parts


@dataclass(frozen=True)
class InputAffineMap:
    """Record of the affine substitution u_i = mid_i + half_i * v_i."""

    mids: tuple
    halves: tuple

    def to_original(self, v):
        v = np.asarray(v, dtype=float)
        return np.asarray(self.mids) + np.asarray(self.halves) * v

    def to_normalized(self, u):
        u = np.asarray(u, dtype=float)
        return (u - np.asarray(self.mids)) / np.asarray(self.halves)


def normalize_input_box(spec: OcpSpec) -> tuple[OcpSpec, InputAffineMap]:
    """Rewrite a box-input spec over the unit input box [-1, 1]^m.

    Endpoints map onto endpoints (a_i -> -1, b_i -> +1); the returned map
    un-normalizes controller outputs.
    """
    if spec.input_box is None:
        raise ProblemError("normalize_input_box needs box-form inputs")
    pv = spec.variables
    mids = tuple((a + b) / 2.0 for a, b in spec.input_box.intervals)
    halves = tuple((b - a) / 2.0 for a, b in spec.input_box.intervals)
    amap = InputAffineMap(mids, halves)
    if spec.input_box.is_unit():
        return spec, amap

    def rewrite(p: Polynomial) -> Polynomial:
        out = p
        for j, ui in enumerate(pv.u_indices()):
            repl = Polynomial.variable(ui, pv.nvars) * halves[j] + mids[j]
            out = out.substitute(ui, repl)
        return out

    new_spec = replace(
        spec,
        c=rewrite(spec.c),
        f=tuple(rewrite(fi) for fi in spec.f),
        input_box=InputBox(tuple((-1.0, 1.0) for _ in range(pv.m))),
    )
    return new_spec, amap


def check_containment_condition(spec: OcpSpec, cfg: SynthesisConfig,
                                samples=500, seed=0, n_switches=10,
                                nsteps=2000):
    """Advisory Monte-Carlo probe of forward-flow containment in Omega.

    Simulates random starts in the Lambda box under piecewise-constant random
    admissible inputs and reports the fraction of trajectories that never
    leave Omega.  A 100% report makes the containment condition plausible;
    it proves nothing (the condition quantifies over all admissible inputs).
    """
    from .control import simulate_piecewise_random

    rng = np.random.default_rng(seed)
    lam = np.asarray(cfg.lambda_box, dtype=float)
    x0s = rng.uniform(lam[:, 0], lam[:, 1], size=(samples, spec.n_states))
    inside, violating = simulate_piecewise_random(
        spec, x0s, rng, n_switches=n_switches, nsteps=nsteps)
    return {
        "samples": int(samples),
        "fraction_contained": float(np.mean(inside)),
        "violating_trajectory": violating,
        "advisory": "sampling cannot prove the containment condition",
    }
