"""Reachable-set outer approximation through sub-value sublevel sets.

With zero running cost and terminal cost g encoding a target set
X0 = {g < 0}, the time-zero strict sublevel set {P(., 0) < 0} of any valid
certificate contains the backward reachable set; negating the dynamics turns
the same construction into a forward-reach outer approximation.  Set sizes
are compared in the volume metric D_V(A, B) = mu(A symm-diff B), estimated
by Monte Carlo over the Lambda box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .control import _pack
from .model import OcpSpec, ProblemError, SynthesisConfig
from .poly import Polynomial
from .synthesis import SubValueCertificate, synthesize


@dataclass
class SublevelSet:
    """{x in Lambda : V(x, s) <= gamma} (or < gamma when strict)."""

    V: Polynomial               # over (x, .., t)
    time: float
    level: float
    domain: tuple               # Lambda box, per-state (lo, hi)
    strict: bool = False

    def values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pts = np.zeros((len(X), self.V.nvars))
        pts[:, :X.shape[1]] = X
        pts[:, -1] = self.time
        return self.V.evaluate_batch(pts)

    def membership(self, X) -> np.ndarray:
        v = self.values(X)
        return v < self.level if self.strict else v <= self.level

    def export_point_cloud(self, path, samples: int = 20_000, seed: int = 0):
        """CSV rows x1..xn,inside for external visualization."""
        rng = np.random.default_rng(seed)
        box = np.asarray(self.domain, dtype=float)
        X = rng.uniform(box[:, 0], box[:, 1], size=(samples, len(box)))
        inside = self.membership(X).astype(int)
        n = X.shape[1]
        header = ",".join(f"x{i+1}" for i in range(n)) + ",inside"
        np.savetxt(path, np.hstack([X, inside[:, None]]), delimiter=",",
                   header=header, comments="")

    def export_scalar_field(self, path, grid_n: int = 50):
        """CSV lattice of V(x, s) values (grid coordinates then value)."""
        box = np.asarray(self.domain, dtype=float)
        axes = [np.linspace(a, b, grid_n) for a, b in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
        vals = self.values(X)
        n = X.shape[1]
        header = ",".join(f"x{i+1}" for i in range(n)) + ",value"
        np.savetxt(path, np.hstack([X, vals[:, None]]), delimiter=",",
                   header=header, comments="")


@dataclass
class VolumeEstimate:
    value: float
    samples: int
    standard_error: float
    seed: int


def _as_predicate(A):
    if isinstance(A, SublevelSet):
        return A.membership, A.domain
    pred, domain = A            # (callable, box) pair
    return pred, domain


def volume_metric(A, B, samples: int = 100_000, seed: int = 0,
                  chunk: int = 20_000) -> VolumeEstimate:
    """Monte-Carlo estimate of mu(A symm-diff B) over the shared Lambda box."""
    if samples <= 0:
        raise ValueError("need at least one sample")
    pa, dom_a = _as_predicate(A)
    pb, dom_b = _as_predicate(B)
    if not np.allclose(np.asarray(dom_a, float), np.asarray(dom_b, float)):
        raise ValueError("sets must share the same Lambda box")
    box = np.asarray(dom_a, dtype=float)
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    hits = 0
    done = 0
    k = 0
    while done < samples:
        n = min(chunk, samples - done)
        rng = np.random.default_rng((seed, k))   # per-chunk derived seed
        X = rng.uniform(box[:, 0], box[:, 1], size=(n, len(box)))
        hits += int(np.sum(pa(X) != pb(X)))
        done += n
        k += 1
    p = hits / samples
    return VolumeEstimate(value=p * vol, samples=samples,
                          standard_error=math.sqrt(p * (1 - p) / samples) * vol,
                          seed=seed)


def backward_reach_outer(spec: OcpSpec, cfg: SynthesisConfig,
                         **synth_kwargs) -> tuple[SublevelSet, SubValueCertificate]:
    """Certified outer approximation of the backward reachable set of
    X0 = {g < 0} at horizon T."""
    if not spec.c.is_zero():
        raise ProblemError("reachability needs zero running cost")
    cert = synthesize(spec, cfg, **synth_kwargs)
    out = SublevelSet(V=cert.P, time=0.0, level=0.0,
                      domain=tuple(cfg.lambda_box), strict=True)
    return out, cert


def forward_reach_outer(spec: OcpSpec, cfg: SynthesisConfig,
                        **synth_kwargs) -> tuple[SublevelSet, SubValueCertificate]:
    """Outer approximation of the forward reachable set: negate f, go backward."""
    neg = replace(spec, f=tuple(-fi for fi in spec.f))
    return backward_reach_outer(neg, cfg, **synth_kwargs)


# -- Lorenz attractor pipeline ----------------------------------------------

LORENZ_DEFAULTS = {"sigma": 10.0, "beta": 8.0 / 3.0, "rho": 28.0}


def lorenz_spec(sigma: float = 10.0, beta: float = 8.0 / 3.0,
                rho: float = 28.0, degree: int = 4):
    """The unit-box-scaled Lorenz reach problem (50x state shift/scale,
    50x time speedup)."""
    from .model import (InputBox, ProblemVars, SemialgebraicSet, Weight,
                        OcpSpec, SynthesisConfig)
    pv = ProblemVars(("x1", "x2", "x3"), ())
    nv = pv.nvars

    def v(i):
        return Polynomial.variable(i, nv)

    x1, x2, x3 = v(0), v(1), v(2)
    f = (x2 * (50 * sigma) - x1 * (50 * sigma),
         x1 * (50 * rho) - x1 * x3 * 2500 - x1 * 1250 - x2 * 50,
         x1 * x2 * 2500 - x3 * (50 * beta) - Polynomial.constant(25 * beta, nv))
    g = ((x1 + 0.6) * (x1 + 0.6) + (x2 - 0.6) * (x2 - 0.6)
         + (x3 - 0.2) * (x3 - 0.2) - 0.01)
    omega = SemialgebraicSet(
        Polynomial.constant(1.0, nv) - x1 * x1 - x2 * x2 - x3 * x3, nv)
    spec = OcpSpec(pv, Polynomial.zero(nv), g, f, omega, None, None, 0.5)
    cfg = SynthesisConfig(
        lambda_box=((-0.4, 0.4), (-0.5, 0.5), (-0.4, 0.6)),
        weight=Weight("dirac", 0.0), degree=degree)
    return spec, cfg


def lorenz_pipeline(sigma: float = 10.0, beta: float = 8.0 / 3.0,
                    rho: float = 28.0, degree: int = 4, grid_n: int = 20,
                    sim_steps: int = 5000, **synth_kwargs):
    """Forward-reach outer set for the scaled Lorenz flow plus containment data.

    Builds X0 = {g < 0} (a small ball on the attractor), synthesizes the
    certificate with negated dynamics, then integrates a grid_n^3 grid of
    X0-interior points forward T = 0.5 under the true dynamics; reports the
    fraction of start points (the asserted side) and of endpoints inside the
    strict 0-sublevel set.
    """
    spec, cfg = lorenz_spec(sigma, beta, rho, degree)
    out, cert = forward_reach_outer(spec, cfg, **synth_kwargs)

    # grid over X0's bounding cube, keep interior points
    ctr = np.array([-0.6, 0.6, 0.2])
    lin = np.linspace(-0.1, 0.1, grid_n)
    G = np.stack(np.meshgrid(lin, lin, lin, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = ctr + G
    full = np.zeros((len(pts), spec.variables.nvars))
    full[:, :3] = pts
    starts = pts[spec.g.evaluate_batch(full) < 0.0]

    X = starts.copy()
    fp = _pack(spec.f, [0, 1, 2])
    lo = np.full(3, -50.0)
    hi = np.full(3, 50.0)
    ok = _kernels.rk4_const_batch(*fp, X, np.zeros((len(X), 0)),
                                  0.0, spec.horizon_T / sim_steps, sim_steps,
                                  lo, hi)
    start_in = out.membership(starts)
    end_in = out.membership(X)
    report = {
        "grid_points": int(len(starts)),
        "start_containment": float(np.mean(start_in)),
        "endpoint_containment": float(np.mean(end_in)),
        "integrator_ok": float(np.mean(np.asarray(ok) == 1)),
        "starts": starts,
        "endpoints": X,
        "certificate_ok": bool(cert.verification["ok"]),
    }
    return out, cert, report


# -- convergence studies and fixtures ---------------------------------------

def sublevel_convergence_study(spec: OcpSpec, cfg: SynthesisConfig, degrees,
                               gamma: float, s: float, reference,
                               samples: int = 100_000, seed: int = 0):
    """Per-degree D_V between {P_d(., s) <= gamma} and a reference set.

    reference is a SublevelSet or (predicate, box) pair; the RNG seed is
    shared across degrees (common random numbers)."""
    rows = []
    for d in degrees:
        try:
            cert = synthesize(spec, replace(cfg, degree=d))
        except Exception as exc:       # record and continue
            rows.append({"degree": d, "status": "failed", "error": str(exc),
                         "d_v": math.nan, "standard_error": math.nan})
            continue
        sl = SublevelSet(V=cert.P, time=s, level=gamma,
                         domain=tuple(cfg.lambda_box))
        est = volume_metric(sl, reference, samples=samples, seed=seed)
        rows.append({"degree": d, "status": "optimal", "error": None,
                     "d_v": est.value, "standard_error": est.standard_error})
    return rows


def staircase_fixture(d: int):
    """The L1-convergent staircase pair on Lambda = (0, 1), level 1.

    V is 0 then a ramp then 1; J_d matches V except its plateau sits at
    1 - 1/d.  J_d -> V in L1, yet the strict 1-sublevel sets keep
    D_V = 0.25 for every d, while the non-strict sets coincide.
    """
    def V(x):
        x = np.asarray(x, dtype=float).ravel()
        return np.clip(2.0 * (x - 0.25), 0.0, 1.0)

    def J(x):
        return np.minimum(V(x), 1.0 - 1.0 / d)

    return V, J


def staircase_dv(d: int, strict: bool, samples: int = 100_000,
                 seed: int = 0) -> VolumeEstimate:
    """D_V between the level-1 sublevel sets of the staircase pair."""
    V, J = staircase_fixture(d)
    box = ((0.0, 1.0),)
    if strict:
        pa = lambda X: V(X) < 1.0
        pb = lambda X: J(X) < 1.0
    else:
        pa = lambda X: V(X) <= 1.0
        pb = lambda X: J(X) <= 1.0
    return volume_metric((pa, box), (pb, box), samples=samples, seed=seed)
