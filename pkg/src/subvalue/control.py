"""Feedback extraction, closed-loop simulation, cost and performance bounds.

Controllers come from a candidate value function V: the bang-bang law
k_i(x,t) = -sign(c_i(x,t) + grad_x V(x,t)^T f_i(x)) for input-affine problems
over the unit box (sign(0) = +1, so a vanishing switching function commands
-1), or a grid argmin of the Hamiltonian for general input sets.  Simulation
is fixed-step classical RK4 with sample-and-hold feedback and step halving
across switching-surface crossings.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import (InputBox, OcpSpec, ProblemError, decompose_input_affine)
from .poly import Polynomial


def _pack(polys, cols):
    """Stack sparse polynomials into kernel arrays restricted to cols."""
    coeffs, exps, offsets = [], [], [0]
    for p in polys:
        c, e = p._as_arrays()
        for i, exp_row in enumerate(e):
            bad = [j for j in range(p.nvars)
                   if j not in cols and exp_row[j] != 0]
            if bad:
                raise ValueError("polynomial uses variables outside the packed set")
        coeffs.append(c)
        exps.append(e[:, cols] if len(e) else np.zeros((0, len(cols)), dtype=np.int64))
        offsets.append(offsets[-1] + len(c))
    coeffs = np.concatenate(coeffs) if coeffs else np.zeros(0)
    exps = np.vstack(exps) if exps else np.zeros((0, len(cols)), dtype=np.int64)
    return (np.ascontiguousarray(coeffs, dtype=np.float64),
            np.ascontiguousarray(exps, dtype=np.int64),
            np.ascontiguousarray(offsets, dtype=np.int64))


@dataclass
class BangBang:
    V: Polynomial
    c_parts: tuple              # per-input c_i over (x, t)
    f_parts: tuple              # per-input dynamics vectors over x
    switching: tuple            # sigma_i = c_i + grad_x V . f_i, over (x, t)
    nvars: int
    n: int
    m: int

    def __call__(self, x, t):
        pt = np.zeros(self.nvars)
        pt[:self.n] = x
        pt[-1] = t
        return np.array([-1.0 if s.evaluate(pt) >= 0.0 else 1.0
                         for s in self.switching])


@dataclass
class SampledArgmin:
    V: Polynomial
    u_grid: np.ndarray          # (ngrid, m) admissible input samples
    spec: OcpSpec

    def __call__(self, x, t):
        spec = self.spec
        pv = spec.variables
        grid = self.u_grid
        pts = np.zeros((len(grid), pv.nvars))
        pts[:, :pv.n] = x
        pts[:, pv.n:pv.n + pv.m] = grid
        pts[:, pv.t_index] = t
        ham = spec.c.evaluate_batch(pts)
        for i, fi in enumerate(spec.f):
            ham += self.V.differentiate(i).evaluate_batch(pts) * fi.evaluate_batch(pts)
        return grid[int(np.argmin(ham))].copy()


Controller = BangBang | SampledArgmin


def extract_bangbang(spec: OcpSpec, V: Polynomial) -> BangBang:
    """Per-input sign law; requires exact input-affine structure and the
    unit input box."""
    pv = spec.variables
    if pv.m == 0:
        raise ProblemError("no inputs to control")
    if spec.input_box is None or not spec.input_box.is_unit():
        raise ProblemError("bang-bang extraction needs inputs normalized to [-1,1]^m")
    c0, c_parts, f0, f_parts = decompose_input_affine(spec)
    switching = []
    for k in range(pv.m):
        sigma = c_parts[k]
        for i in range(pv.n):
            sigma = sigma + V.differentiate(i) * f_parts[k][i]
        switching.append(sigma)
    return BangBang(V=V, c_parts=c_parts, f_parts=f_parts,
                    switching=tuple(switching), nvars=pv.nvars, n=pv.n, m=pv.m)


def extract_argmin(spec: OcpSpec, V: Polynomial,
                   u_grid_resolution: int = 101) -> SampledArgmin:
    """Hamiltonian grid argmin; ties go to the first grid point in order."""
    pv = spec.variables
    if pv.m == 0:
        raise ProblemError("no inputs to control")
    if spec.input_box is not None:
        axes = [np.linspace(a, b, u_grid_resolution)
                for a, b in spec.input_box.intervals]
    else:
        axes = [np.linspace(-1.0, 1.0, u_grid_resolution)] * pv.m
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([g.ravel() for g in mesh], axis=1)
    if spec.u_set is not None:
        pts = np.zeros((len(grid), pv.nvars))
        pts[:, pv.n:pv.n + pv.m] = grid
        grid = grid[spec.u_set.defining_poly.evaluate_batch(pts) >= 0.0]
    if len(grid) == 0:
        raise ProblemError("input membership polynomial rejects every grid sample")
    return SampledArgmin(V=V, u_grid=grid, spec=spec)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (nnodes, n)
    inputs: np.ndarray          # (nnodes, m)
    step_count: int
    nominal_step: float
    ok: bool
    note: str = ""

    def final_state(self):
        return self.states[-1]

    def to_csv(self, path):
        n, m = self.states.shape[1], self.inputs.shape[1]
        header = "t," + ",".join(f"x{i+1}" for i in range(n))
        if m:
            header += "," + ",".join(f"u{i+1}" for i in range(m))
        data = np.hstack([self.times[:, None], self.states] +
                         ([self.inputs] if m else []))
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def _safety_box(spec: OcpSpec, x0, factor: float = 10.0):
    """factor x the per-axis extent of Omega around the start point."""
    from .synthesis import _axis_extent
    pv = spec.variables
    h = spec.omega.defining_poly
    x0 = np.asarray(x0, dtype=float)
    center = x0 if h.evaluate(pv.full_point(x0)) >= 0 else np.zeros(pv.n)
    lo = np.empty(pv.n)
    hi = np.empty(pv.n)
    for i in range(pv.n):
        lo[i] = center[i] - factor * _axis_extent(h, center, i, -1.0, pv.nvars)
        hi[i] = center[i] + factor * _axis_extent(h, center, i, +1.0, pv.nvars)
    return lo, hi


class SimulationError(RuntimeError):
    pass


def simulate(spec: OcpSpec, controller, x0, t0: float = 0.0, *,
             nsteps: int | None = None, max_halvings: int = 10,
             safety_factor: float = 10.0) -> Trajectory:
    """Integrate the closed (or open) loop from (x0, t0) to T.

    controller may be a BangBang/SampledArgmin, a callable u(x, t), or a
    constant input vector (open loop).  Fixed-step RK4, default step T/1e5,
    feedback held over each step; bang-bang steps are halved (down to
    step/2^max_halvings) when a switching function changes sign across them.
    """
    pv = spec.variables
    T = spec.horizon_T
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)) or len(x0) != pv.n:
        raise SimulationError("x0 must be a finite state vector")
    if not 0.0 <= t0 <= T:
        raise SimulationError("t0 outside [0, T]")
    if nsteps is None:
        nsteps = max(1, int(round((T - t0) / (T / 100_000))))
    lo, hi = _safety_box(spec, x0, safety_factor)
    dt0 = (T - t0) / nsteps
    f_pack = _pack(spec.f, list(range(pv.n + pv.m)))

    if isinstance(controller, BangBang):
        s_pack = _pack(controller.switching, list(range(pv.n)) + [pv.t_index])
        ts, xs, us, ok = _kernels.rk4_bangbang_path(
            *f_pack, *s_pack, x0, t0, T, nsteps, max_halvings, lo, hi)
        if ok == -2:
            raise SimulationError("refinement buffer overflow (chattering)")
        return Trajectory(np.asarray(ts), np.asarray(xs), np.asarray(us),
                          step_count=len(ts) - 1, nominal_step=dt0, ok=ok == 1,
                          note="" if ok == 1 else "state escaped the safety box")

    if not callable(controller):
        u_const = np.atleast_1d(np.asarray(controller, dtype=float))
        if len(u_const) != pv.m:
            raise SimulationError("constant input length != number of inputs")
        # chunked batch stepping: store a node every `inner` steps
        inner = max(1, nsteps // 10_000)
        nseg = int(math.ceil(nsteps / inner))
        times = [t0]
        states = [x0.copy()]
        X = x0.copy()[None, :]
        U = u_const[None, :]
        ok = True
        done = 0
        for s in range(nseg):
            k = min(inner, nsteps - done)
            flag = _kernels.rk4_const_batch(*f_pack, X, U, t0 + done * dt0,
                                            dt0, k, lo, hi)
            done += k
            times.append(t0 + done * dt0)
            states.append(X[0].copy())
            if not flag[0]:
                ok = False
                break
        times = np.asarray(times)
        states = np.asarray(states)
        inputs = np.tile(u_const, (len(times), 1))
        return Trajectory(times, states, inputs, step_count=done,
                          nominal_step=dt0, ok=ok,
                          note="" if ok else "state escaped the safety box")

    # generic callable: plain python loop (use a coarser nsteps if slow)
    times = np.empty(nsteps + 1)
    states = np.empty((nsteps + 1, pv.n))
    inputs = np.empty((nsteps + 1, pv.m))
    times[0] = t0
    states[0] = x0
    x = x0.copy()
    ok = True
    fc, fe, foff = f_pack
    k = 0
    for k in range(nsteps):
        t = t0 + k * dt0
        u = np.atleast_1d(np.asarray(controller(x, t), dtype=float))
        inputs[k] = u

        def deriv(y):
            z = np.concatenate([y, u])[None, :]
            return _kernels.eval_polyvec(fc, fe, foff, z)[0]

        k1 = deriv(x)
        k2 = deriv(x + dt0 / 2 * k1)
        k3 = deriv(x + dt0 / 2 * k2)
        k4 = deriv(x + dt0 * k3)
        x = x + dt0 / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        times[k + 1] = t0 + (k + 1) * dt0
        states[k + 1] = x
        if np.any((x < lo) | (x > hi) | ~np.isfinite(x)):
            ok = False
            break
    last = k + 2 if nsteps else 1
    inputs[last - 1] = inputs[max(last - 2, 0)]
    return Trajectory(times[:last], states[:last], inputs[:last],
                      step_count=last - 1, nominal_step=dt0, ok=ok,
                      note="" if ok else "state escaped the safety box")


def cost(spec: OcpSpec, traj: Trajectory, N: int = 1_000_000) -> float:
    """Riemann-sum running cost plus terminal cost along a trajectory.

    Left-endpoint rule on N nodes; states linearly interpolated between
    trajectory nodes, inputs held from the preceding node.
    """
    pv = spec.variables
    t0, T = traj.times[0], traj.times[-1]
    if abs(T - spec.horizon_T) > 1e-9 * max(1.0, spec.horizon_T):
        raise ValueError("trajectory does not span [t0, T]")
    dt = (T - t0) / N
    tq = t0 + dt * np.arange(N)
    pts = np.zeros((N, pv.nvars))
    for i in range(pv.n):
        pts[:, i] = np.interp(tq, traj.times, traj.states[:, i])
    if pv.m:
        idx = np.clip(np.searchsorted(traj.times, tq, side="right") - 1,
                      0, len(traj.times) - 1)
        pts[:, pv.n:pv.n + pv.m] = traj.inputs[idx]
    pts[:, pv.t_index] = tq
    running = float(np.sum(spec.c.evaluate_batch(pts)) * dt)
    end = pv.full_point(traj.states[-1], t=T)
    return running + float(spec.g.evaluate(end))


@dataclass
class PerformanceReport:
    realized_cost: float
    reference_costs: dict
    loss_estimate: float        # realized - best known (infimum stand-in)
    bound_C: float
    w1inf_distance_estimate: float
    bound_value: float
    caveats: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1)


def performance_bound(spec: OcpSpec, J: Polynomial, V_oracle,
                      omega_sample_box, *, realized_cost: float,
                      reference_costs: dict | None = None,
                      grid_n: int = 200, horizon_T: float | None = None,
                      kink_band: float = 1e-3,
                      kink_axis: int | None = None) -> PerformanceReport:
    """Suboptimality bound C * ||J - V*||_{W^1,inf} against a value oracle.

    The distance is the sampled sup of |J - V*| plus the sup of each first
    partial-derivative difference (central differences for the oracle),
    excluding a kink_band-radius band around kink_axis = 0 if given.
    C = 2 max{1, T, T max_i sup |f_i|} with the dynamics sup sampled over
    omega_sample_box x U.
    """
    pv = spec.variables
    T = horizon_T if horizon_T is not None else spec.horizon_T
    box = np.asarray(omega_sample_box, dtype=float)
    axes = [np.linspace(a, b, grid_n) for a, b in box]
    taxis = np.linspace(0.0, T, grid_n)
    mesh = np.meshgrid(*axes, taxis, indexing="ij")
    X = np.stack([m.ravel() for m in mesh[:-1]], axis=1)
    tv = mesh[-1].ravel()
    if kink_axis is not None:
        keep = np.abs(X[:, kink_axis]) > kink_band
        X, tv = X[keep], tv[keep]
    pts = np.zeros((len(tv), pv.nvars))
    pts[:, :pv.n] = X
    pts[:, pv.t_index] = tv

    def oracle(Xa, ta):
        return V_oracle(Xa if pv.n > 1 else Xa[:, 0], ta)

    dist = float(np.max(np.abs(J.evaluate_batch(pts) - oracle(X, tv))))
    eps = 1e-6
    for i in range(pv.n):
        dJ = J.differentiate(i).evaluate_batch(pts)
        Xp, Xm = X.copy(), X.copy()
        Xp[:, i] += eps
        Xm[:, i] -= eps
        dV = (oracle(Xp, tv) - oracle(Xm, tv)) / (2 * eps)
        dist += float(np.max(np.abs(dJ - dV)))
    dJt = J.differentiate(pv.t_index).evaluate_batch(pts)
    dVt = (oracle(X, tv + eps) - oracle(X, tv - eps)) / (2 * eps)
    dist += float(np.max(np.abs(dJt - dVt)))

    # C from the sampled dynamics sup over the box x U
    rng = np.random.default_rng(0)
    ns = 20_000
    S = rng.uniform(box[:, 0], box[:, 1], size=(ns, pv.n))
    spts = np.zeros((ns, pv.nvars))
    spts[:, :pv.n] = S
    if pv.m:
        spts[:, pv.n:pv.n + pv.m] = rng.uniform(-1.0, 1.0, size=(ns, pv.m))
    fsup = max(float(np.max(np.abs(fi.evaluate_batch(spts)))) for fi in spec.f)
    C = 2.0 * max(1.0, T, T * fsup)

    refs = dict(reference_costs or {})
    best = min([realized_cost] + list(refs.values()))
    return PerformanceReport(
        realized_cost=realized_cost, reference_costs=refs,
        loss_estimate=realized_cost - best, bound_C=C,
        w1inf_distance_estimate=dist, bound_value=C * dist,
        caveats=["loss is an upper-bound estimate (best-known cost stands in "
                 "for the true infimum)",
                 "forward-flow containment in Omega checked by sampling only"])


def simulate_piecewise_random(spec: OcpSpec, x0s, rng, *, n_switches: int = 10,
                              nsteps: int = 2000):
    """Batch RK4 under piecewise-constant random admissible inputs.

    Returns (inside flags, one violating trajectory summary or None); used by
    the advisory containment probe.
    """
    pv = spec.variables
    h = spec.omega.defining_poly
    X = np.array(x0s, dtype=float)
    B = len(X)
    lo, hi = _safety_box(spec, X.mean(axis=0), 10.0)
    f_pack = _pack(spec.f, list(range(pv.n + pv.m)))
    T = spec.horizon_T
    seg = max(1, nsteps // max(n_switches, 1))
    inside = np.ones(B, dtype=bool)
    violating = None
    t = 0.0
    dt = T / nsteps
    done = 0
    for s in range(n_switches):
        k = min(seg, nsteps - done)
        if k <= 0:
            break
        if pv.m:
            if spec.input_box is not None:
                ivals = np.asarray(spec.input_box.intervals, dtype=float)
                U = rng.uniform(ivals[:, 0], ivals[:, 1], size=(B, pv.m))
            else:
                U = rng.uniform(-1.0, 1.0, size=(B, pv.m))
        else:
            U = np.zeros((B, 0))
        flags = _kernels.rk4_const_batch(*f_pack, X, U, t, dt, k, lo, hi)
        done += k
        t = done * dt
        pts = np.zeros((B, pv.nvars))
        pts[:, :pv.n] = X
        stays = (h.evaluate_batch(pts) >= 0.0) & (np.asarray(flags) == 1)
        newly_out = inside & ~stays
        if violating is None and np.any(newly_out):
            i = int(np.argmax(newly_out))
            violating = {"x0": np.array(x0s[i]).tolist(),
                         "exit_time": t, "state": X[i].tolist()}
        inside &= stays
    return inside, violating
