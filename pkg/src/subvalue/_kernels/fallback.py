"""Pure-numpy implementations of the speed kernels.

Used when the compiled extension is unavailable; semantics match speed.pyx
exactly (same node placement, same sign convention, same refinement rule).
"""
import numpy as np


def eval_terms(coeffs, exps, pts):
    pts = np.asarray(pts, dtype=np.float64)
    if len(coeffs) == 0:
        return np.zeros(pts.shape[0])
    # (nterms, npts) monomial values via broadcasting
    mono = np.prod(pts[None, :, :] ** np.asarray(exps)[:, None, :], axis=2)
    return np.asarray(coeffs) @ mono


def eval_polyvec(coeffs, exps, offsets, pts):
    pts = np.asarray(pts, dtype=np.float64)
    npolys = len(offsets) - 1
    out = np.empty((pts.shape[0], npolys))
    for p in range(npolys):
        lo, hi = offsets[p], offsets[p + 1]
        out[:, p] = eval_terms(coeffs[lo:hi], exps[lo:hi], pts)
    return out


def _deriv_batch(fc, fe, foff, X, U):
    Z = np.concatenate([X, U], axis=1)
    return eval_polyvec(fc, fe, foff, Z)


def rk4_const_batch(fc, fe, foff, X, U, t0, dt, nsteps, lo, hi):
    ok = np.ones(X.shape[0], dtype=np.int8)
    frozen = np.zeros(X.shape[0], dtype=bool)
    for _ in range(nsteps):
        k1 = _deriv_batch(fc, fe, foff, X, U)
        k2 = _deriv_batch(fc, fe, foff, X + dt / 2 * k1, U)
        k3 = _deriv_batch(fc, fe, foff, X + dt / 2 * k2, U)
        k4 = _deriv_batch(fc, fe, foff, X + dt * k3, U)
        step = dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[~frozen] += step[~frozen]
        bad = np.any((X < lo) | (X > hi) | np.isnan(X), axis=1)
        newly = bad & ~frozen
        ok[newly] = 0
        frozen |= bad
        if frozen.all():
            break
    return ok


def _rk4_step(fc, fe, foff, x, u, dt):
    def f(y):
        return eval_polyvec(fc, fe, foff, np.concatenate([y, u])[None, :])[0]

    k1 = f(x)
    k2 = f(x + dt / 2 * k1)
    k3 = f(x + dt / 2 * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_bangbang_path(fc, fe, foff, sc, se, soff, x0, t0, t_end,
                      nsteps, max_halvings, lo, hi):
    n = len(x0)
    m = len(soff) - 1
    dt0 = (t_end - t0) / nsteps
    dt_min = dt0 / 2.0 ** max_halvings

    def switch_u(x, t):
        sig = eval_polyvec(sc, se, soff, np.concatenate([x, [t]])[None, :])[0]
        return np.where(sig >= 0.0, -1.0, 1.0)

    ts, xs, us = [t0], [np.asarray(x0, dtype=float)], []
    t = t0
    ok = 1
    for k in range(nsteps):
        t_next = t0 + (k + 1) * (t_end - t0) / nsteps if k < nsteps - 1 else t_end
        budget = max_halvings
        while t < t_next - 1e-13 * (t_end - t0) and ok == 1:
            dt = t_next - t
            u = switch_u(xs[-1], t)
            while True:
                xn = _rk4_step(fc, fe, foff, xs[-1], u, dt)
                changed = np.any(switch_u(xn, t + dt) != u)
                if changed and budget > 0 and dt / 2 >= dt_min * 0.999999:
                    dt /= 2
                    budget -= 1
                    continue
                break
            t += dt
            ts.append(t)
            xs.append(xn)
            us.append(u)
            if np.any((xn < lo) | (xn > hi) | np.isnan(xn)):
                ok = 0
        if ok != 1:
            break
    us.append(us[-1] if us else np.zeros(m))
    return (np.array(ts), np.array(xs),
            np.array(us).reshape(len(ts), m), ok)
