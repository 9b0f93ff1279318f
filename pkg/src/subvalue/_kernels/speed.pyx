# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: sparse-monomial evaluation and RK4 stepping.

Mirrors the numpy fallback in fallback.py; both expose identical signatures.
"""
import numpy as np

cimport numpy as cnp


cdef inline double _term(const double[::1] pt, const long long[:, ::1] exps,
                         Py_ssize_t row, Py_ssize_t nv) noexcept nogil:
    cdef double v = 1.0
    cdef double base
    cdef long long e
    cdef Py_ssize_t j
    for j in range(nv):
        e = exps[row, j]
        if e == 0:
            continue
        base = pt[j]
        while e > 0:
            if e & 1:
                v *= base
            base *= base
            e >>= 1
    return v


cdef inline double _eval_one(const double[::1] coeffs, const long long[:, ::1] exps,
                             const double[::1] pt, Py_ssize_t lo, Py_ssize_t hi,
                             Py_ssize_t nv) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(lo, hi):
        acc += coeffs[k] * _term(pt, exps, k, nv)
    return acc


def eval_terms(const double[::1] coeffs, const long long[:, ::1] exps,
               const double[:, ::1] pts):
    """Evaluate one sparse polynomial at a batch of points."""
    cdef Py_ssize_t npts = pts.shape[0]
    cdef Py_ssize_t nv = pts.shape[1]
    cdef Py_ssize_t nterms = coeffs.shape[0]
    out = np.empty(npts, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(npts):
            o[i] = _eval_one(coeffs, exps, pts[i], 0, nterms, nv)
    return out


def eval_polyvec(const double[::1] coeffs, const long long[:, ::1] exps,
                 const long long[::1] offsets, const double[:, ::1] pts):
    """Evaluate a stacked vector of polynomials at a batch of points -> (npts, npolys)."""
    cdef Py_ssize_t npts = pts.shape[0]
    cdef Py_ssize_t nv = pts.shape[1]
    cdef Py_ssize_t npolys = offsets.shape[0] - 1
    out = np.empty((npts, npolys), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, p
    with nogil:
        for i in range(npts):
            for p in range(npolys):
                o[i, p] = _eval_one(coeffs, exps, pts[i], offsets[p], offsets[p + 1], nv)
    return out


cdef int _deriv(const double[::1] fc, const long long[:, ::1] fe,
                const long long[::1] foff, const double[::1] x,
                const double[::1] u, double[::1] z, double[::1] dx,
                Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    # z is scratch of length n+m holding the stacked (x, u) point
    cdef Py_ssize_t j
    for j in range(n):
        z[j] = x[j]
    for j in range(m):
        z[n + j] = u[j]
    for j in range(n):
        dx[j] = _eval_one(fc, fe, z, foff[j], foff[j + 1], n + m)
    return 0


def rk4_const_batch(const double[::1] fc, const long long[:, ::1] fe,
                    const long long[::1] foff,
                    double[:, ::1] X, const double[:, ::1] U,
                    double t0, double dt, Py_ssize_t nsteps,
                    const double[::1] lo, const double[::1] hi):
    """Advance a batch of states under constant per-trajectory inputs.

    X is modified in place. Returns an int8 array flagging trajectories that
    stayed inside the safety box [lo, hi] (escaped ones are frozen).
    """
    cdef Py_ssize_t B = X.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t m = U.shape[1]
    ok = np.ones(B, dtype=np.int8)
    cdef signed char[::1] okv = ok
    scratch = np.empty((5, n), dtype=np.float64)
    zbuf = np.empty(n + m, dtype=np.float64)
    cdef double[:, ::1] s = scratch
    cdef double[::1] z = zbuf
    cdef Py_ssize_t b, it, j
    cdef double half = dt / 2.0
    with nogil:
        for b in range(B):
            for it in range(nsteps):
                _deriv(fc, fe, foff, X[b], U[b], z, s[0], n, m)
                for j in range(n):
                    s[4, j] = X[b, j] + half * s[0, j]
                _deriv(fc, fe, foff, s[4], U[b], z, s[1], n, m)
                for j in range(n):
                    s[4, j] = X[b, j] + half * s[1, j]
                _deriv(fc, fe, foff, s[4], U[b], z, s[2], n, m)
                for j in range(n):
                    s[4, j] = X[b, j] + dt * s[2, j]
                _deriv(fc, fe, foff, s[4], U[b], z, s[3], n, m)
                for j in range(n):
                    X[b, j] += dt / 6.0 * (s[0, j] + 2.0 * s[1, j] + 2.0 * s[2, j] + s[3, j])
                for j in range(n):
                    if X[b, j] < lo[j] or X[b, j] > hi[j] or X[b, j] != X[b, j]:
                        okv[b] = 0
                        break
                if okv[b] == 0:
                    break
    return ok


def rk4_bangbang_path(const double[::1] fc, const long long[:, ::1] fe,
                      const long long[::1] foff,
                      const double[::1] sc, const long long[:, ::1] se,
                      const long long[::1] soff,
                      const double[::1] x0, double t0, double t_end,
                      Py_ssize_t nsteps, Py_ssize_t max_halvings,
                      const double[::1] lo, const double[::1] hi):
    """Closed-loop RK4 with per-input sign feedback u_i = -sign(sigma_i(x, t)).

    sign(0) counts as +1. Within each nominal interval of length
    (t_end - t0) / nsteps a step is retried at half length (down to
    step / 2**max_halvings, budgeted per interval so sliding arcs stay
    O(nsteps)) whenever a switching function changes sign across it.
    Returns (t_nodes, x_nodes, u_nodes, ok_flag).
    """
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t m = soff.shape[0] - 1
    cdef double dt0 = (t_end - t0) / nsteps
    cdef Py_ssize_t cap = nsteps * (max_halvings + 2) + 8
    t_arr = np.empty(cap, dtype=np.float64)
    x_arr = np.empty((cap, n), dtype=np.float64)
    u_arr = np.empty((cap, m), dtype=np.float64)
    cdef double[::1] tv = t_arr
    cdef double[:, ::1] xv = x_arr
    cdef double[:, ::1] uv = u_arr
    scratch = np.empty((6, n), dtype=np.float64)
    zbuf = np.empty(n + m, dtype=np.float64)
    ubuf = np.empty(m, dtype=np.float64)
    xtbuf = np.empty(n + 1, dtype=np.float64)
    cdef double[:, ::1] s = scratch
    cdef double[::1] z = zbuf
    cdef double[::1] u = ubuf
    cdef double[::1] xt = xtbuf
    cdef Py_ssize_t count = 0, j, p, k, budget
    cdef double t = t0, t_next, dt, half, sig_new
    cdef int ok = 1, changed, escaped
    cdef double dt_min = dt0 / (2.0 ** max_halvings)

    for j in range(n):
        xv[0, j] = x0[j]
    tv[0] = t0
    with nogil:
        for k in range(nsteps):
            t_next = t0 + (k + 1) * (t_end - t0) / nsteps
            if k == nsteps - 1:
                t_next = t_end
            budget = max_halvings
            while t < t_next - 1e-13 * (t_end - t0) and ok == 1:
                dt = t_next - t
                # feedback at the sub-step's start state (sample-and-hold)
                for j in range(n):
                    xt[j] = xv[count, j]
                xt[n] = t
                for p in range(m):
                    sig_new = _eval_one(sc, se, xt, soff[p], soff[p + 1], n + 1)
                    u[p] = -1.0 if sig_new >= 0.0 else 1.0
                while True:
                    half = dt / 2.0
                    _deriv(fc, fe, foff, xv[count], u, z, s[0], n, m)
                    for j in range(n):
                        s[4, j] = xv[count, j] + half * s[0, j]
                    _deriv(fc, fe, foff, s[4], u, z, s[1], n, m)
                    for j in range(n):
                        s[4, j] = xv[count, j] + half * s[1, j]
                    _deriv(fc, fe, foff, s[4], u, z, s[2], n, m)
                    for j in range(n):
                        s[4, j] = xv[count, j] + dt * s[2, j]
                    _deriv(fc, fe, foff, s[4], u, z, s[3], n, m)
                    for j in range(n):
                        s[5, j] = xv[count, j] + dt / 6.0 * (s[0, j] + 2.0 * s[1, j] + 2.0 * s[2, j] + s[3, j])
                    changed = 0
                    for j in range(n):
                        xt[j] = s[5, j]
                    xt[n] = t + dt
                    for p in range(m):
                        sig_new = _eval_one(sc, se, xt, soff[p], soff[p + 1], n + 1)
                        if (sig_new >= 0.0) != (u[p] < 0.0):
                            changed = 1
                            break
                    if changed == 1 and budget > 0 and half >= dt_min * 0.999999:
                        dt = half
                        budget -= 1
                        continue
                    break
                escaped = 0
                for j in range(n):
                    if s[5, j] < lo[j] or s[5, j] > hi[j] or s[5, j] != s[5, j]:
                        escaped = 1
                count += 1
                if count >= cap - 1:
                    ok = -2
                    count -= 1
                    break
                t += dt
                tv[count] = t
                for j in range(n):
                    xv[count, j] = s[5, j]
                for p in range(m):
                    uv[count - 1, p] = u[p]
                if escaped == 1:
                    ok = 0
            if ok != 1:
                break
    for p in range(m):
        uv[count, p] = uv[count - 1, p] if count > 0 else 0.0
    return t_arr[:count + 1], x_arr[:count + 1], u_arr[:count + 1], ok
