"""Conic normal form and solver drivers for the synthesized SDPs.

The decision vector is [free scalars | svec(Q_1) | svec(Q_2) | ...] with each
Gram block constrained to the PSD-triangle cone and coefficient matching
expressed as equality rows.  svec uses the upper triangle, column-stacked,
off-diagonal entries scaled by sqrt(2), so the Euclidean inner product of two
svecs equals the Frobenius product of the matrices.

Primary solver is Clarabel; cvxopt's conelp serves as an independent backend
for cross-validation.  Residuals reported in SdpSolution are recomputed here
from the returned iterates, never copied from solver self-reports.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SQRT2 = math.sqrt(2.0)


def svec_len(d: int) -> int:
    return d * (d + 1) // 2


def svec(M: np.ndarray) -> np.ndarray:
    d = M.shape[0]
    out = np.empty(svec_len(d))
    k = 0
    for j in range(d):
        for i in range(j + 1):
            out[k] = M[i, j] if i == j else M[i, j] * SQRT2
            k += 1
    return out


def smat(v: np.ndarray) -> np.ndarray:
    d = int((math.isqrt(8 * len(v) + 1) - 1) // 2)
    M = np.empty((d, d))
    k = 0
    for j in range(d):
        for i in range(j + 1):
            if i == j:
                M[i, j] = v[k]
            else:
                M[i, j] = M[j, i] = v[k] / SQRT2
            k += 1
    return M


def svec_index(i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, within the svec of its block."""
    return j * (j + 1) // 2 + i


@dataclass(frozen=True)
class SdpProblem:
    """min obj @ x  s.t.  A_eq x = b_eq,  each svec segment of x is PSD."""

    n_free: int
    psd_dims: tuple
    obj: np.ndarray
    A_eq: sp.csc_matrix
    b_eq: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.n_free + sum(svec_len(d) for d in self.psd_dims)

    def block_slices(self):
        out = []
        start = self.n_free
        for d in self.psd_dims:
            out.append(slice(start, start + svec_len(d)))
            start += svec_len(d)
        return out


@dataclass
class SdpSolution:
    status: str                  # "optimal" | "primal_infeasible" | "dual_infeasible"
                                 # | "max_iterations" | "numerical_error"
    x: np.ndarray | None
    y_eq: np.ndarray | None      # multipliers for the equality rows
    z_psd: list | None           # dual svec segment per Gram block
    objective: float
    iterations: int
    solve_time: float
    solver: str
    residuals: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None   # improving/infeasibility ray if any

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class SolverSettings:
    tol_feas: float = 1e-9
    tol_gap: float = 1e-9
    max_iter: int = 200
    verbose: bool = False
    log_path: str | None = None


def compute_residuals(prob: SdpProblem, x, y_eq, z_psd) -> dict:
    """Recompute feasibility and gap measures from raw iterates."""
    res: dict = {}
    eq = prob.A_eq @ x - prob.b_eq
    res["primal_eq_inf"] = float(np.max(np.abs(eq))) if len(eq) else 0.0
    min_eig = 0.0
    for sl, d in zip(prob.block_slices(), prob.psd_dims):
        w = np.linalg.eigvalsh(smat(x[sl]))
        min_eig = min(min_eig, float(w[0]))
    res["primal_psd_min_eig"] = min_eig
    if y_eq is not None and z_psd is not None:
        # dual residual: obj + A^T y - z  (z zero on free coordinates)
        zfull = np.zeros(prob.n_vars)
        for sl, zb in zip(prob.block_slices(), z_psd):
            zfull[sl] = zb
        dres = prob.obj + prob.A_eq.T @ y_eq - zfull
        res["dual_eq_inf"] = float(np.max(np.abs(dres))) if len(dres) else 0.0
        dual_min_eig = 0.0
        for zb in z_psd:
            w = np.linalg.eigvalsh(smat(np.asarray(zb)))
            dual_min_eig = min(dual_min_eig, float(w[0]))
        res["dual_psd_min_eig"] = dual_min_eig
        pobj = float(prob.obj @ x)
        dobj = float(-prob.b_eq @ y_eq)
        res["gap"] = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
        # complementary slackness over the PSD blocks
        comp = 0.0
        for sl, zb in zip(prob.block_slices(), z_psd):
            comp = max(comp, abs(float(np.dot(x[sl], zb))))
        res["complementarity"] = comp
    return res


def _clarabel_status(name: str) -> str:
    mapping = {
        "Solved": "optimal",
        "AlmostSolved": "optimal",
        "PrimalInfeasible": "primal_infeasible",
        "AlmostPrimalInfeasible": "primal_infeasible",
        "DualInfeasible": "dual_infeasible",
        "AlmostDualInfeasible": "dual_infeasible",
        "MaxIterations": "max_iterations",
        "MaxTime": "max_iterations",
    }
    return mapping.get(name, "numerical_error")


def solve(prob: SdpProblem, settings: SolverSettings = SolverSettings()) -> SdpSolution:
    """Solve with Clarabel (homogeneous-embedding interior point)."""
    import clarabel

    nx = prob.n_vars
    m_eq = prob.A_eq.shape[0]
    # stack [equalities; -I on each svec segment]
    rows = [prob.A_eq]
    cones = [clarabel.ZeroConeT(m_eq)] if m_eq else []
    for sl, d in zip(prob.block_slices(), prob.psd_dims):
        L = svec_len(d)
        block = sp.coo_matrix(
            (-np.ones(L), (np.arange(L), np.arange(sl.start, sl.stop))),
            shape=(L, nx))
        rows.append(block)
        cones.append(clarabel.PSDTriangleConeT(d))
    A = sp.vstack(rows).tocsc()
    b = np.concatenate([prob.b_eq, np.zeros(A.shape[0] - m_eq)])
    P = sp.csc_matrix((nx, nx))

    st = clarabel.DefaultSettings()
    st.verbose = settings.verbose or settings.log_path is not None
    st.max_iter = settings.max_iter
    st.tol_feas = settings.tol_feas
    st.tol_gap_abs = settings.tol_gap
    st.tol_gap_rel = settings.tol_gap
    # ill-conditioned Gram systems (large dynamics coefficients) stall the
    # KKT solves otherwise; extra refinement recovers ~1e-8 objectives
    st.iterative_refinement_max_iter = 50
    st.iterative_refinement_stop_ratio = 2.0

    solver = clarabel.DefaultSolver(P, prob.obj, A, b, cones, st)
    t0 = time.perf_counter()
    if settings.log_path is not None:
        import contextlib
        import io
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            sol = solver.solve()
        with open(settings.log_path, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sol = solver.solve()
    wall = time.perf_counter() - t0

    status = _clarabel_status(str(sol.status))
    x = np.asarray(sol.x)
    y_all = np.asarray(sol.z)
    y_eq = y_all[:m_eq]
    z_psd = []
    off = m_eq
    for d in prob.psd_dims:
        z_psd.append(y_all[off:off + svec_len(d)])
        off += svec_len(d)

    out = SdpSolution(
        status=status, x=x, y_eq=y_eq, z_psd=z_psd,
        objective=float(prob.obj @ x), iterations=int(sol.iterations),
        solve_time=wall, solver="clarabel")
    if status == "optimal":
        out.residuals = compute_residuals(prob, x, y_eq, z_psd)
    elif status in ("primal_infeasible", "dual_infeasible"):
        # homogeneous embedding exposes the certificate in the final iterate
        out.certificate = y_all.copy() if status == "primal_infeasible" else x.copy()
    return out


def solve_with_backend(prob: SdpProblem,
                       settings: SolverSettings = SolverSettings()) -> SdpSolution:
    """Independent cross-check via cvxopt's conelp."""
    from cvxopt import matrix, solvers, spmatrix

    nx = prob.n_vars
    # conelp: min c'x  s.t. Gx + s = h (s in cone), Ax = b
    Grows, hparts, dims_s = [], [], []
    for sl, d in zip(prob.block_slices(), prob.psd_dims):
        # full d*d column-stacked matrix from the svec segment, negated
        I, J, V = [], [], []
        k = 0
        for j in range(d):
            for i in range(j + 1):
                col = sl.start + k
                if i == j:
                    I.append(j * d + i); J.append(col); V.append(-1.0)
                else:
                    I.append(j * d + i); J.append(col); V.append(-1.0 / SQRT2)
                    I.append(i * d + j); J.append(col); V.append(-1.0 / SQRT2)
                k += 1
        Grows.append((I, J, V, d * d))
        hparts.append(np.zeros(d * d))
        dims_s.append(d)
    I_all, J_all, V_all = [], [], []
    off = 0
    for I, J, V, size in Grows:
        I_all.extend(i + off for i in I)
        J_all.extend(J)
        V_all.extend(V)
        off += size
    G = spmatrix(V_all, I_all, J_all, (off, nx))
    h = matrix(np.concatenate(hparts) if hparts else np.zeros(0))
    Acoo = prob.A_eq.tocoo()
    A = spmatrix(Acoo.data.tolist(), Acoo.row.tolist(), Acoo.col.tolist(),
                 prob.A_eq.shape)
    b = matrix(prob.b_eq)
    c = matrix(prob.obj)

    opts = {"show_progress": settings.verbose,
            "maxiters": settings.max_iter,
            "abstol": settings.tol_gap, "reltol": settings.tol_gap,
            "feastol": max(settings.tol_feas, 1e-10)}
    t0 = time.perf_counter()
    try:
        res = solvers.conelp(c, G, h, dims={"l": 0, "q": [], "s": dims_s},
                             A=A, b=b, options=opts)
    except (ZeroDivisionError, ArithmeticError, ValueError) as exc:
        return SdpSolution(status="numerical_error", x=None, y_eq=None,
                           z_psd=None, objective=math.nan, iterations=-1,
                           solve_time=time.perf_counter() - t0, solver="cvxopt",
                           residuals={"exception": str(exc)})
    wall = time.perf_counter() - t0

    status_map = {"optimal": "optimal",
                  "primal infeasible": "primal_infeasible",
                  "dual infeasible": "dual_infeasible",
                  "unknown": "numerical_error"}
    status = status_map.get(res["status"], "numerical_error")
    x = np.asarray(res["x"]).ravel() if res["x"] is not None else None
    y_eq = np.asarray(res["y"]).ravel() if res["y"] is not None else None
    z_psd = None
    if res["z"] is not None and status == "optimal":
        z_psd = []
        zfull = np.asarray(res["z"]).ravel()
        off = 0
        for d in prob.psd_dims:
            Z = zfull[off:off + d * d].reshape(d, d, order="F")
            z_psd.append(svec(0.5 * (Z + Z.T)))
            off += d * d
    out = SdpSolution(
        status=status, x=x, y_eq=y_eq, z_psd=z_psd,
        objective=float(prob.obj @ x) if x is not None else math.nan,
        iterations=int(res.get("iterations", -1)), solve_time=wall,
        solver="cvxopt")
    if status == "optimal":
        out.residuals = compute_residuals(prob, x, y_eq, z_psd)
    return out


def cross_validate(prob: SdpProblem, settings: SolverSettings = SolverSettings(),
                   rtol: float = 1e-5) -> dict:
    """Run both solvers and compare optimal values."""
    a = solve(prob, settings)
    b = solve_with_backend(prob, settings)
    agree = (a.status == b.status and
             (not a.is_optimal or
              abs(a.objective - b.objective) <= rtol * max(1.0, abs(a.objective))))
    return {"clarabel": a, "cvxopt": b, "agree": agree}


def export_sdpa(prob: SdpProblem, path: str) -> None:
    """Write SDPA sparse format (.dat-s).

    SDPA's standard form is max sum c_i y_i s.t. sum y_i F_i - F_0 >= 0 (block
    diagonal).  Our scalars become the y variables; each Gram block maps to a
    PSD block via unit-coefficient F_i entries, and each equality row becomes
    a 2x1 diagonal block pair {row, -row} forcing the row to zero.
    """
    nx = prob.n_vars
    m_eq = prob.A_eq.shape[0]
    blocks = list(prob.psd_dims) + ([-2 * m_eq] if m_eq else [])
    lines = [f"{nx}", f"{len(blocks)}",
             " ".join(str(d) for d in blocks),
             " ".join(repr(float(-c)) for c in prob.obj)]

    def entry(var, blk, i, j, v):
        lines.append(f"{var} {blk} {i} {j} {v!r}")

    # gram blocks: variable (svec entry) k appears at (i, j) of its block
    for bidx, (sl, d) in enumerate(zip(prob.block_slices(), prob.psd_dims), 1):
        k = 0
        for j in range(d):
            for i in range(j + 1):
                var = sl.start + k + 1
                val = 1.0 if i == j else 1.0 / SQRT2
                entry(var, bidx, i + 1, j + 1, val)
                k += 1
    if m_eq:
        blk = len(prob.psd_dims) + 1
        Acoo = prob.A_eq.tocoo()
        for r, cidx, v in zip(Acoo.row, Acoo.col, Acoo.data):
            entry(int(cidx) + 1, blk, 2 * int(r) + 1, 2 * int(r) + 1, float(v))
            entry(int(cidx) + 1, blk, 2 * int(r) + 2, 2 * int(r) + 2, float(-v))
        for r, v in enumerate(prob.b_eq):
            if v != 0.0:
                entry(0, blk, 2 * r + 1, 2 * r + 1, float(v))
                entry(0, blk, 2 * r + 2, 2 * r + 2, float(-v))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
