"""Sum-of-squares compilation: Putinar certificates to conic normal form.

A constraint "q is SOS on {h_1 >= 0, ..., h_K >= 0}" is imposed as

    q = sigma_0 + sum_k s_k h_k,   sigma_0 and every s_k SOS,

with each SOS witness parameterized by a Gram matrix q = Z^T Q Z over a
graded-lex monomial basis Z and Q constrained PSD.  Matching coefficients
of both sides monomial-by-monomial yields the equality rows; the target q
may depend affinely on free scalar decision variables (the coefficients of
the polynomial being synthesized).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .poly import MonomialBasis, Polynomial, grlex_key
from .sdp import SQRT2, SdpProblem, smat, svec_index, svec_len


class AffinePoly:
    """Polynomial whose coefficients are affine in scalar decision variables.

    Represents base(x) + sum_j y_j * part_j(x) for free variables y_j.
    """

    __slots__ = ("base", "parts", "nvars")

    def __init__(self, base: Polynomial, parts: dict | None = None):
        self.base = base
        self.nvars = base.nvars
        self.parts = {j: p for j, p in (parts or {}).items() if not p.is_zero()}

    @classmethod
    def from_poly(cls, p: Polynomial) -> "AffinePoly":
        return cls(p)

    @classmethod
    def decision_poly(cls, monomial_exps, nvars, var_offset=0) -> "AffinePoly":
        """sum_j y_(offset+j) * monomial_j — a fully free polynomial."""
        parts = {var_offset + j: Polynomial({tuple(e): 1.0}, nvars)
                 for j, e in enumerate(monomial_exps)}
        return cls(Polynomial.zero(nvars), parts)

    def __add__(self, other):
        if isinstance(other, (int, float, Polynomial)):
            other = AffinePoly.from_poly(
                other if isinstance(other, Polynomial)
                else Polynomial.constant(float(other), self.nvars))
        parts = dict(self.parts)
        for j, p in other.parts.items():
            parts[j] = parts.get(j, Polynomial.zero(self.nvars)) + p
        return AffinePoly(self.base + other.base, parts)

    def __sub__(self, other):
        if isinstance(other, AffinePoly):
            return self + AffinePoly(-other.base,
                                     {j: -p for j, p in other.parts.items()})
        if isinstance(other, Polynomial):
            return self + (-other)
        return self + (-float(other))

    def __rsub__(self, other):
        return AffinePoly(-self.base, {j: -p for j, p in self.parts.items()}) + other

    def mul_poly(self, q: Polynomial) -> "AffinePoly":
        return AffinePoly(self.base * q, {j: p * q for j, p in self.parts.items()})

    def differentiate(self, var) -> "AffinePoly":
        return AffinePoly(self.base.differentiate(var),
                          {j: p.differentiate(var) for j, p in self.parts.items()})

    def degree(self) -> int:
        return max([self.base.degree] + [p.degree for p in self.parts.values()])

    def instantiate(self, y: np.ndarray) -> Polynomial:
        out = self.base
        for j, p in self.parts.items():
            out = out + p * float(y[j])
        return out

    def support(self):
        sup = set(self.base.terms)
        for p in self.parts.values():
            sup.update(p.terms)
        return sup


def multiplier_half_degree(d_cap: int, deg_h: int) -> int:
    """Half-degree of the Putinar multiplier attached to h: deg s = 2*floor((d_cap - deg h)/2)."""
    if d_cap < deg_h:
        raise ValueError(f"degree cap {d_cap} below multiplier constraint degree {deg_h}")
    return (d_cap - deg_h) // 2


@dataclass
class GramBlock:
    basis_exps: tuple      # universe-dense exponent tuples, graded-lex order
    start: int             # first svec coordinate in the decision vector
    margin: float = 0.0    # reported Gram is (solved block) + margin * I

    @property
    def dim(self):
        return len(self.basis_exps)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        Q = smat(x[self.start:self.start + svec_len(self.dim)])
        if self.margin:
            Q = Q + self.margin * np.eye(self.dim)
        return Q

    def polynomial(self, x: np.ndarray, nvars: int) -> Polynomial:
        Q = self.matrix(x)
        terms: dict = {}
        d = self.dim
        for i in range(d):
            for j in range(d):
                key = tuple(a + b for a, b in
                            zip(self.basis_exps[i], self.basis_exps[j]))
                terms[key] = terms.get(key, 0.0) + Q[i, j]
        return Polynomial(terms, nvars)


@dataclass
class SosConstraint:
    name: str
    target: AffinePoly
    sigma0: GramBlock
    multipliers: list          # [(h: Polynomial, block: GramBlock), ...]


class SdpBuilder:
    """Accumulates free scalars, SOS constraints and extra equality rows."""

    def __init__(self, nvars: int, n_free: int, psd_margin: float = 0.0):
        self.nvars = nvars
        self.n_free = n_free
        self.psd_margin = float(psd_margin)
        self._next = n_free
        self.blocks: list[GramBlock] = []
        self.constraints: list[SosConstraint] = []
        self._rows: list[dict] = []
        self._rhs: list[float] = []

    def _new_block(self, variables, half_deg) -> GramBlock:
        basis = MonomialBasis(self.nvars, variables, half_deg)
        blk = GramBlock(tuple(basis.entries), self._next,
                        margin=self.psd_margin)
        self._next += svec_len(blk.dim)
        self.blocks.append(blk)
        return blk

    def add_sos(self, name: str, target: AffinePoly, variables,
                multipliers, d_cap: int | None = None) -> SosConstraint:
        """Impose target SOS on the set cut out by the multiplier polynomials.

        multipliers is a list of h-polynomials; d_cap defaults to the target
        degree rounded up to even.
        """
        if d_cap is None:
            d_cap = target.degree()
        d_cap = max(d_cap, max((h.degree for h in multipliers), default=0))
        sigma0 = self._new_block(variables, d_cap // 2)
        pairs = []
        for h in multipliers:
            blk = self._new_block(variables, multiplier_half_degree(d_cap, h.degree))
            pairs.append((h, blk))
        con = SosConstraint(name, target, sigma0, pairs)
        self.constraints.append(con)
        self._match_coefficients(con)
        return con

    def _gram_columns(self, blk: GramBlock, h: Polynomial, rows: dict,
                      consts: dict):
        """Scatter (Z^T Q Z) * h into per-monomial rows of svec coefficients.

        The block's PSD margin contributes the constant margin * sum_i z_i^2
        * h, gathered into consts and moved to the right-hand side.
        """
        d = blk.dim
        for j in range(d):
            for i in range(j + 1):
                col = blk.start + svec_index(i, j)
                scale = 1.0 if i == j else SQRT2
                ze = tuple(a + b for a, b in
                           zip(blk.basis_exps[i], blk.basis_exps[j]))
                for he, hc in h.terms.items():
                    key = tuple(a + b for a, b in zip(ze, he))
                    row = rows.setdefault(key, {})
                    row[col] = row.get(col, 0.0) + scale * hc
                if blk.margin and i == j:
                    for he, hc in h.terms.items():
                        key = tuple(a + b for a, b in zip(ze, he))
                        consts[key] = consts.get(key, 0.0) + blk.margin * hc
        return rows

    def _match_coefficients(self, con: SosConstraint):
        one = Polynomial.constant(1.0, self.nvars)
        rows: dict = {}
        consts: dict = {}
        self._gram_columns(con.sigma0, one, rows, consts)
        for h, blk in con.multipliers:
            self._gram_columns(blk, h, rows, consts)
        support = set(rows) | con.target.support()
        for key in sorted(support, key=grlex_key):
            row = dict(rows.get(key, {}))
            for j, p in con.target.parts.items():
                c = p.terms.get(key, 0.0)
                if c:
                    row[j] = row.get(j, 0.0) - c
            self._rows.append(row)
            self._rhs.append(con.target.base.terms.get(key, 0.0)
                             - consts.get(key, 0.0))

    def add_equality(self, coeffs: dict, rhs: float):
        """Extra linear row sum coeffs[col] * x[col] = rhs."""
        self._rows.append(dict(coeffs))
        self._rhs.append(rhs)

    def build(self, objective_free: np.ndarray) -> SdpProblem:
        """Assemble min obj @ x; objective_free covers the free scalars."""
        nx = self._next
        obj = np.zeros(nx)
        obj[:self.n_free] = objective_free
        I, J, V = [], [], []
        for r, row in enumerate(self._rows):
            for col, v in row.items():
                I.append(r)
                J.append(col)
                V.append(v)
        A = sp.coo_matrix((V, (I, J)), shape=(len(self._rows), nx)).tocsc()
        return SdpProblem(self.n_free, tuple(b.dim for b in self.blocks),
                          obj, A, np.asarray(self._rhs, dtype=float))


def verify_certificate(constraints, x: np.ndarray, nvars: int,
                       eig_tol: float = 1e-6, id_tol: float = 1e-6) -> dict:
    """Re-derive every certificate identity from the raw solution vector.

    Checks each Gram matrix eigenvalue floor and reconstructs the polynomial
    identity target - sigma_0 - sum s_k h_k, whose coefficient sup-norm must
    vanish.  Returns per-constraint diagnostics plus an overall verdict.
    """
    report = {"ok": True, "constraints": {}}
    for con in constraints:
        min_eig = float(np.linalg.eigvalsh(con.sigma0.matrix(x))[0])
        recon = con.sigma0.polynomial(x, nvars)
        for h, blk in con.multipliers:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(blk.matrix(x))[0]))
            recon = recon + blk.polynomial(x, nvars) * h
        residual = con.target.instantiate(x) - recon
        sup = max((abs(c) for c in residual.terms.values()), default=0.0)
        ok = min_eig >= -eig_tol and sup <= id_tol
        report["constraints"][con.name] = {
            "min_gram_eig": min_eig, "identity_sup": sup, "ok": ok}
        report["ok"] = report["ok"] and ok
    return report


def sos_decomposition(con: SosConstraint, x: np.ndarray, nvars: int,
                      clip_tol: float = 1e-9):
    """Explicit squares for each witness: lists of polynomials q_i with sigma = sum q_i^2."""
    def squares(blk: GramBlock):
        Q = blk.matrix(x)
        w, U = np.linalg.eigh(Q)
        out = []
        for k in range(len(w)):
            if w[k] < clip_tol:
                continue
            coeffs = np.sqrt(w[k]) * U[:, k]
            terms = {tuple(e): float(c) for e, c in zip(blk.basis_exps, coeffs)}
            out.append(Polynomial(terms, nvars))
        return out

    return {"sigma0": squares(con.sigma0),
            "multipliers": [(h, squares(blk)) for h, blk in con.multipliers]}
