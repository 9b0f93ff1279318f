"""Sparse multivariate polynomials with exact coefficient arithmetic.

Variables are anonymous indices 0..nvars-1; the problem layer maps names
("x1", "t", "u1", ...) onto indices.  Terms live in a dict keyed by dense
exponent tuples; coefficients below ZERO_TOL are dropped after every
operation so equal polynomials compare equal.  Monomial ordering is graded
lexicographic throughout (degree first, then lex with variable 0 ranked
highest), which fixes Gram-matrix indexing and golden-file layouts.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

ZERO_TOL = 1e-14


def grlex_key(exps):
    """Sort key putting monomials in graded-lex order (1, x0, x1, .., x0^2, ..)."""
    return (sum(exps), tuple(-e for e in exps))


@dataclass(frozen=True)
class Monomial:
    """A power product, stored sparsely as sorted (variable, exponent) pairs."""

    powers: tuple  # ((var, exp), ...), exp > 0, sorted by var

    def __post_init__(self):
        if any(e <= 0 for _, e in self.powers):
            raise ValueError("stored exponents must be positive")
        if tuple(sorted(self.powers)) != self.powers:
            raise ValueError("powers must be sorted by variable index")

    @classmethod
    def from_dense(cls, exps) -> "Monomial":
        return cls(tuple((i, e) for i, e in enumerate(exps) if e != 0))

    def to_dense(self, nvars) -> tuple:
        dense = [0] * nvars
        for i, e in self.powers:
            dense[i] = e
        return tuple(dense)

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.powers)


class Polynomial:
    """Immutable sparse polynomial over a fixed variable universe."""

    __slots__ = ("terms", "nvars", "_arrays")

    def __init__(self, terms, nvars):
        canon = {}
        for exps, c in terms.items():
            if len(exps) != nvars:
                raise ValueError("exponent tuple length != nvars")
            if abs(c) >= ZERO_TOL:
                canon[tuple(exps)] = float(c)
        object.__setattr__(self, "terms", canon)
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "_arrays", None)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, nvars) -> "Polynomial":
        return cls({}, nvars)

    @classmethod
    def constant(cls, value, nvars) -> "Polynomial":
        return cls({(0,) * nvars: value}, nvars)

    @classmethod
    def variable(cls, index, nvars) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls({tuple(exps): 1.0}, nvars)

    # -- basic queries -----------------------------------------------------
    @property
    def degree(self) -> int:
        """Total degree; 0 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def used_vars(self):
        used = set()
        for exps in self.terms:
            used.update(i for i, e in enumerate(exps) if e)
        return used

    def coefficient(self, exps) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def __eq__(self, other):
        return (isinstance(other, Polynomial) and self.nvars == other.nvars
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Polynomial({len(self.terms)} terms, nvars={self.nvars}, deg={self.degree})"

    # -- arithmetic --------------------------------------------------------
    def _check(self, other):
        if self.nvars != other.nvars:
            raise ValueError(
                f"variable-universe mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        self._check(other)
        out = dict(self.terms)
        for exps, c in other.terms.items():
            out[exps] = out.get(exps, 0.0) + c
        return Polynomial(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.nvars)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial({e: c * other for e, c in self.terms.items()},
                              self.nvars)
        self._check(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0 or k != int(k):
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(int(k)):
            out = out * self
        return out

    # -- calculus ----------------------------------------------------------
    def differentiate(self, var) -> "Polynomial":
        out = {}
        for exps, c in self.terms.items():
            e = exps[var]
            if e == 0:
                continue
            key = exps[:var] + (e - 1,) + exps[var + 1:]
            out[key] = out.get(key, 0.0) + c * e
        return Polynomial(out, self.nvars)

    def integrate_box(self, box) -> float:
        """Exact integral over a coordinate box [(a1,b1), ..]."""
        if len(box) != self.nvars:
            raise ValueError("box length != nvars")
        for a, b in box:
            if not (math.isfinite(a) and math.isfinite(b) and a <= b):
                raise ValueError(f"malformed box interval ({a}, {b})")
        total = 0.0
        for exps, c in self.terms.items():
            v = c
            for e, (a, b) in zip(exps, box):
                v *= (b ** (e + 1) - a ** (e + 1)) / (e + 1)
            total += v
        return total

    # -- evaluation --------------------------------------------------------
    def _as_arrays(self):
        if self._arrays is None:
            keys = sorted(self.terms, key=grlex_key)
            exps = np.array(keys, dtype=np.int64).reshape(len(keys), self.nvars)
            coeffs = np.array([self.terms[k] for k in keys])
            object.__setattr__(self, "_arrays", (coeffs, exps))
        return self._arrays

    def evaluate(self, point) -> float:
        if len(point) != self.nvars:
            raise ValueError("point length != nvars")
        return float(self.evaluate_batch(np.asarray(point, dtype=float)[None, :])[0])

    def evaluate_batch(self, pts) -> np.ndarray:
        """Evaluate at an (npts, nvars) array of points."""
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise ValueError("points must be (npts, nvars)")
        coeffs, exps = self._as_arrays()
        return np.asarray(_kernels.eval_terms(coeffs, exps, pts))

    # -- substitution ------------------------------------------------------
    def substitute(self, var, replacement) -> "Polynomial":
        """Substitute a polynomial (same universe) for one variable."""
        self._check(replacement)
        out = Polynomial.zero(self.nvars)
        powers = {0: Polynomial.constant(1.0, self.nvars)}
        maxe = max((e[var] for e in self.terms), default=0)
        for k in range(1, maxe + 1):
            powers[k] = powers[k - 1] * replacement
        for exps, c in self.terms.items():
            rest = exps[:var] + (0,) + exps[var + 1:]
            out = out + Polynomial({rest: c}, self.nvars) * powers[exps[var]]
        return out

    def affine_substitute(self, shifts, scales) -> "Polynomial":
        """Replace every variable i by shifts[i] + scales[i] * (new variable i)."""
        out = self
        for i, (a, s) in enumerate(zip(shifts, scales)):
            if a == 0.0 and s == 1.0:
                continue
            repl = Polynomial({tuple(0 if j != i else 1 for j in range(self.nvars)): s},
                              self.nvars) + a
            out = out.substitute(i, repl)
        return out

    def embed(self, nvars_new, var_map) -> "Polynomial":
        """Re-index into a larger universe; var_map[i] is the new index of i."""
        out = {}
        for exps, c in self.terms.items():
            dense = [0] * nvars_new
            for i, e in enumerate(exps):
                if e:
                    dense[var_map[i]] = e
            out[tuple(dense)] = out.get(tuple(dense), 0.0) + c
        return Polynomial(out, nvars_new)


class MonomialBasis:
    """All monomials of total degree <= degree in a subset of the universe."""

    def __init__(self, nvars, variables, degree):
        self.nvars = nvars
        self.variables = tuple(variables)
        self.degree = degree
        self.entries = _monomials_upto(nvars, self.variables, degree)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def monomials(self):
        return [Monomial.from_dense(e) for e in self.entries]

    def index_map(self):
        return {e: i for i, e in enumerate(self.entries)}

    def coefficient_vector(self, p: Polynomial) -> np.ndarray:
        """Coefficients of p against this basis; raises if p has terms outside it."""
        idx = self.index_map()
        vec = np.zeros(len(self.entries))
        for exps, c in p.terms.items():
            if exps not in idx:
                raise ValueError(f"monomial {exps} outside basis")
            vec[idx[exps]] = c
        return vec


@lru_cache(maxsize=None)
def _monomials_upto(nvars, variables, degree):
    out = []

    def rec(pos, remaining, current):
        if pos == len(variables):
            out.append(tuple(current))
            return
        v = variables[pos]
        for e in range(remaining + 1):
            nxt = list(current)
            nxt[v] = e
            rec(pos + 1, remaining - e, nxt)

    rec(0, degree, [0] * nvars)
    out.sort(key=grlex_key)
    return tuple(out)


def basis(nvars, degree) -> MonomialBasis:
    """Graded-lex monomial basis of degree <= degree over all nvars variables."""
    if nvars < 1 or degree < 0:
        raise ValueError("need nvars >= 1 and degree >= 0")
    return MonomialBasis(nvars, range(nvars), degree)


def basis_size(nvars, degree) -> int:
    return math.comb(nvars + degree, degree)


# -- text format -----------------------------------------------------------
#   3.5 * x1^2 * t^1 - 1e-3 * u1^1 + 2
_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM_SPLIT = re.compile(r"(?<![eE])([+-])")


def poly_to_text(p: Polynomial, names) -> str:
    """Canonical text form: graded-lex terms, explicit '*' and '^'."""
    if len(names) != p.nvars:
        raise ValueError("need one name per variable")
    if p.is_zero():
        return "0"
    parts = []
    for exps in sorted(p.terms, key=grlex_key):
        c = p.terms[exps]
        factors = [repr(c)]
        for i, e in enumerate(exps):
            if e:
                factors.append(f"{names[i]}^{e}")
        parts.append(" * ".join(factors))
    text = " + ".join(parts)
    return text.replace("+ -", "- ")


def poly_from_text(text, names) -> Polynomial:
    """Parse the sum-of-terms format; inverse of poly_to_text on canonical forms."""
    nvars = len(names)
    name_to_idx = {n: i for i, n in enumerate(names)}
    compact = "".join(text.split())
    if compact in ("", "0"):
        return Polynomial.zero(nvars)
    pieces = _TERM_SPLIT.split(compact)
    if pieces[0] == "":
        pieces = pieces[1:]
    else:
        pieces = ["+"] + pieces
    if len(pieces) % 2 != 0:
        raise ValueError(f"cannot parse polynomial text: {text!r}")
    terms = {}
    for sign, body in zip(pieces[::2], pieces[1::2]):
        if not body:
            raise ValueError(f"empty term in polynomial text: {text!r}")
        coeff = 1.0 if sign == "+" else -1.0
        exps = [0] * nvars
        for factor in body.split("*"):
            if not factor:
                raise ValueError(f"dangling '*' in term {body!r}")
            if re.fullmatch(_NUM, factor):
                coeff *= float(factor)
                continue
            m = re.fullmatch(r"([A-Za-z_]\w*)(?:\^(\d+))?", factor)
            if not m or m.group(1) not in name_to_idx:
                raise ValueError(f"unknown factor {factor!r} in polynomial text")
            exps[name_to_idx[m.group(1)]] += int(m.group(2) or 1)
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coeff
    return Polynomial(terms, nvars)
