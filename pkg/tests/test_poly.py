import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subvalue.poly import (Monomial, MonomialBasis, Polynomial, basis,
                           basis_size, grlex_key, poly_from_text, poly_to_text)

NAMES3 = ["x1", "x2", "t"]


def rand_poly(rng, nvars=3, degree=4, nterms=6):
    terms = {}
    for _ in range(nterms):
        exps = tuple(int(e) for e in rng.integers(0, degree + 1, nvars))
        if sum(exps) <= degree:
            terms[exps] = float(rng.normal())
    return Polynomial(terms, nvars)


# -- strategies --------------------------------------------------------------

coeffs = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False,
                   allow_infinity=False).filter(lambda c: abs(c) >= 1e-12)
exponents = st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5))
polys = st.dictionaries(exponents, coeffs, min_size=0, max_size=8).map(
    lambda d: Polynomial(d, 3))
points = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))


class TestArithmetic:
    @given(polys, polys)
    def test_addition_commutes(self, p, q):
        assert p + q == q + p

    @given(polys, polys, points)
    @settings(max_examples=50)
    def test_product_evaluates_pointwise(self, p, q, pt):
        got = (p * q).evaluate(pt)
        want = p.evaluate(pt) * q.evaluate(pt)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-6)

    @given(polys)
    def test_subtraction_self_is_zero(self, p):
        assert (p - p).is_zero()

    @given(polys, polys, polys)
    @settings(max_examples=50)
    def test_distributivity(self, p, q, r):
        left = p * (q + r)
        right = p * q + p * r
        for e in set(left.terms) | set(right.terms):
            assert left.coefficient(e) == pytest.approx(
                right.coefficient(e), rel=1e-9, abs=1e-9)

    def test_pow(self):
        x = Polynomial.variable(0, 2)
        assert (x + 1) ** 3 == x * x * x + 3 * x * x + 3 * x + 1
        with pytest.raises(ValueError):
            (x + 1) ** -1

    def test_universe_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Polynomial.variable(0, 2) + Polynomial.variable(0, 3)

    def test_immutability(self):
        p = Polynomial.constant(1.0, 2)
        with pytest.raises(AttributeError):
            p.nvars = 5


class TestCalculus:
    @given(polys, polys, points)
    @settings(max_examples=40)
    def test_product_rule(self, p, q, pt):
        lhs = (p * q).differentiate(0)
        rhs = p.differentiate(0) * q + p * q.differentiate(0)
        assert lhs.evaluate(pt) == pytest.approx(rhs.evaluate(pt),
                                                 rel=1e-9, abs=1e-6)

    def test_differentiate_constant(self):
        assert Polynomial.constant(7.0, 3).differentiate(1).is_zero()

    def test_integrate_against_sympy(self):
        import sympy
        rng = np.random.default_rng(5)
        xs = sympy.symbols("a b c")
        box = [(-1.0, 2.0), (0.0, 1.5), (-0.5, 0.5)]
        for _ in range(5):
            p = rand_poly(rng)
            expr = sum(c * xs[0] ** e[0] * xs[1] ** e[1] * xs[2] ** e[2]
                       for e, c in p.terms.items())
            want = expr
            for sym, (a, b) in zip(xs, box):
                want = sympy.integrate(want, (sym, a, b))
            assert p.integrate_box(box) == pytest.approx(float(want), rel=1e-12)

    def test_integrate_malformed_box(self):
        p = Polynomial.constant(1.0, 2)
        with pytest.raises(ValueError):
            p.integrate_box([(0.0, 1.0)])
        with pytest.raises(ValueError):
            p.integrate_box([(1.0, 0.0), (0.0, 1.0)])


class TestEvaluation:
    def test_quadratic_point(self):
        x = Polynomial.variable(0, 1)
        assert (x * x + 1).evaluate([2.0]) == 5.0

    def test_zero_everywhere(self):
        z = Polynomial.zero(2)
        assert z.evaluate([3.0, -1.0]) == 0.0

    @given(polys, points)
    @settings(max_examples=40)
    def test_batch_matches_naive(self, p, pt):
        naive = sum(c * math.prod(v ** e for v, e in zip(pt, exps))
                    for exps, c in p.terms.items())
        assert p.evaluate(pt) == pytest.approx(naive, rel=1e-9, abs=1e-6)

    def test_batch_shape_check(self):
        p = Polynomial.variable(0, 2)
        with pytest.raises(ValueError):
            p.evaluate_batch(np.zeros((4, 3)))


class TestSubstitution:
    def test_substitute_pointwise(self):
        rng = np.random.default_rng(2)
        p = rand_poly(rng)
        r = rand_poly(rng, degree=2)
        q = p.substitute(1, r)
        for pt in rng.normal(size=(20, 3)):
            shifted = pt.copy()
            shifted[1] = r.evaluate(pt)
            assert q.evaluate(pt) == pytest.approx(p.evaluate(shifted),
                                                   rel=1e-9, abs=1e-9)

    def test_affine_substitute_inverts(self):
        rng = np.random.default_rng(3)
        p = rand_poly(rng)
        fwd = p.affine_substitute([0.5, -1.0, 0.0], [2.0, 3.0, 1.0])
        back = fwd.affine_substitute([-0.25, 1 / 3.0, 0.0], [0.5, 1 / 3.0, 1.0])
        for e in set(p.terms) | set(back.terms):
            assert back.coefficient(e) == pytest.approx(p.coefficient(e),
                                                        rel=1e-9, abs=1e-12)

    def test_embed(self):
        p = Polynomial({(1, 2): 3.0}, 2)
        q = p.embed(4, [0, 3])
        assert q.terms == {(1, 0, 0, 2): 3.0}


class TestBasis:
    @pytest.mark.parametrize("nvars,deg,size", [
        (2, 4, 15),   # C(6,2)
        (3, 3, 20),   # C(6,3)
        (1, 7, 8),
        (4, 0, 1),
    ])
    def test_sizes(self, nvars, deg, size):
        assert basis_size(nvars, deg) == size
        assert len(basis(nvars, deg)) == size

    def test_bruteforce_enumeration(self):
        got = set(basis(3, 4).entries)
        want = {(i, j, k) for i in range(5) for j in range(5) for k in range(5)
                if i + j + k <= 4}
        assert got == want

    def test_grlex_order(self):
        entries = basis(2, 3).entries
        assert entries[0] == (0, 0)
        assert list(entries) == sorted(entries, key=grlex_key)
        # degree blocks are contiguous and ascending
        degs = [sum(e) for e in entries]
        assert degs == sorted(degs)

    def test_subset_variables(self):
        b = MonomialBasis(4, (0, 3), 2)
        assert all(e[1] == 0 and e[2] == 0 for e in b.entries)
        assert len(b) == 6

    def test_coefficient_vector_roundtrip(self):
        b = basis(2, 3)
        p = Polynomial({(1, 2): 4.0, (0, 0): -1.0}, 2)
        v = b.coefficient_vector(p)
        rebuilt = Polynomial({e: c for e, c in zip(b.entries, v)}, 2)
        assert rebuilt == p

    def test_coefficient_vector_outside(self):
        with pytest.raises(ValueError):
            basis(2, 1).coefficient_vector(Polynomial({(2, 0): 1.0}, 2))

    def test_monomial_dense_roundtrip(self):
        m = Monomial.from_dense((0, 3, 1))
        assert m.to_dense(3) == (0, 3, 1)
        assert m.degree == 4


class TestText:
    @given(polys)
    @settings(max_examples=60)
    def test_roundtrip(self, p):
        text = poly_to_text(p, NAMES3)
        q = poly_from_text(text, NAMES3)
        assert q == p

    def test_examples(self):
        p = poly_from_text("3.5 * x1^2 * t - 1e-3 * x2 + 2", NAMES3)
        assert p.coefficient((2, 0, 1)) == 3.5
        assert p.coefficient((0, 1, 0)) == -1e-3
        assert p.coefficient((0, 0, 0)) == 2.0
        assert poly_from_text("0", NAMES3).is_zero()

    def test_implicit_exponent_and_repeats(self):
        assert (poly_from_text("x1*x1", NAMES3)
                == poly_from_text("x1^2", NAMES3))

    def test_rejects_unknown_names(self):
        with pytest.raises(ValueError):
            poly_from_text("y^2", NAMES3)
        with pytest.raises(ValueError):
            poly_from_text("x1**2", NAMES3)
