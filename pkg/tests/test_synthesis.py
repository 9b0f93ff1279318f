import json
from dataclasses import replace

import numpy as np
import pytest

from subvalue.model import parse_problem
from subvalue.poly import Polynomial
from subvalue.synthesis import (InfeasibleError, SubValueCertificate,
                                _even_cap, _structural_min_degree, build_sdp,
                                degree_sweep, example1_vstar, hjb_residual,
                                l1_error, moment_vector, omega_bounding_box,
                                _p_basis, sampled_residual_checks,
                                scale_domain, synthesize, unscale_poly)


def config(**kw):
    base = {
        "states": ["x1"],
        "inputs": {"names": ["u1"], "box": [[-1.0, 1.0]]},
        "running_cost": "0",
        "terminal_cost": "x1",
        "dynamics": ["x1*u1"],
        "omega_h": "5.76 - x1^2",
        "horizon_T": 1.0,
        "lambda_box": [[-0.5, 0.5]],
        "weight": {"type": "uniform"},
        "degree": 4,
    }
    base.update(kw)
    return parse_problem(base)


class TestScaling:
    def test_omega_bounding_box(self, ex1):
        spec, cfg = ex1
        box = omega_bounding_box(spec, cfg)
        assert box[0][0] == pytest.approx(-2.4, abs=1e-9)
        assert box[0][1] == pytest.approx(2.4, abs=1e-9)

    def test_lambda_lands_in_unit_box(self, ex3):
        spec, cfg = ex3
        s_spec, s_cfg, scaling = scale_domain(spec, cfg)
        assert s_spec.horizon_T == 1.0
        for a, b in s_cfg.lambda_box:
            assert -1.0 - 1e-9 <= a < b <= 1.0 + 1e-9

    def test_unscale_inverts(self, ex1):
        spec, cfg = ex1
        s_spec, s_cfg, scaling = scale_domain(spec, cfg)
        rng = np.random.default_rng(0)
        p_scaled = Polynomial(
            {(2, 0, 1): 0.3, (1, 0, 0): -1.2, (0, 0, 2): 0.5},
            spec.variables.nvars)
        p = unscale_poly(p_scaled, spec, scaling)
        for _ in range(20):
            x = rng.uniform(-0.5, 0.5)
            t = rng.uniform(0, 1)
            xs = scaling.to_scaled_states([x])[0]
            want = p_scaled.evaluate([xs, 0.0, t / scaling.horizon_T])
            assert p.evaluate([x, 0.0, t]) == pytest.approx(want, rel=1e-10,
                                                            abs=1e-12)

    def test_dirac_time_rescaled(self, ex4):
        spec, cfg = ex4
        _, s_cfg, _ = scale_domain(spec, cfg)
        assert s_cfg.weight.kind == "dirac"
        assert s_cfg.weight.time == 0.0


class TestMoments:
    def test_uniform_matches_integrate_box(self, ex1):
        spec, cfg = ex1
        pbasis = _p_basis(spec, 4)
        alpha = moment_vector(pbasis, cfg, spec)
        pv = spec.variables
        box = [(0.0, 1.0)] * pv.nvars
        box[0] = tuple(cfg.lambda_box[0])
        box[pv.t_index] = (0.0, spec.horizon_T)
        for k, exps in enumerate(pbasis.entries):
            mono = Polynomial({tuple(exps): 1.0}, pv.nvars)
            assert alpha[k] == pytest.approx(mono.integrate_box(box),
                                             rel=1e-12, abs=1e-15)

    def test_dirac_at_zero_kills_time_terms(self, ex4):
        spec, cfg = ex4
        pbasis = _p_basis(spec, 2)
        alpha = moment_vector(pbasis, cfg, spec)
        for k, exps in enumerate(pbasis.entries):
            if exps[spec.variables.t_index] > 0:
                assert alpha[k] == 0.0
        # the spatial moments survive (constant monomial = vol(Lambda))
        vol = np.prod([b - a for a, b in cfg.lambda_box])
        assert alpha[0] == pytest.approx(vol, rel=1e-12)


class TestDegreeRules:
    def test_even_cap(self):
        assert _even_cap(5, 4, 0) == 6
        assert _even_cap(4, 4, 0) == 4
        assert _even_cap(3, 8, 0) == 8
        assert _even_cap(4, 4, 1) == 6

    def test_structural_minimum(self, ex2):
        spec, _ = ex2
        assert _structural_min_degree(spec) == 2

    def test_below_minimum_raises(self, ex2):
        spec, cfg = ex2
        with pytest.raises(InfeasibleError, match="raise degree"):
            synthesize(spec, replace(cfg, degree=1))


class TestSynthesize:
    def test_trivial_zero_problem(self):
        spec, cfg = config(terminal_cost="0")
        cert = synthesize(spec, cfg)
        # V* = 0 and P <= V*, maximal weighted integral => P ~ 0
        assert cert.objective_value == pytest.approx(0.0, abs=1e-6)
        rng = np.random.default_rng(1)
        pts = np.zeros((100, 3))
        pts[:, 0] = rng.uniform(-0.5, 0.5, 100)
        pts[:, 2] = rng.uniform(0, 1, 100)
        assert np.max(np.abs(cert.P.evaluate_batch(pts))) < 1e-5

    def test_certificate_contents(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        assert cert.degree == cfg.degree
        assert cert.verification["ok"]
        assert cert.solver_info["status"] == "optimal"
        assert set(cert.gram_blocks) == {"k0", "k1_p", "k1_m"}
        assert cert.verification["sampled"]["ok"]

    def test_json_roundtrip(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        again = SubValueCertificate.from_json(cert.to_json())
        assert again.P == cert.P
        assert again.objective_value == cert.objective_value
        np.testing.assert_array_equal(again.alpha, cert.alpha)
        assert again.scaling == cert.scaling
        # serialization is deterministic
        assert again.to_json() == cert.to_json()

    def test_objective_equals_weighted_integral(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        # uniform weight: MC estimate of the integral within 3 standard errors
        rng = np.random.default_rng(3)
        N = 1_000_000
        pts = np.zeros((N, 3))
        pts[:, 0] = rng.uniform(-0.5, 0.5, N)
        pts[:, 2] = rng.uniform(0, 1, N)
        vals = cert.P.evaluate_batch(pts)
        vol = 1.0
        mc = vals.mean() * vol
        se = vals.std() / np.sqrt(N) * vol
        assert abs(cert.objective_value - mc) <= 3 * se

    def test_cvxopt_backend_agrees(self, ex1):
        spec, cfg = ex1
        cfg = replace(cfg, degree=6)
        a = synthesize(spec, cfg)
        b = synthesize(spec, cfg, backend="cvxopt")
        assert b.objective_value == pytest.approx(a.objective_value, rel=1e-6)

    def test_faithful_multiplier_path(self):
        # ball-form input set forces the h_U multiplier formulation
        spec, cfg = config(inputs={"names": ["u1"], "h_u": "1 - u1^2"})
        cert = synthesize(spec, cfg)
        assert "k1" in cert.gram_blocks
        assert cert.verification["ok"]

    def test_sampled_checks_report(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        rep = sampled_residual_checks(spec, cert, nsamples=2000, seed=1)
        assert rep["boundary_min"] >= -1e-6
        assert rep["dissipation_min"] >= -1e-6


class TestSweep:
    def test_requires_ascending(self, ex1):
        spec, cfg = ex1
        with pytest.raises(ValueError):
            degree_sweep(spec, cfg, [6, 4])

    def test_partial_failure_rows(self, ex2):
        spec, cfg = ex2
        study = degree_sweep(spec, cfg, [1, 2])
        assert study.records[0]["status"] == "failed"
        assert "raise degree" in study.records[0]["error"]
        assert study.records[1]["status"] == "optimal"
        assert study.monotone()


class TestDiagnostics:
    def test_build_sdp_shape(self, ex1):
        spec, cfg = ex1
        prob = build_sdp(spec, cfg)
        assert prob.n_free == len(_p_basis(spec, cfg.degree))
        assert len(prob.psd_dims) >= 2

    def test_hjb_residual_constant_p(self, ex1):
        spec, cfg = ex1
        P = Polynomial.constant(2.0, spec.variables.nvars)
        grid = np.column_stack([np.linspace(-0.5, 0.5, 50),
                                np.linspace(0, 1, 50)])
        np.testing.assert_allclose(hjb_residual(P, spec, grid), 0.0, atol=1e-12)

    def test_hjb_residual_closed_form_matches_grid(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        grid = np.column_stack([np.linspace(-0.4, 0.4, 30),
                                np.linspace(0.1, 0.9, 30)])
        closed = hjb_residual(cert.P, spec, grid)
        # reference: dense brute-force minimization over u
        pv = spec.variables
        pts = np.zeros((len(grid), pv.nvars))
        pts[:, 0] = grid[:, 0]
        pts[:, pv.t_index] = grid[:, 1]
        best = np.full(len(grid), np.inf)
        dP = cert.P.differentiate(0)
        for u in np.linspace(-1.0, 1.0, 2001):
            pts[:, pv.n] = u
            ham = spec.c.evaluate_batch(pts) + \
                dP.evaluate_batch(pts) * spec.f[0].evaluate_batch(pts)
            best = np.minimum(best, ham)
        want = cert.P.differentiate(pv.t_index).evaluate_batch(pts) + best
        np.testing.assert_allclose(closed, want, atol=1e-9)

    def test_hjb_residual_nonnegative_for_certificates(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        rng = np.random.default_rng(0)
        grid = np.column_stack([rng.uniform(-2.3, 2.3, 500),
                                rng.uniform(0, 1, 500)])
        assert np.min(hjb_residual(cert.P, spec, grid)) >= -1e-6

    def test_example1_vstar_values(self):
        assert example1_vstar(0.3, 1.0) == pytest.approx(0.3)
        assert example1_vstar(0.3, 0.0) == pytest.approx(0.3 * np.exp(-1))
        assert example1_vstar(-0.3, 0.0) == pytest.approx(-0.3 * np.e)
        assert example1_vstar(0.0, 0.5) == 0.0

    def test_l1_error_of_exact_function(self):
        # oracle equal to the polynomial itself -> zero error
        P = Polynomial({(1, 0, 1): 2.0}, 3)

        def oracle(x, t):
            return 2.0 * np.asarray(x) * np.asarray(t)

        assert l1_error(P, oracle, [(-0.5, 0.5)], 1.0, n=50) == pytest.approx(
            0.0, abs=1e-12)
