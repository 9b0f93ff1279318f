import numpy as np
import pytest

from subvalue.control import (BangBang, SimulationError, Trajectory, cost,
                              extract_argmin, extract_bangbang,
                              performance_bound, simulate)
from subvalue.model import ProblemError, parse_problem
from subvalue.poly import Polynomial
from subvalue.synthesis import example1_vstar, synthesize


def autonomous_config(dynamics, omega="100 - x1^2", T=1.0):
    return parse_problem({
        "states": ["x1"],
        "inputs": {"names": []},
        "running_cost": "0",
        "terminal_cost": "x1",
        "dynamics": [dynamics],
        "omega_h": omega,
        "horizon_T": T,
        "lambda_box": [[-0.5, 0.5]],
        "weight": {"type": "uniform"},
        "degree": 2,
    })


class TestIntegrator:
    def test_zero_dynamics_constant(self):
        spec, _ = autonomous_config("0")
        traj = simulate(spec, np.zeros(0), [0.3], nsteps=100)
        assert traj.ok
        np.testing.assert_allclose(traj.states, 0.3)

    def test_exponential(self):
        spec, _ = autonomous_config("x1")
        traj = simulate(spec, np.zeros(0), [1.0])
        assert traj.ok
        assert traj.final_state()[0] == pytest.approx(np.e, abs=1e-8)

    def test_bad_x0(self):
        spec, _ = autonomous_config("x1")
        with pytest.raises(SimulationError):
            simulate(spec, np.zeros(0), [np.nan])
        with pytest.raises(SimulationError):
            simulate(spec, np.zeros(0), [1.0, 2.0])
        with pytest.raises(SimulationError):
            simulate(spec, np.zeros(0), [1.0], t0=2.0)

    def test_escape_reported(self):
        spec, _ = autonomous_config("x1^2", omega="1 - x1^2", T=3.0)
        traj = simulate(spec, np.zeros(0), [0.9], nsteps=3000)
        assert not traj.ok
        assert "escaped" in traj.note

    def test_callable_controller(self, ex1):
        spec, _ = ex1
        traj = simulate(spec, lambda x, t: [-1.0], [0.4], nsteps=2000)
        assert traj.ok
        # xdot = -x from 0.4
        assert traj.final_state()[0] == pytest.approx(0.4 / np.e, rel=1e-6)

    def test_open_loop_matches_callable(self, ex1):
        spec, _ = ex1
        a = simulate(spec, np.array([1.0]), [0.2], nsteps=2000)
        b = simulate(spec, lambda x, t: [1.0], [0.2], nsteps=2000)
        assert a.final_state()[0] == pytest.approx(b.final_state()[0],
                                                   rel=1e-9)


@pytest.fixture(scope="module")
def ex1_law(ex1):
    spec, cfg = ex1
    cert = synthesize(spec, cfg)
    return spec, cert, extract_bangbang(spec, cert.P)


class TestBangBang:
    def test_admissible(self, ex1_law):
        spec, cert, law = ex1_law
        rng = np.random.default_rng(0)
        for _ in range(200):
            u = law(rng.uniform(-2, 2, 1), rng.uniform(0, 1))
            assert set(np.atleast_1d(u)) <= {-1.0, 1.0}

    def test_sign_zero_convention(self):
        # sigma >= 0 -> u = -1, including exactly zero
        nv = 3
        law = BangBang(V=Polynomial.zero(nv), c_parts=(),
                       f_parts=(), switching=(Polynomial.zero(nv),),
                       nvars=nv, n=1, m=1)
        assert law(np.array([0.0]), 0.0)[0] == -1.0

    def test_agrees_with_argmin_off_switching_surface(self, ex1_law):
        spec, cert, law = ex1_law
        grid_law = extract_argmin(spec, cert.P)
        rng = np.random.default_rng(1)
        checked = 0
        for _ in range(1000):
            x = rng.uniform(-2, 2, 1)
            t = rng.uniform(0, 1)
            sigma = law.switching[0].evaluate([x[0], 0.0, t])
            if abs(sigma) <= 1e-6:
                continue
            assert law(x, t)[0] == grid_law(x, t)[0]
            checked += 1
        assert checked > 900

    def test_requires_unit_box(self):
        spec, cfg = parse_problem({
            "states": ["x1"], "inputs": {"names": ["u1"], "box": [[0, 2]]},
            "running_cost": "0", "terminal_cost": "x1", "dynamics": ["u1"],
            "omega_h": "100 - x1^2", "horizon_T": 1.0,
            "lambda_box": [[-0.5, 0.5]], "weight": {"type": "uniform"},
            "degree": 2})
        with pytest.raises(ProblemError):
            extract_bangbang(spec, Polynomial.zero(spec.variables.nvars))


class TestArgmin:
    def test_quadratic_hamiltonian(self):
        # c = (u - 0.3)^2, f = 0: argmin ~ 0.3 within grid spacing
        spec, _ = parse_problem({
            "states": ["x1"], "inputs": {"names": ["u1"], "box": [[-1, 1]]},
            "running_cost": "u1^2 - 0.6*u1 + 0.09", "terminal_cost": "0",
            "dynamics": ["0"], "omega_h": "100 - x1^2", "horizon_T": 1.0,
            "lambda_box": [[-0.5, 0.5]], "weight": {"type": "uniform"},
            "degree": 2})
        law = extract_argmin(spec, Polynomial.zero(spec.variables.nvars),
                             u_grid_resolution=101)
        u = law(np.array([0.1]), 0.5)
        assert u[0] == pytest.approx(0.3, abs=0.02)

    def test_single_point_grid(self):
        spec, _ = parse_problem({
            "states": ["x1"], "inputs": {"names": ["u1"], "box": [[-1, 1]]},
            "running_cost": "0", "terminal_cost": "x1", "dynamics": ["u1"],
            "omega_h": "100 - x1^2", "horizon_T": 1.0,
            "lambda_box": [[-0.5, 0.5]], "weight": {"type": "uniform"},
            "degree": 2})
        law = extract_argmin(spec, Polynomial.zero(spec.variables.nvars),
                             u_grid_resolution=1)
        assert law(np.array([0.0]), 0.0)[0] == -1.0


class TestCost:
    def test_riemann_convergence(self, ex1):
        spec, _ = ex1
        traj = simulate(spec, np.array([1.0]), [0.2], nsteps=5000)
        c6 = cost(spec, traj, N=1_000_000)
        c5 = cost(spec, traj, N=100_000)
        assert abs(c6 - c5) <= 1e-2 * (1.0 + abs(c6))

    def test_terminal_only(self, ex1):
        spec, _ = ex1
        traj = simulate(spec, np.array([1.0]), [0.2], nsteps=2000)
        # c == 0, so cost = g(x(T)) = x(T)
        assert cost(spec, traj) == pytest.approx(traj.final_state()[0],
                                                 rel=1e-9)

    def test_span_check(self, ex1):
        spec, _ = ex1
        traj = Trajectory(times=np.array([0.0, 0.5]),
                          states=np.zeros((2, 1)), inputs=np.zeros((2, 1)),
                          step_count=1, nominal_step=0.5, ok=True)
        with pytest.raises(ValueError):
            cost(spec, traj)


class TestTrajectoryCsv:
    def test_header_and_shape(self, tmp_path, ex1):
        spec, _ = ex1
        traj = simulate(spec, np.array([1.0]), [0.2], nsteps=500)
        path = tmp_path / "traj.csv"
        traj.to_csv(str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,x1,u1"
        assert len(lines) == len(traj.times) + 1


class TestPhasePortrait:
    def test_ex2_swings_through_fourth_quadrant(self, ex2_cert):
        """Closed loop from (0, 1): x1 rises then the swing pushes x2 negative
        (fourth quadrant) while steering back toward the origin."""
        spec, cfg, cert = ex2_cert
        law = extract_bangbang(spec, cert.P)
        traj = simulate(spec, law, [0.0, 1.0])
        assert traj.ok
        x1, x2 = traj.states[:, 0], traj.states[:, 1]
        assert np.max(x1) > 0.5                       # initial swing right
        assert np.any((x1 > 0.1) & (x2 < -0.1))       # fourth quadrant visit
        end = traj.states[-1]
        assert np.linalg.norm(end) < 0.35             # near the origin at T


class TestPerformanceBound:
    def test_ex1_bound_holds_at_x0(self, ex1):
        spec, cfg = ex1
        cert = synthesize(spec, cfg)
        law = extract_bangbang(spec, cert.P)
        traj = simulate(spec, law, [0.4])
        realized = cost(spec, traj)
        report = performance_bound(
            spec, cert.P, example1_vstar, [(-2.4, 2.4)],
            realized_cost=realized,
            reference_costs={"vstar": float(example1_vstar(0.4, 0.0))},
            kink_axis=0)
        loss = realized - float(example1_vstar(0.4, 0.0))
        # C = 2 max{1, T, T sup|f|} = 4.8 exactly; the f-sup is sampled
        assert report.bound_C == pytest.approx(4.8, abs=0.05)
        assert loss <= report.bound_value
        assert report.caveats
