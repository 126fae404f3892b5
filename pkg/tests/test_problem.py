import numpy as np
import pytest
import scipy.sparse as sp

from seaspring.discretization import build_operators, elastic_torque
from seaspring.oracle import finite_diff_gradient_check
from seaspring.problem import (
    assemble_energy_cost, assemble_monotonicity, assemble_actuator_limits,
    assemble_power_terms, dump_problem, load_problem,
)
from conftest import make_instance


@pytest.fixture(scope="module")
def cubic_env(cubic_traj, cubic_load, motor):
    ops = build_operators(cubic_traj.n, cubic_traj.dt)
    tau = elastic_torque(cubic_traj, cubic_load)
    return cubic_traj, cubic_load, motor, ops, tau


class TestEnergyCost:
    def test_quadratic_model_matches_value(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        cost = assemble_energy_cost(traj, load, p, ops)
        rng = np.random.default_rng(0)
        q = p.r * traj.q_l + 0.1 * rng.standard_normal(traj.n)
        direct = (q @ (cost.Q_e @ q) + cost.A_e @ q + cost.c_e)
        assert cost.value(q) == pytest.approx(direct, rel=1e-12)

    def test_gradient_consistent(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        cost = assemble_energy_cost(traj, load, p, ops)
        rng = np.random.default_rng(1)
        q = p.r * traj.q_l + 0.1 * rng.standard_normal(traj.n)
        err = finite_diff_gradient_check(cost.value, cost.gradient, q)
        assert err < 1e-5

    def test_terms_decompose(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        total = assemble_energy_cost(traj, load, p, ops, terms="total")
        joule = assemble_energy_cost(traj, load, p, ops, terms="joule")
        visc = assemble_energy_cost(traj, load, p, ops, terms="viscous")
        rng = np.random.default_rng(2)
        q = p.r * traj.q_l + 0.1 * rng.standard_normal(traj.n)
        # mechanical exchange lives only in the constant of the total cost
        assert total.value(q) == pytest.approx(
            joule.value(q) + visc.value(q)
            - float(tau @ traj.dq_l) / p.eta * ops.dt, rel=1e-10)

    def test_unknown_terms(self, cubic_env):
        traj, load, p, ops, _ = cubic_env
        with pytest.raises(ValueError):
            assemble_energy_cost(traj, load, p, ops, terms="frictionless")


class TestPowerTerms:
    def test_surrogate_underestimates_only_by_inertia(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        terms = assemble_power_terms(tau, p, ops)
        rng = np.random.default_rng(3)
        q = p.r * traj.q_l + 0.1 * rng.standard_normal(traj.n)
        gap = terms.power_exact(q) - terms.power_cvx(q)
        expect = p.I_m * (ops.D2 @ q) * (ops.D @ q)
        assert np.allclose(gap, expect)

    def test_quadratic_forms_match_series(self, cubic_traj, cubic_load, motor):
        small = 24
        ops = build_operators(small, 0.01)
        rng = np.random.default_rng(4)
        tau = rng.standard_normal(small)
        terms = assemble_power_terms(tau, motor, ops)
        q = rng.standard_normal(small)
        exact = terms.power_exact(q)
        for i in range(small):
            G = terms.G_dense(i)
            h = terms.H.getrow(i).toarray().ravel()
            assert q @ (G @ q) + h @ q == pytest.approx(exact[i], abs=1e-10)

    def test_cvx_factor_is_psd_square_root(self, motor):
        ops = build_operators(16, 0.02)
        terms = assemble_power_terms(np.zeros(16), motor, ops)
        g = terms.G_cvx_factor(5)
        G = np.outer(g, g)
        assert np.min(np.linalg.eigvalsh(G)) >= -1e-15


class TestMonotonicity:
    def test_rows_hold_for_true_spring(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        A1, b1, A2, b2, eps = assemble_monotonicity(tau, traj.q_l, p.r)
        # motor trace of the exact cubic spring: delta = (tau/40)^(1/3)
        delta = np.cbrt(tau / 40.0)
        q = p.r * (traj.q_l - delta)
        # non-strict monotonicity holds everywhere; the strict margin may be
        # lost on the handful of rows straddling the velocity reversals,
        # where both torque and elongation increments vanish together
        slack = A1 @ q - b1
        assert np.all(slack <= 1e-12)
        assert np.sum(slack > -eps + 1e-12) <= 4
        assert np.allclose(A2 @ q, b2, atol=1e-12)

    def test_rigid_trace_violates_strictness(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        A1, b1, A2, b2, eps = assemble_monotonicity(tau, traj.q_l, p.r)
        q = p.r * traj.q_l          # zero elongation everywhere
        assert eps > 0
        assert np.max(A1 @ q - (b1 - eps)) > 0

    def test_row_count_partition(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        A1, b1, A2, b2, _ = assemble_monotonicity(tau, traj.q_l, p.r)
        assert A1.shape[0] + A2.shape[0] == traj.n


class TestActuatorLimits:
    def test_rows_encode_absolute_bounds(self, cubic_env):
        traj, load, p, ops, tau = cubic_env
        G, h = assemble_actuator_limits(traj, load, p, ops, delta_max=0.7)
        rng = np.random.default_rng(5)
        q = p.r * traj.q_l + 0.05 * rng.standard_normal(traj.n)
        from seaspring.discretization import motor_torque
        worst = float(np.max(G @ q - h))
        direct = max(
            np.max(np.abs(motor_torque(q, tau, p, ops))) - p.tau_max,
            np.max(np.abs(ops.D @ q)) - p.dq_max,
            (np.max(np.abs(traj.q_l - q / p.r)) - 0.7) / p.r,
        )
        assert worst == pytest.approx(direct, rel=1e-9)

    def test_blocks_optional(self, cubic_traj, cubic_load, motor_unlimited):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        G, h = assemble_actuator_limits(cubic_traj, cubic_load,
                                        motor_unlimited, ops)
        assert G.shape == (0, cubic_traj.n)
        assert len(h) == 0


class TestInstance:
    def test_canonical_dimensions(self, cubic_traj, cubic_load, motor):
        inst, _, _ = make_instance(cubic_traj, cubic_load, motor, theta=0.5)
        prob = inst.to_canonical()
        # q, epigraph slacks s and a, gauge variable
        assert prob.nx == cubic_traj.n + 3
        assert inst.has_epigraph
        inst1, _, _ = make_instance(cubic_traj, cubic_load, motor, theta=1.0)
        assert inst1.to_canonical().nx == cubic_traj.n + 1
        assert not inst1.has_epigraph

    def test_seed_satisfies_gauge_row(self, cubic_traj, cubic_load, motor):
        inst, _, _ = make_instance(cubic_traj, cubic_load, motor, theta=1.0)
        prob = inst.to_canonical()
        x0 = inst.feasible_seed()
        assert np.max(np.abs(prob.A @ x0 - prob.b)) < 1e-9

    def test_seed_bounded(self, cubic_traj, cubic_load, motor):
        inst, _, _ = make_instance(cubic_traj, cubic_load, motor, theta=1.0)
        x0 = inst.feasible_seed()
        assert np.max(np.abs(x0)) < 1e3

    def test_theta_bounds(self, cubic_traj, cubic_load, motor):
        with pytest.raises(ValueError):
            make_instance(cubic_traj, cubic_load, motor, theta=1.5)

    def test_dump_load_round_trip(self, tmp_path, cubic_traj, cubic_load,
                                  motor):
        inst, _, _ = make_instance(cubic_traj, cubic_load, motor, theta=0.3)
        path = tmp_path / "instance.json"
        dump_problem(inst, path)
        back = load_problem(path)
        rng = np.random.default_rng(6)
        q = motor.r * cubic_traj.q_l + 0.1 * rng.standard_normal(cubic_traj.n)
        assert back.scalarized(q) == pytest.approx(inst.scalarized(q),
                                                   rel=1e-12)
        assert back.theta == inst.theta
