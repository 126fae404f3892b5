import json

import numpy as np
import pytest

from seaspring.analysis import (
    energy_breakdown, peak_power_true, peak_power_cvx, limit_violation,
    rigid_baseline, linear_spring_baseline, theta_grid, knee_index,
    tradeoff_sweep, write_report, write_curve_csv, write_curve_svg,
    TradeoffPoint,
)
from seaspring.discretization import (build_operators, elastic_torque,
                                      motor_torque)
from seaspring import oracle


class TestEnergyBreakdown:
    def test_against_independent_quadrature(self, cubic_traj, cubic_load,
                                            motor):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        rng = np.random.default_rng(0)
        q_m = motor.r * cubic_traj.q_l + 0.02 * rng.standard_normal(cubic_traj.n)
        bd = energy_breakdown(cubic_traj, cubic_load, motor, ops, q_m)
        tau_ela = elastic_torque(cubic_traj, cubic_load)
        tau_m = motor_torque(q_m, tau_ela, motor, ops)
        audit = oracle.quadrature_energy(q_m, tau_m, cubic_traj.dt, motor.k_m)
        assert bd.joule == pytest.approx(audit["joule"], rel=1e-9)

    def test_totals(self):
        from seaspring.analysis import EnergyBreakdown
        bd = EnergyBreakdown(joule=1.0, viscous=2.0, load_mech=0.5)
        assert bd.dissipated == 3.0
        assert bd.total == 3.5


class TestBaselines:
    def test_rigid_zero_elongation(self, cubic_traj, cubic_load, motor):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        base = rigid_baseline(cubic_traj, cubic_load, motor, ops)
        assert np.allclose(base.q_m, motor.r * cubic_traj.q_l)
        assert base.energy.dissipated > 0

    def test_stiff_linear_converges_to_rigid(self, cubic_traj, cubic_load,
                                             motor_unlimited):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        rigid = rigid_baseline(cubic_traj, cubic_load, motor_unlimited, ops)
        stiff = linear_spring_baseline(cubic_traj, cubic_load,
                                       motor_unlimited, ops,
                                       k_bounds=(1e9, 1e10), n_grid=4)
        assert stiff.energy.dissipated == pytest.approx(
            rigid.energy.dissipated, rel=1e-3)

    def test_linear_beats_rigid(self, cubic_traj, cubic_load, motor_unlimited):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        rigid = rigid_baseline(cubic_traj, cubic_load, motor_unlimited, ops)
        best = linear_spring_baseline(cubic_traj, cubic_load,
                                      motor_unlimited, ops)
        assert best.energy.dissipated < rigid.energy.dissipated
        assert best.stiffness > 0

    def test_limit_violation_sign(self, gait_traj, gait_load, motor):
        ops = build_operators(gait_traj.n, gait_traj.dt)
        rigid = rigid_baseline(gait_traj, gait_load, motor, ops)
        assert rigid.limit_violation > 0          # too fast for the motor
        assert not rigid.feasible


class TestSweepTools:
    def test_theta_grid_properties(self):
        grid = theta_grid(30)
        assert grid[0] == 0.0 and grid[-1] == 1.0
        assert len(grid) == 30
        assert np.all(np.diff(grid) > 0)

    def test_knee_on_synthetic_l_curve(self):
        pts = []
        for i, (e, w) in enumerate([(10, 0), (9.8, 0.5), (5, 1), (1, 1.5),
                                    (0.9, 10), (0.85, 20)]):
            pts.append(TradeoffPoint(theta=i / 5.0, energy_dissipated=e,
                                     peak_power_true=w, peak_power_cvx=w,
                                     status="optimal", q_m=np.zeros(4)))
        knee = knee_index(pts)
        assert 1 <= knee <= 4

    def test_small_sweep_statuses(self, cubic_traj, cubic_load, motor):
        ops = build_operators(cubic_traj.n, cubic_traj.dt)
        pts = tradeoff_sweep(cubic_traj, cubic_load, motor, ops, n_points=3)
        assert [pt.status for pt in pts] == ["optimal"] * 3
        assert pts[0].theta == 0.0 and pts[-1].theta == 1.0


class TestWriters:
    def test_report_deterministic(self, tmp_path):
        payload = {"b": 1.0, "a": np.float64(2.0),
                   "arr": np.arange(3.0)}
        p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
        write_report(p1, payload)
        write_report(p2, payload)
        assert p1.read_bytes() == p2.read_bytes()
        assert json.loads(p1.read_text())["arr"] == [0.0, 1.0, 2.0]

    def test_curve_csv_and_svg(self, tmp_path):
        pts = [TradeoffPoint(theta=t, energy_dissipated=10 - 5 * t,
                             peak_power_true=3 * t, peak_power_cvx=2 * t,
                             status="optimal", q_m=np.zeros(4))
               for t in (0.0, 0.5, 1.0)]
        csv_path = tmp_path / "curve.csv"
        write_curve_csv(csv_path, pts)
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 4
        svg_path = tmp_path / "curve.svg"
        write_curve_svg(svg_path, pts)
        assert svg_path.read_text().startswith("<svg")
