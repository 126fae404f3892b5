import math

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from seaspring.trajectory import (
    Trajectory, CubicSpringSystem, TrajectoryError,
    periodic_gradient, load_trajectory, save_trajectory,
    generate_cubic_oscillation, resample_periodic, concatenate_tasks,
    junction_gaps, synthetic_gait_task,
)


def lemniscate_period(alpha, I_l, q0):
    # closed form for the quartic-potential oscillator:
    # T = (4/q0) sqrt(2 I/alpha) * Gamma(1/4)^2 / (4 sqrt(2 pi))
    const = gamma_fn(0.25) ** 2 / (4.0 * math.sqrt(2.0 * math.pi))
    return 4.0 / q0 * math.sqrt(2.0 * I_l / alpha) * const


class TestCubicOscillation:
    def test_period_matches_closed_form(self):
        system = CubicSpringSystem(alpha=40.0, I_l=0.125, q0=math.pi / 2)
        traj = generate_cubic_oscillation(system, n=501)
        exact = lemniscate_period(40.0, 0.125, math.pi / 2)
        assert traj.period == pytest.approx(exact, rel=1e-7)
        # frozen regression value for the default configuration
        assert traj.period == pytest.approx(0.2639321815937606, rel=1e-9)

    def test_states_on_energy_shell(self):
        system = CubicSpringSystem(alpha=40.0, I_l=0.125, q0=math.pi / 2)
        traj = generate_cubic_oscillation(system, n=501)
        e = 0.5 * 0.125 * traj.dq_l**2 + 0.25 * 40.0 * traj.q_l**4
        e0 = 0.25 * 40.0 * (math.pi / 2) ** 4
        assert np.max(np.abs(e - e0)) / e0 < 1e-6

    def test_closure_residual_small(self):
        system = CubicSpringSystem(alpha=40.0, I_l=0.125, q0=math.pi / 2)
        traj = generate_cubic_oscillation(system, n=501)
        assert traj.closure_residual() < 1e-3

    def test_degenerate_release_rejected(self):
        system = CubicSpringSystem(alpha=40.0, I_l=0.125, q0=0.0)
        with pytest.raises(TrajectoryError):
            generate_cubic_oscillation(system, n=64)

    def test_amplitude_scaling_of_period(self):
        # period scales as 1/q0 for the pure quartic potential
        a = generate_cubic_oscillation(CubicSpringSystem(40.0, 0.125, 1.0), 64)
        b = generate_cubic_oscillation(CubicSpringSystem(40.0, 0.125, 2.0), 64)
        assert a.period == pytest.approx(2.0 * b.period, rel=1e-6)


class TestTrajectoryType:
    def test_validation(self):
        with pytest.raises(TrajectoryError):
            Trajectory(n=3, dt=0.1, q_l=np.zeros(3), dq_l=np.zeros(3),
                       ddq_l=np.zeros(3), tau_ext=np.zeros(3))
        with pytest.raises(TrajectoryError):
            Trajectory(n=8, dt=0.1, q_l=np.full(8, np.nan),
                       dq_l=np.zeros(8), ddq_l=np.zeros(8),
                       tau_ext=np.zeros(8))

    def test_periodic_gradient_exact_on_modes(self):
        n = 64
        t = 2.0 * np.pi * np.arange(n) / n
        # first Fourier mode is differentiated with only O(h^2) phase error
        err = np.max(np.abs(periodic_gradient(np.sin(t), 2 * np.pi / n)
                            - np.cos(t)))
        assert err < 2e-3


class TestCsvRoundTrip:
    def test_save_load_bit_exact(self, tmp_path, gait_traj):
        path = tmp_path / "task.csv"
        save_trajectory(gait_traj, path, comments=["fixture"])
        back = load_trajectory(path)
        for name in ("q_l", "dq_l", "ddq_l", "tau_ext"):
            assert np.array_equal(getattr(back, name), getattr(gait_traj, name))
        assert back.dt == pytest.approx(gait_traj.dt, rel=1e-12)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,q_l\n0,0\n0.1,1\n0.2,0\n0.3,-1\n")
        with pytest.raises(TrajectoryError, match="tau_ext"):
            load_trajectory(path)

    def test_velocity_synthesized(self, tmp_path):
        n = 32
        t = np.arange(n) * 0.01
        q = np.sin(2 * np.pi * t / (n * 0.01))
        rows = "\n".join(f"{ti},{qi},0" for ti, qi in zip(t, q))
        path = tmp_path / "minimal.csv"
        path.write_text("time,q_l,tau_ext\n" + rows + "\n")
        traj = load_trajectory(path)
        assert np.allclose(traj.dq_l, periodic_gradient(traj.q_l, traj.dt))

    def test_nonuniform_rejected_unless_resampled(self, tmp_path):
        path = tmp_path / "jitter.csv"
        t = [0.0, 0.1, 0.25, 0.3, 0.42, 0.5]
        rows = "\n".join(f"{ti},{math.sin(ti)},0" for ti in t)
        path.write_text("time,q_l,tau_ext\n" + rows + "\n")
        with pytest.raises(TrajectoryError, match="non-uniform"):
            load_trajectory(path)
        traj = load_trajectory(path, resample_to=16)
        assert traj.n == 16


class TestResampleConcat:
    def test_fourier_resample_exact_on_bandlimited(self):
        n = 32
        t = 2 * np.pi * np.arange(n) / n
        traj = Trajectory(n=n, dt=2 * np.pi / n, q_l=np.sin(t),
                          dq_l=np.cos(t), ddq_l=-np.sin(t),
                          tau_ext=np.zeros(n))
        up = resample_periodic(traj, 64)
        t2 = 2 * np.pi * np.arange(64) / 64
        assert np.max(np.abs(up.q_l - np.sin(t2))) < 1e-12

    def test_concat_repeats(self, gait_traj):
        tripled = concatenate_tasks([(gait_traj, 3)])
        assert tripled.n == 3 * gait_traj.n
        assert tripled.period == pytest.approx(3 * gait_traj.period)

    def test_concat_dt_mismatch(self, gait_traj):
        other = synthetic_gait_task(n=250)
        with pytest.raises(TrajectoryError, match="incompatible dt"):
            concatenate_tasks([(gait_traj, 1), (other, 1)])

    def test_junction_gaps(self, gait_traj):
        gaps = junction_gaps([gait_traj, gait_traj])
        assert len(gaps) == 2
        assert all(g >= 0 for g in gaps)


class TestGaitFixture:
    def test_shape(self, gait_traj):
        assert gait_traj.n == 501
        assert np.max(np.abs(gait_traj.q_l)) == pytest.approx(1.0, rel=1e-6)
        assert np.max(np.abs(gait_traj.tau_ext)) == pytest.approx(9.0, rel=1e-2)

    def test_derivatives_consistent(self, gait_traj):
        est = periodic_gradient(gait_traj.q_l, gait_traj.dt)
        scale = np.max(np.abs(gait_traj.dq_l))
        assert np.max(np.abs(est - gait_traj.dq_l)) / scale < 1e-3

    def test_torque_zero_slope_at_zero_crossing(self, gait_traj):
        # cubic torque law: vanishing stiffness where the angle crosses zero
        i = int(np.argmin(np.abs(gait_traj.q_l)))
        dtau = periodic_gradient(gait_traj.tau_ext, gait_traj.dt)
        assert abs(dtau[i]) < 0.05 * np.max(np.abs(dtau))
