"""Shared fixtures: the bundled tasks and a one-call instance builder."""

import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from seaspring import (
    CubicSpringSystem, ILM85X26, LoadModel,
    generate_cubic_oscillation, synthetic_gait_task,
)
from seaspring.discretization import build_operators, elastic_torque
from seaspring.problem import (
    ConstraintSystem, assemble_energy_cost, assemble_monotonicity,
    assemble_actuator_limits, assemble_power_terms, build_problem,
)

CUBIC_ALPHA = 40.0
CUBIC_INERTIA = 0.125
CUBIC_Q0 = np.pi / 2.0


@pytest.fixture(scope="session")
def cubic_traj():
    system = CubicSpringSystem(alpha=CUBIC_ALPHA, I_l=CUBIC_INERTIA,
                               q0=CUBIC_Q0)
    return generate_cubic_oscillation(system, n=501)


@pytest.fixture(scope="session")
def cubic_load():
    return LoadModel(mode="inertial-viscous", I_l=CUBIC_INERTIA, b_l=0.0)


@pytest.fixture(scope="session")
def gait_traj():
    return synthetic_gait_task(n=501)


@pytest.fixture(scope="session")
def gait_load():
    return LoadModel(mode="direct-torque")


@pytest.fixture(scope="session")
def motor():
    return ILM85X26


@pytest.fixture(scope="session")
def motor_unlimited():
    return dataclasses.replace(ILM85X26, tau_max=None, dq_max=None)


def make_instance(traj, load, p, theta=1.0, cost="total", delta_max=None,
                  gamma1=0.02, gamma2=300.0):
    """Assemble a full design instance for a trajectory/motor pairing."""
    ops = build_operators(traj.n, traj.dt)
    tau_ela = elastic_torque(traj, load)
    A1, b1, A2, b2, eps = assemble_monotonicity(tau_ela, traj.q_l, p.r)
    if p.tau_max is None and p.dq_max is None and delta_max is None:
        G_lim, h_lim = sp.csr_matrix((0, traj.n)), np.zeros(0)
    else:
        G_lim, h_lim = assemble_actuator_limits(traj, load, p, ops,
                                                delta_max=delta_max)
    con = ConstraintSystem(A1=A1, b1=b1, A2=A2, b2=b2, eps_strict=eps,
                           G_lim=G_lim, h_lim=h_lim, q_l=traj.q_l,
                           tau_ela=tau_ela, r=p.r, delta_max=delta_max)
    inst = build_problem(
        assemble_energy_cost(traj, load, p, ops, terms=cost),
        assemble_power_terms(tau_ela, p, ops), con,
        theta=theta, gamma1=gamma1, gamma2=gamma2)
    return inst, ops, tau_ela
