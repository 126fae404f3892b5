"""Independent verification machinery.

Every routine here deliberately re-derives its quantity through a separate
code path (own integrator, own Riemann sums, own difference quotients) so
the main modules can be checked against something they share no code with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .solver import CanonicalQCQP, QuadConstraint

__all__ = ["rk4_integrate", "quadrature_energy", "finite_diff_gradient_check",
           "PlantedInstance", "plant_instance"]


def rk4_integrate(field, x0, dt, steps):
    """Classical fixed-step 4th-order Runge-Kutta.

    Returns the state series including the initial state, shape
    (steps + 1, len(x0)).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((steps + 1, len(x)))
    out[0] = x
    for i in range(steps):
        k1 = np.asarray(field(x))
        k2 = np.asarray(field(x + 0.5 * dt * k1))
        k3 = np.asarray(field(x + 0.5 * dt * k2))
        k4 = np.asarray(field(x + dt * k3))
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at step {i + 1}")
        out[i + 1] = x
    return out


def quadrature_energy(q_m, tau_m, dt, k_m):
    """Rectangle-rule motor energy from raw torque and position series.

    Evaluates sum((tau^2/k_m^2 + tau * dq) * dt) with a local periodic
    central difference for dq; shares no code with the analysis module.
    Returns a dict with 'joule', 'mech', and 'total' entries.
    """
    q_m = np.asarray(q_m, dtype=float)
    tau_m = np.asarray(tau_m, dtype=float)
    if q_m.shape != tau_m.shape:
        raise ValueError("series lengths differ")
    dq = (np.roll(q_m, -1) - np.roll(q_m, 1)) / (2.0 * dt)
    joule = 0.0
    mech = 0.0
    for t, v in zip(tau_m, dq):
        joule += (t / k_m) ** 2 * dt
        mech += t * v * dt
    return {"joule": joule, "mech": mech, "total": joule + mech}


def finite_diff_gradient_check(func, grad, q, h=None):
    """Max relative error of an analytic gradient vs central differences."""
    q = np.asarray(q, dtype=float)
    if h is None:
        h = 1e-5 * max(np.linalg.norm(q), 1.0)
    if h <= 0:
        raise ValueError("h must be positive")
    g = np.asarray(grad(q), dtype=float)
    fd = np.empty_like(g)
    for i in range(len(q)):
        e = np.zeros_like(q)
        e[i] = h
        fd[i] = (func(q + e) - func(q - e)) / (2.0 * h)
    scale = max(float(np.abs(g).max(initial=0.0)), 1.0)
    return float(np.abs(fd - g).max() / scale)


@dataclass(frozen=True)
class PlantedInstance:
    """Canonical QCQP whose optimum is known by construction."""

    instance: CanonicalQCQP
    q_star: np.ndarray
    objective_star: float
    lam_star: np.ndarray
    nu_star: np.ndarray
    seed: int


def plant_instance(n, seed, n_ineq=None, n_eq=None, n_active=None,
                   with_quads=False, difference_rows=False,
                   max_retries=5) -> PlantedInstance:
    """Build a random convex QCQP with a planted KKT point.

    Draws a positive definite quadratic, a random feasible point q_star,
    chooses an active set with positive multipliers, then back-solves the
    linear objective term from the stationarity condition, which makes
    q_star globally optimal.  ``difference_rows`` mixes in sparse
    two-entry rows mimicking the discrete-derivative constraints of the
    design problem; ``with_quads`` adds rank-1 quadratic constraints.
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    if n_ineq is None:
        n_ineq = max(2, n // 2)
    if n_eq is None:
        n_eq = max(1, n // 5)
    if n_active is None:
        n_active = max(1, n_ineq // 3)
    n_active = min(n_active, n_ineq, max(1, n // 3))

    for attempt in range(max_retries):
        rng = np.random.default_rng(seed + 1000003 * attempt)
        x_star = rng.normal(size=n)
        M = rng.normal(size=(n, n))
        P = M.T @ M + 0.1 * np.eye(n)

        if difference_rows:
            G = np.zeros((n_ineq, n))
            for i in range(n_ineq):
                j = rng.integers(0, n)
                G[i, j] = rng.choice([-1.0, 1.0])
                G[i, (j + 1) % n] = -G[i, j]
        else:
            G = rng.normal(size=(n_ineq, n))
        active = rng.choice(n_ineq, size=n_active, replace=False)
        h = G @ x_star + rng.uniform(0.1, 1.0, size=n_ineq)
        h[active] = G[active] @ x_star
        lam = np.zeros(n_ineq)
        lam[active] = rng.uniform(0.5, 2.0, size=n_active)

        quads = ()
        lam_q = np.zeros(0)
        if with_quads:
            n_q = 2
            quads = []
            lam_q = np.zeros(n_q)
            for k in range(n_q):
                F = rng.normal(size=(1, n))
                w = rng.normal(size=n)
                Fx = float((F @ x_star)[0])
                val = Fx * Fx + w @ x_star
                if k == 0:    # active with positive multiplier
                    d = -val
                    lam_q[k] = rng.uniform(0.5, 2.0)
                else:
                    d = -val - rng.uniform(0.1, 1.0)
                quads.append(QuadConstraint(F=sp.csr_matrix(F), w=w, d=d))
            quads = tuple(quads)

        A = rng.normal(size=(n_eq, n))
        b = A @ x_star
        nu = rng.normal(size=n_eq)

        # stationarity: P x + lin + G'lam + sum lam_q (2F'Fx + w) + A'nu = 0
        lin = -(P @ x_star + G.T @ lam + A.T @ nu)
        for k, qc in enumerate(quads):
            lin -= lam_q[k] * np.asarray(qc.grad(x_star))

        # require a strictly feasible certificate (Slater) for the draw
        rows = [G[active]] if n_active else []
        for k, qc in enumerate(quads):
            if lam_q[k] > 0:
                rows.append(np.asarray(qc.grad(x_star))[None, :])
        ok = True
        if rows:
            Gact = np.vstack(rows)
            try:
                dirn = -Gact.T @ np.linalg.solve(
                    Gact @ Gact.T + 1e-12 * np.eye(len(Gact)),
                    np.ones(len(Gact)))
            except np.linalg.LinAlgError:
                ok = False
            else:
                ok = bool(np.all(Gact @ dirn < -1e-8))
        if not ok:
            continue

        prob = CanonicalQCQP(P=sp.csr_matrix(P), lin=lin, const=0.0,
                             G=sp.csr_matrix(G), h=h,
                             A=sp.csr_matrix(A), b=b, quads=quads)
        lam_all = np.concatenate([lam, lam_q])
        return PlantedInstance(instance=prob, q_star=x_star,
                               objective_star=prob.objective(x_star),
                               lam_star=lam_all, nu_star=nu, seed=seed)
    raise RuntimeError(f"no nondegenerate draw after {max_retries} retries "
                       f"(seed {seed})")
