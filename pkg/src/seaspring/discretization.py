"""Periodic difference operators and trajectory-derived dynamic quantities.

All angular quantities are in rad / rad/s at the motor shaft before the
transmission; elastic torque is expressed at the load side and divided by
``eta * r`` where the motor-side balance requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DiffOperators",
    "MotorParams",
    "LoadModel",
    "ILM85X26",
    "build_operators",
    "elastic_torque",
    "motor_torque",
    "elongation",
    "power_series",
]

RPM = math.pi / 30.0  # rad/s per rpm


@dataclass(frozen=True)
class DiffOperators:
    """Circulant first/second derivative matrices on a periodic grid.

    ``D`` is the central-difference stencil [..., -1, 0, 1, ...] / (2 dt)
    with wrap in the first and last rows; it is skew-symmetric and
    annihilates constants.  ``D2`` is the [1, -2, 1] / dt^2 circulant.
    """

    D: sp.csr_matrix
    D2: sp.csr_matrix
    n: int
    dt: float


def build_operators(n: int, dt: float) -> DiffOperators:
    if n < 4:
        raise ValueError("need n >= 4, got %d" % n)
    if not dt > 0:
        raise ValueError("dt must be positive")
    i = np.arange(n)
    up = (i + 1) % n
    dn = (i - 1) % n
    rows = np.concatenate([i, i])
    D = sp.csr_matrix(
        (np.concatenate([np.full(n, 0.5 / dt), np.full(n, -0.5 / dt)]),
         (rows, np.concatenate([up, dn]))),
        shape=(n, n),
    )
    D2 = sp.csr_matrix(
        (np.concatenate([np.full(n, 1.0 / dt**2), np.full(n, 1.0 / dt**2),
                         np.full(n, -2.0 / dt**2)]),
         (np.concatenate([rows, i]), np.concatenate([up, dn, i]))),
        shape=(n, n),
    )
    D.sort_indices()
    D2.sort_indices()
    return DiffOperators(D=D, D2=D2, n=n, dt=dt)


@dataclass(frozen=True)
class MotorParams:
    """Electromechanical constants of the motor-transmission unit.

    ``k_m`` may be omitted (derived as ``k_t / sqrt(R)``); when all three are
    supplied they must be consistent to 1e-9 relative.  ``tau_max`` /
    ``dq_max`` are bilateral motor-side limits; ``None`` disables them.
    """

    k_t: float                 # torque constant [N*m/A]
    R: float                   # terminal resistance [ohm]
    I_m: float                 # rotor + assembly inertia [kg*m^2]
    b_m: float                 # viscous friction [N*m*s/rad]
    r: float                   # transmission ratio
    eta: float = 1.0           # transmission efficiency
    k_m: float | None = None   # motor constant [N*m/sqrt(W)]
    tau_max: float | None = None   # motor torque limit [N*m]
    dq_max: float | None = None    # motor speed limit [rad/s]

    def __post_init__(self):
        for name in ("k_t", "R", "I_m", "b_m", "r"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be strictly positive" % name)
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must be in (0, 1]")
        derived = self.k_t / math.sqrt(self.R)
        if self.k_m is None:
            object.__setattr__(self, "k_m", derived)
        elif abs(self.k_m - derived) > 1e-9 * derived:
            raise ValueError(
                "inconsistent k_m: given %g, k_t/sqrt(R) = %g" % (self.k_m, derived)
            )
        for name in ("tau_max", "dq_max"):
            limit = getattr(self, name)
            if limit is not None and not limit > 0:
                raise ValueError("%s must be positive when given" % name)


#: RoboDrive ILM 85x26 frameless motor with a 22:1 transmission.
ILM85X26 = MotorParams(
    k_t=0.24,
    R=0.323,
    I_m=1.246e-4,
    b_m=6e-5,
    r=22.0,
    eta=1.0,
    tau_max=8.3,
    dq_max=1500.0 * RPM,
)


@dataclass(frozen=True)
class LoadModel:
    """Load dynamics: either an inertia with viscous friction driven by an
    external torque, or the external torque column taken verbatim."""

    mode: str = "inertial-viscous"   # or "direct-torque"
    I_l: float = 0.0
    b_l: float = 0.0

    def __post_init__(self):
        if self.mode not in ("inertial-viscous", "direct-torque"):
            raise ValueError("unknown load mode %r" % self.mode)
        if self.I_l < 0 or self.b_l < 0:
            raise ValueError("I_l and b_l must be nonnegative")


def elastic_torque(traj, load: LoadModel) -> np.ndarray:
    """Required elastic torque along the reference trajectory [N*m]."""
    if load.mode == "direct-torque":
        return np.array(traj.tau_ext, dtype=float)
    return -load.I_l * traj.ddq_l - load.b_l * traj.dq_l + traj.tau_ext


def motor_torque(q_m, tau_ela, p: MotorParams, ops: DiffOperators) -> np.ndarray:
    """Motor torque from the discrete motor-side balance:
    tau_m = (I_m D2 + b_m D) q_m - tau_ela / (eta r).  No clipping."""
    q_m = np.asarray(q_m, dtype=float)
    tau_ela = np.asarray(tau_ela, dtype=float)
    if q_m.shape != (ops.n,) or tau_ela.shape != (ops.n,):
        raise ValueError("dimension mismatch")
    return p.I_m * (ops.D2 @ q_m) + p.b_m * (ops.D @ q_m) - tau_ela / (p.eta * p.r)


def elongation(q_m, q_l, r: float) -> np.ndarray:
    """Spring elongation delta = q_l - q_m / r [rad]."""
    q_m = np.asarray(q_m, dtype=float)
    q_l = np.asarray(q_l, dtype=float)
    if q_m.shape != q_l.shape:
        raise ValueError("dimension mismatch")
    return q_l - q_m / r


def power_series(q_m, tau_ela, p: MotorParams, ops: DiffOperators) -> np.ndarray:
    """Mechanical motor power per sample: tau_m * (D q_m) [W]."""
    q_m = np.asarray(q_m, dtype=float)
    return motor_torque(q_m, tau_ela, p, ops) * (ops.D @ q_m)
