"""Periodic load trajectories: ingestion, generation, resampling, concatenation.

A trajectory is one period of load motion sampled on a uniform grid.  Sample
``n + 1`` wraps to sample 1, so series never duplicate the endpoint.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample as _fourier_resample

__all__ = [
    "Trajectory",
    "CubicSpringSystem",
    "TrajectoryError",
    "PeriodDetectionError",
    "periodic_gradient",
    "load_trajectory",
    "save_trajectory",
    "generate_cubic_oscillation",
    "resample_periodic",
    "concatenate_tasks",
    "junction_gaps",
    "synthetic_gait_task",
]


class TrajectoryError(ValueError):
    """Invalid trajectory data or incompatible trajectory operation."""


class PeriodDetectionError(RuntimeError):
    """Oscillation period could not be located within the step budget."""


def periodic_gradient(y, dt, order=1):
    """Periodic central-difference derivative of a sampled series.

    This is the same stencil the optimization uses, so derivatives produced
    here satisfy the discrete identities exactly.
    """
    y = np.asarray(y, dtype=float)
    if order == 1:
        return (np.roll(y, -1) - np.roll(y, 1)) / (2.0 * dt)
    if order == 2:
        return (np.roll(y, -1) - 2.0 * y + np.roll(y, 1)) / dt**2
    raise ValueError("order must be 1 or 2")


@dataclass
class Trajectory:
    """One period of load motion on a uniform grid.

    Attributes
    ----------
    n : number of samples (>= 4)
    dt : sample interval [s]
    q_l, dq_l, ddq_l : load position [rad], velocity [rad/s], accel [rad/s^2]
    tau_ext : external torque on the load [N*m]
    label : free-text task name
    """

    n: int
    dt: float
    q_l: np.ndarray
    dq_l: np.ndarray
    ddq_l: np.ndarray
    tau_ext: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.n < 4:
            raise TrajectoryError("need at least 4 samples, got %d" % self.n)
        if not self.dt > 0:
            raise TrajectoryError("dt must be positive")
        for name in ("q_l", "dq_l", "ddq_l", "tau_ext"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.shape != (self.n,):
                raise TrajectoryError(
                    "%s has shape %s, expected (%d,)" % (name, arr.shape, self.n)
                )
            if not np.all(np.isfinite(arr)):
                raise TrajectoryError("NaN entries in %s" % name)
            arr.setflags(write=False)
            setattr(self, name, arr)

    @property
    def period(self) -> float:
        return self.n * self.dt

    def closure_residual(self) -> float:
        """Relative RMS mismatch between dq_l and the periodic central
        difference of q_l.  Diagnostic, not enforced."""
        est = periodic_gradient(self.q_l, self.dt)
        scale = float(np.sqrt(np.mean(self.dq_l**2)))
        if scale == 0.0:
            return float(np.sqrt(np.mean(est**2)))
        return float(np.sqrt(np.mean((est - self.dq_l) ** 2)) / scale)


@dataclass(frozen=True)
class CubicSpringSystem:
    """Single mass on a cubic spring, torque alpha * q**3, released from rest."""

    alpha: float   # cubic stiffness coefficient [N*m/rad^3]
    I_l: float     # load inertia [kg*m^2]
    q0: float      # release position [rad]

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.I_l > 0:
            raise ValueError("I_l must be positive")


# ---------------------------------------------------------------------------
# CSV ingestion

_CANONICAL_COLUMNS = ("time", "q_l", "dq_l", "ddq_l", "tau_ext")


def load_trajectory(path, spec=None, resample_to=None, label=None,
                    uniform_tol=1e-9):
    """Load one trajectory period from a CSV file.

    Required columns: ``time``, ``q_l``, ``tau_ext``.  Velocity and
    acceleration columns are synthesized with the periodic central difference
    when absent.  ``spec`` maps canonical column names to file column names.
    Non-uniform time stamps are rejected unless ``resample_to`` (a sample
    count) requests resampling onto a uniform grid.
    """
    spec = dict(spec or {})
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryError("empty file: %s" % path)
        header = [h.strip() for h in header]
        rows = [r for r in reader if any(c.strip() for c in r)]

    colmap = {name: spec.get(name, name) for name in _CANONICAL_COLUMNS}
    for required in ("time", "q_l", "tau_ext"):
        if colmap[required] not in header:
            raise TrajectoryError("missing column %r in %s" % (colmap[required], path))
    if len(rows) < 4:
        raise TrajectoryError("fewer than 4 samples in %s" % path)

    data = {}
    for name in _CANONICAL_COLUMNS:
        col = colmap[name]
        if col not in header:
            continue
        idx = header.index(col)
        try:
            values = np.array([float(r[idx]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise TrajectoryError("unparseable %s column: %s" % (name, exc))
        if not np.all(np.isfinite(values)):
            raise TrajectoryError("NaN entries in column %r" % col)
        data[name] = values

    t = data.pop("time")
    dts = np.diff(t)
    if np.any(dts <= 0):
        raise TrajectoryError("non-monotone time column")
    dt = float(np.mean(dts))
    uniform = np.max(np.abs(dts - dt)) <= uniform_tol * max(dt, 1.0)
    if not uniform and resample_to is None:
        raise TrajectoryError(
            "non-uniform time stamps; pass resample_to=<n> to resample"
        )

    if not uniform:
        # Linear interpolation onto a uniform grid over [t0, t0 + period),
        # period taken as the span plus one mean step (periodic closure).
        n_new = int(resample_to)
        if n_new < 4:
            raise TrajectoryError("resample_to must be at least 4")
        period = (t[-1] - t[0]) + dt
        t_new = t[0] + period * np.arange(n_new) / n_new
        t_wrap = np.concatenate([t, [t[0] + period]])
        for name in list(data):
            y_wrap = np.concatenate([data[name], [data[name][0]]])
            data[name] = np.interp(t_new, t_wrap, y_wrap)
        dt = period / n_new

    q_l = data["q_l"]
    n = len(q_l)
    dq_l = data.get("dq_l")
    ddq_l = data.get("ddq_l")
    if dq_l is None:
        dq_l = periodic_gradient(q_l, dt)
    if ddq_l is None:
        ddq_l = periodic_gradient(q_l, dt, order=2)
    traj = Trajectory(n=n, dt=dt, q_l=q_l, dq_l=dq_l, ddq_l=ddq_l,
                      tau_ext=data["tau_ext"],
                      label=label if label is not None else str(path))
    if resample_to is not None and uniform and int(resample_to) != n:
        traj = resample_periodic(traj, int(resample_to))
    return traj


def save_trajectory(traj: Trajectory, path, comments=()):
    """Write a trajectory period as CSV (header time,q_l,dq_l,ddq_l,tau_ext)."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write("# %s\n" % line)
        writer = csv.writer(fh)
        writer.writerow(_CANONICAL_COLUMNS)
        for i in range(traj.n):
            writer.writerow([
                repr(float(i * traj.dt)), repr(float(traj.q_l[i])),
                repr(float(traj.dq_l[i])), repr(float(traj.ddq_l[i])),
                repr(float(traj.tau_ext[i])),
            ])


# ---------------------------------------------------------------------------
# Cubic-spring free oscillation

def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _detect_period(beta, q0, h, max_steps):
    """First return of (q, v) to (q0, 0), by the v zero crossing whose q has
    the sign of q0, refined with linear interpolation on v."""
    f = lambda x: np.array([x[1], -beta * x[0] ** 3])
    x = np.array([q0, 0.0])
    sign0 = math.copysign(1.0, q0)
    for k in range(1, max_steps + 1):
        xp = x
        x = _rk4_step(f, x, h)
        # skip the start itself; a transversal crossing of v with q on the
        # release side marks a full period
        if k > 2 and xp[1] * sign0 > 0.0 and x[1] * sign0 <= 0.0 and x[0] * sign0 > 0.0:
            frac = xp[1] / (xp[1] - x[1])
            return (k - 1 + frac) * h
    raise PeriodDetectionError(
        "no period found within %d steps (h=%g)" % (max_steps, h)
    )


def generate_cubic_oscillation(sys: CubicSpringSystem, n: int,
                               oversample: int = 8,
                               drift_tol: float = 1e-6,
                               label: str = "cubic-oscillation"):
    """One period of the free vibration of a cubic-spring/inertia system.

    Integrates ``I_l * q'' = -alpha * q**3`` from rest at ``q0`` with fixed
    step RK4, locates the fundamental period by first return to the release
    state, and resamples one period onto ``n`` uniform points.  The load is
    modeled as pure inertia (tau_ext = 0); downstream the elastic torque is
    ``-I_l * ddq_l``.  Raises if the relative drift of total mechanical
    energy over the period exceeds ``drift_tol``.
    """
    if sys.q0 == 0.0:
        raise TrajectoryError("q0 = 0 is a degenerate equilibrium, no oscillation")
    if n < 4:
        raise TrajectoryError("need at least 4 samples")
    oversample = max(int(oversample), 2)

    beta = sys.alpha / sys.I_l
    # characteristic angular frequency of the cubic oscillator scales with
    # amplitude: omega ~ |q0| * sqrt(beta)
    omega = abs(sys.q0) * math.sqrt(beta)
    h0 = (2.0 * math.pi / omega) / max(oversample * n, 1024)
    period = _detect_period(beta, sys.q0, h0, max_steps=200 * max(oversample * n, 1024))

    # re-integrate exactly one period at a commensurate internal step
    m = oversample
    h = period / (m * n)
    f = lambda x: np.array([x[1], -beta * x[0] ** 3])
    x = np.array([sys.q0, 0.0])
    q = np.empty(n)
    v = np.empty(n)
    emin = math.inf
    emax = -math.inf
    for k in range(m * n):
        if k % m == 0:
            q[k // m] = x[0]
            v[k // m] = x[1]
        e = 0.5 * sys.I_l * x[1] ** 2 + 0.25 * sys.alpha * x[0] ** 4
        emin = min(emin, e)
        emax = max(emax, e)
        x = _rk4_step(f, x, h)
    e0 = 0.25 * sys.alpha * sys.q0**4
    drift = (emax - emin) / e0
    if drift > drift_tol:
        raise TrajectoryError(
            "energy drift %.3g exceeds tolerance %.3g" % (drift, drift_tol)
        )

    a = -beta * q**3
    traj = Trajectory(n=n, dt=period / n, q_l=q, dq_l=v, ddq_l=a,
                      tau_ext=np.zeros(n), label=label)
    return traj


# ---------------------------------------------------------------------------
# Resampling and concatenation

def resample_periodic(traj: Trajectory, n_new: int) -> Trajectory:
    """Fourier (band-limited) resampling of one period onto ``n_new`` points."""
    n_new = int(n_new)
    if n_new < 4:
        raise TrajectoryError("n_new must be at least 4")
    if n_new == traj.n:
        return traj
    series = {}
    for name in ("q_l", "dq_l", "ddq_l", "tau_ext"):
        series[name] = _fourier_resample(getattr(traj, name), n_new)
    return Trajectory(n=n_new, dt=traj.period / n_new, label=traj.label, **series)


def junction_gaps(parts):
    """Position gaps |q_l junction mismatch| across a cyclic sequence of
    trajectories; entry i is the gap between the end of part i and the start
    of part i+1 (wrapping)."""
    gaps = []
    for i, cur in enumerate(parts):
        nxt = parts[(i + 1) % len(parts)]
        gaps.append(abs(float(cur.q_l[-1]) - float(nxt.q_l[0])))
    return gaps


def concatenate_tasks(parts, dt=None, gap_warn=None, label=None):
    """Concatenate (Trajectory, repeat) pairs into one periodic trajectory.

    All parts must share the sample interval; alternatively pass ``dt`` to
    resample every part onto a common grid first.  Junction gaps in q_l are
    reported via warning when ``gap_warn`` is given, never smoothed.
    """
    parts = [(traj, int(rep)) for traj, rep in parts]
    if not parts:
        raise TrajectoryError("no parts to concatenate")
    if any(rep < 1 for _, rep in parts):
        raise TrajectoryError("repeat counts must be positive")
    if len(parts) == 1 and parts[0][1] == 1:
        return parts[0][0]

    if dt is not None:
        resampled = []
        for traj, rep in parts:
            n_new = int(round(traj.period / dt))
            if n_new < 4 or abs(n_new * dt - traj.period) > 1e-9 * traj.period:
                raise TrajectoryError(
                    "part period %g is not a multiple of dt=%g" % (traj.period, dt)
                )
            resampled.append((resample_periodic(traj, n_new), rep))
        parts = resampled
    else:
        dt0 = parts[0][0].dt
        for traj, _ in parts[1:]:
            if abs(traj.dt - dt0) > 1e-12 * dt0:
                raise TrajectoryError(
                    "incompatible dt (%g vs %g); pass a common dt to resample"
                    % (traj.dt, dt0)
                )
        dt = dt0

    sequence = []
    for traj, rep in parts:
        sequence.extend([traj] * rep)
    gaps = junction_gaps(sequence)
    if gap_warn is not None and max(gaps) > gap_warn:
        warnings.warn(
            "junction gap %.3g rad exceeds %.3g" % (max(gaps), gap_warn),
            stacklevel=2,
        )

    cat = {name: np.concatenate([getattr(t, name) for t in sequence])
           for name in ("q_l", "dq_l", "ddq_l", "tau_ext")}
    n_total = sum(t.n for t in sequence)
    if label is None:
        label = "+".join("%dx%s" % (rep, t.label or "task") for t, rep in parts)
    return Trajectory(n=n_total, dt=dt, label=label, **cat)


# ---------------------------------------------------------------------------
# Bundled synthetic fixture

def synthetic_gait_task(n: int = 501, period: float = 0.6, tau_peak: float = 9.0,
                        label: str = "synthetic-gait"):
    """Deterministic gait-like fixture: a multi-harmonic ankle-style swing
    with an external torque that grows cubically with the load angle, peaking
    at ``tau_peak`` (default 9 N*m at the load side).

    Entirely synthetic, built for the bundled feasibility study: the swing is
    fast enough that a rigid drive (and in fact any linear spring -- the
    torque has zero slope at the angle zero crossing, so a linear elongation
    cannot absorb velocity there) exceeds a small motor's speed limit, while
    a stiffening nonlinear spring stays feasible.  Use with the
    ``direct-torque`` load model.
    """
    if n < 4:
        raise TrajectoryError("need at least 4 samples")
    t = period * np.arange(n) / n
    w = 2.0 * math.pi / period
    a = (1.0, 0.18, 0.05)
    ph = (0.0, 0.5, 1.2)
    q = sum(a[k] * np.sin((k + 1) * w * t + ph[k]) for k in range(3))
    dq = sum(a[k] * (k + 1) * w * np.cos((k + 1) * w * t + ph[k]) for k in range(3))
    ddq = sum(-a[k] * ((k + 1) * w) ** 2 * np.sin((k + 1) * w * t + ph[k])
              for k in range(3))
    scale = float(np.max(np.abs(q)))
    q, dq, ddq = q / scale, dq / scale, ddq / scale
    tau = tau_peak * q**3
    return Trajectory(n=n, dt=period / n, q_l=q, dq_l=dq, ddq_l=ddq,
                      tau_ext=tau, label=label)
