"""Post-solve analysis: energy audits, baselines, and trade-off sweeps.

Everything here evaluates candidate motor traces with the exact physics
(no convex surrogates), so the numbers are comparable across the nonlinear
design, the rigid drivetrain, and the best linear spring.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .discretization import (DiffOperators, MotorParams, LoadModel,
                             elastic_torque, motor_torque, power_series)
from .problem import (assemble_energy_cost, assemble_monotonicity,
                      assemble_actuator_limits, assemble_power_terms,
                      build_problem, ConstraintSystem)
from .solver import SolverConfig, solve

__all__ = [
    "EnergyBreakdown", "BaselineResult", "TradeoffPoint",
    "energy_breakdown", "peak_power_true", "peak_power_cvx",
    "limit_violation", "rigid_baseline", "linear_spring_baseline",
    "tradeoff_sweep", "knee_index", "write_report", "write_curve_csv",
    "write_curve_svg",
]


@dataclass
class EnergyBreakdown:
    """Per-cycle motor energy split (joules).

    ``dissipated`` is what the actuator itself wastes (Joule + viscous);
    ``load_mech`` is the exchange with the load, which nets to ~0 over a
    conservative cycle and is excluded from dissipation.
    """

    joule: float
    viscous: float
    load_mech: float

    @property
    def dissipated(self):
        return self.joule + self.viscous

    @property
    def total(self):
        return self.joule + self.viscous + self.load_mech


def energy_breakdown(traj, load: LoadModel, p: MotorParams,
                     ops: DiffOperators, q_m) -> EnergyBreakdown:
    """Audit one period of a motor trace with the exact discrete physics."""
    q_m = np.asarray(q_m, dtype=float)
    tau_ela = elastic_torque(traj, load)
    tau_m = motor_torque(q_m, tau_ela, p, ops)
    dq_m = ops.D @ q_m
    dt = ops.dt
    joule = float(np.sum((tau_m / p.k_m) ** 2)) * dt
    viscous = p.b_m * float(np.sum(dq_m ** 2)) * dt
    load_mech = -float(tau_ela @ traj.dq_l) / p.eta * dt
    return EnergyBreakdown(joule=joule, viscous=viscous, load_mech=load_mech)


def peak_power_true(traj, load, p, ops, q_m):
    """Peak of the exact mechanical power tau_m * dq_m over the cycle."""
    tau_ela = elastic_torque(traj, load)
    return float(np.max(power_series(np.asarray(q_m, dtype=float),
                                     tau_ela, p, ops)))


def peak_power_cvx(traj, load, p, ops, q_m):
    """Peak of the convex surrogate (inertial torque-speed product dropped)."""
    tau_ela = elastic_torque(traj, load)
    dq_m = ops.D @ np.asarray(q_m, dtype=float)
    return float(np.max(p.b_m * dq_m ** 2 - tau_ela * dq_m / (p.eta * p.r)))


def limit_violation(traj, load, p, ops, q_m, delta_max=None):
    """Worst actuator-limit violation (<= 0 means the trace is feasible)."""
    q_m = np.asarray(q_m, dtype=float)
    worst = -np.inf
    if p.tau_max is not None:
        tau_ela = elastic_torque(traj, load)
        worst = max(worst, float(np.max(
            np.abs(motor_torque(q_m, tau_ela, p, ops))) - p.tau_max))
    if p.dq_max is not None:
        worst = max(worst, float(np.max(np.abs(ops.D @ q_m)) - p.dq_max))
    if delta_max is not None:
        worst = max(worst, float(np.max(
            np.abs(traj.q_l - q_m / p.r)) - delta_max))
    return worst if np.isfinite(worst) else 0.0


@dataclass
class BaselineResult:
    """Fixed-architecture comparison point (rigid drive or linear spring)."""

    kind: str
    q_m: np.ndarray
    energy: EnergyBreakdown
    peak_power: float
    limit_violation: float
    stiffness: float | None = None

    @property
    def feasible(self):
        return self.limit_violation <= 0.0


def _spring_trace(traj, load, p, k):
    """Motor trace realizing tau_ela = k * delta along the load cycle."""
    tau_ela = elastic_torque(traj, load)
    return p.r * (traj.q_l - tau_ela / k)


def rigid_baseline(traj, load, p, ops, delta_max=None) -> BaselineResult:
    """Direct drive: zero elongation, motor slaved to the load."""
    q_m = p.r * traj.q_l
    return BaselineResult(
        kind="rigid", q_m=q_m,
        energy=energy_breakdown(traj, load, p, ops, q_m),
        peak_power=peak_power_true(traj, load, p, ops, q_m),
        limit_violation=limit_violation(traj, load, p, ops, q_m, delta_max),
    )


def linear_spring_baseline(traj, load, p, ops, metric="energy",
                           k_bounds=(1.0, 1e7), n_grid=200,
                           delta_max=None) -> BaselineResult:
    """Best single linear spring tau = k * delta for the given cycle.

    Scans stiffness on a log grid, then refines the best bracket by
    golden-section search.  ``metric`` selects what is minimized:
    "energy" (dissipated) or "power" (true peak).
    """
    if metric not in ("energy", "power"):
        raise ValueError("metric must be 'energy' or 'power'")

    def score(k):
        q_m = _spring_trace(traj, load, p, k)
        if metric == "energy":
            return energy_breakdown(traj, load, p, ops, q_m).dissipated
        return peak_power_true(traj, load, p, ops, q_m)

    grid = np.geomspace(k_bounds[0], k_bounds[1], n_grid)
    vals = np.array([score(k) for k in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_grid - 1)]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = score(np.exp(c)), score(np.exp(d))
    for _ in range(80):
        if b - a < 1e-12:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = score(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = score(np.exp(d))
    k_best = float(np.exp((a + b) / 2.0))
    q_m = _spring_trace(traj, load, p, k_best)
    return BaselineResult(
        kind="linear", q_m=q_m, stiffness=k_best,
        energy=energy_breakdown(traj, load, p, ops, q_m),
        peak_power=peak_power_true(traj, load, p, ops, q_m),
        limit_violation=limit_violation(traj, load, p, ops, q_m, delta_max),
    )


@dataclass
class TradeoffPoint:
    """One scalarization weight on the energy / peak-power frontier."""

    theta: float
    energy_dissipated: float
    peak_power_true: float
    peak_power_cvx: float
    status: str
    q_m: np.ndarray


def theta_grid(n_points):
    """{0, 1} plus a sigmoid-warped interior grid clustering near the ends."""
    if n_points < 2:
        raise ValueError("need at least two sweep points")
    inner = 1.0 / (1.0 + np.exp(-np.linspace(-6.0, 6.0, n_points - 2))) \
        if n_points > 2 else np.zeros(0)
    return np.unique(np.concatenate([[0.0], inner, [1.0]]))


def tradeoff_sweep(traj, load, p, ops, n_points=11, gamma1=0.02,
                   gamma2=300.0, delta_max=None, eps_strict=None,
                   config: SolverConfig | None = None):
    """Solve the design across a theta grid; returns the frontier points."""
    cfg = config or SolverConfig()
    tau_ela = elastic_torque(traj, load)
    energy = assemble_energy_cost(traj, load, p, ops)
    A1, b1, A2, b2, eps = assemble_monotonicity(tau_ela, traj.q_l, p.r,
                                                eps_strict=eps_strict)
    G_lim, h_lim = assemble_actuator_limits(traj, load, p, ops,
                                            delta_max=delta_max)
    con = ConstraintSystem(A1=A1, b1=b1, A2=A2, b2=b2, eps_strict=eps,
                           G_lim=G_lim, h_lim=h_lim, q_l=traj.q_l,
                           tau_ela=tau_ela, r=p.r, delta_max=delta_max)
    power = assemble_power_terms(tau_ela, p, ops)
    points = []
    for theta in theta_grid(n_points):
        inst = build_problem(energy, power, con, float(theta),
                             gamma1=gamma1, gamma2=gamma2)
        sol = solve(inst, cfg)
        if sol.q_m is None:
            points.append(TradeoffPoint(theta=float(theta),
                                        energy_dissipated=np.nan,
                                        peak_power_true=np.nan,
                                        peak_power_cvx=np.nan,
                                        status=sol.status, q_m=None))
            continue
        bd = energy_breakdown(traj, load, p, ops, sol.q_m)
        points.append(TradeoffPoint(
            theta=float(theta), energy_dissipated=bd.dissipated,
            peak_power_true=peak_power_true(traj, load, p, ops, sol.q_m),
            peak_power_cvx=peak_power_cvx(traj, load, p, ops, sol.q_m),
            status=sol.status, q_m=sol.q_m))
    return points


def knee_index(points):
    """Index of maximum discrete curvature on the normalized frontier."""
    ok = [pt for pt in points if pt.q_m is not None]
    if len(ok) < 3:
        return 0
    e = np.array([pt.energy_dissipated for pt in ok])
    w = np.array([pt.peak_power_true for pt in ok])
    order = np.argsort(e)
    e, w = e[order], w[order]
    es = (e - e.min()) / max(np.ptp(e), 1e-300)
    ws = (w - w.min()) / max(np.ptp(w), 1e-300)
    curv = np.zeros(len(es))
    for i in range(1, len(es) - 1):
        a = np.array([es[i] - es[i - 1], ws[i] - ws[i - 1]])
        b = np.array([es[i + 1] - es[i], ws[i + 1] - ws[i]])
        cross = abs(a[0] * b[1] - a[1] * b[0])
        denom = np.linalg.norm(a) * np.linalg.norm(b) * \
            np.linalg.norm(a + b)
        curv[i] = 2.0 * cross / denom if denom > 0 else 0.0
    i_sorted = int(np.argmax(curv))
    knee = ok[order[i_sorted]]
    return next(i for i, pt in enumerate(points) if pt is knee)


# ---------------------------------------------------------------------------
# Report writers (deterministic: no timestamps, stable key order)

def write_report(path, payload: dict):
    """JSON report with sorted keys; numpy scalars/arrays are converted."""

    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, EnergyBreakdown):
            d = asdict(o)
            d["dissipated"] = o.dissipated
            d["total"] = o.total
            return d
        raise TypeError(f"unserializable: {type(o)!r}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=conv)
        fh.write("\n")


def write_curve_csv(path, points):
    """Frontier points as CSV (theta, energy, peak power, surrogate peak)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "energy_dissipated", "peak_power_true",
                         "peak_power_cvx", "status"])
        for pt in points:
            writer.writerow([repr(pt.theta), repr(pt.energy_dissipated),
                             repr(pt.peak_power_true),
                             repr(pt.peak_power_cvx), pt.status])


def write_curve_svg(path, points, width=640, height=480, margin=60):
    """Minimal standalone SVG of the energy / peak-power frontier."""
    ok = [pt for pt in points if pt.q_m is not None]
    if len(ok) < 2:
        raise ValueError("need at least two solved points to plot")
    e = np.array([pt.energy_dissipated for pt in ok])
    w = np.array([pt.peak_power_true for pt in ok])
    order = np.argsort(e)
    e, w = e[order], w[order]

    def sx(v):
        return margin + (v - e.min()) / max(np.ptp(e), 1e-300) * \
            (width - 2 * margin)

    def sy(v):
        return height - margin - (v - w.min()) / max(np.ptp(w), 1e-300) * \
            (height - 2 * margin)

    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(e, w))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polyline points="{pts}" fill="none" stroke="black" '
        'stroke-width="1.5"/>',
    ]
    for a, b in zip(e, w):
        lines.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" '
                     'fill="black"/>')
    lines.append(f'<text x="{width / 2:.0f}" y="{height - 15}" '
                 'text-anchor="middle" font-size="13">dissipated energy (J)'
                 '</text>')
    lines.append(f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 18 {height / 2:.0f})">'
                 'peak power (W)</text>')
    lines.append('</svg>')
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
