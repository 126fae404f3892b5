"""Command-line entry point: reproducible design runs from config files.

Commands
--------
generate-cubic : integrate the cubic-spring free oscillation, write the
                 trajectory CSV plus a period report
design         : solve one design instance at a fixed theta, write the
                 spring profile, motor trace, and a solution report
sweep          : solve across a theta grid (concurrently), write the
                 frontier CSV/JSON and an optional SVG plot
baseline       : evaluate the rigid drive and the best linear spring
validate       : run the numerical self-checks (planted instances,
                 gradient checks, operator convergence order)

Configuration is a flat ``key = value`` text file (``#`` comments); any key
can be overridden on the command line with ``--set key=value``.  Every
output file embeds a hash of the resolved configuration, and outputs are
byte-identical across repeated runs of the same configuration.

Exit codes: 0 success, 2 problem infeasible, 3 solver or validation
failure, 4 invalid input.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import math
import os
import sys

import numpy as np
import scipy.sparse as sp

from .trajectory import (Trajectory, CubicSpringSystem, TrajectoryError,
                         generate_cubic_oscillation, load_trajectory,
                         save_trajectory, synthetic_gait_task,
                         concatenate_tasks)
from .discretization import (MotorParams, LoadModel, ILM85X26, RPM,
                             build_operators, elastic_torque, elongation)
from .problem import (assemble_energy_cost, assemble_monotonicity,
                      assemble_actuator_limits, assemble_power_terms,
                      build_problem, ConstraintSystem)
from .solver import SolverConfig, solve, solve_canonical
from .spring import SpringProfileError, build_profile, export_profile
from .analysis import (energy_breakdown, peak_power_true, peak_power_cvx,
                       limit_violation, rigid_baseline, linear_spring_baseline,
                       theta_grid, knee_index, TradeoffPoint, write_report,
                       write_curve_csv, write_curve_svg)
from . import oracle

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_INPUT = 4

MOTOR_PRESETS = {"ilm85x26": ILM85X26}


class ConfigError(ValueError):
    """Invalid configuration key, value, or file."""


@dataclasses.dataclass
class RunConfig:
    """Resolved run configuration; every field has a textual form so the
    whole config round-trips through ``key = value`` files."""

    motor: str = "ilm85x26"     # preset name
    eta: float = 1.0
    tau_max: float | None = None      # None -> preset value; 0 disables
    dq_max: float | None = None
    delta_max: float | None = None

    task: str = "cubic"         # "cubic", "gait", or a trajectory CSV path
    repeats: int = 1
    n: int = 501

    # builtin cubic task parameters
    alpha: float = 40.0
    I_l: float = 0.125
    b_l: float = 0.0
    q0: float = math.pi / 2.0
    load_mode: str = ""         # "" -> inferred from the task

    cost: str = "total"         # viscous | joule | total
    theta: float = 1.0
    gamma1: float = 0.02
    gamma2: float = 300.0

    profile_merge: float = 1e-4   # knot-merge tolerance / elongation range

    points: int = 30            # sweep grid size
    workers: int = 0            # 0 -> serial sweep
    metric: str = "energy"      # baseline selection metric

    instances: int = 20         # validate: planted instance count
    tol: float = 1e-6           # validate: objective-gap tolerance

    output_dir: str = "out"
    seed: int = 0
    svg: bool = False

    def resolved_motor(self) -> MotorParams:
        try:
            base = MOTOR_PRESETS[self.motor.lower()]
        except KeyError:
            raise ConfigError("unknown motor preset %r (have: %s)"
                              % (self.motor, ", ".join(sorted(MOTOR_PRESETS))))
        kw = {"eta": self.eta}
        for name in ("tau_max", "dq_max"):
            value = getattr(self, name)
            if value is not None:
                kw[name] = None if value == 0 else value
        return dataclasses.replace(base, **kw)

    def resolved_delta_max(self):
        if self.delta_max is None or self.delta_max == 0:
            return None
        return self.delta_max

    def resolved_load(self) -> LoadModel:
        mode = self.load_mode
        if not mode:
            mode = "direct-torque" if self.task == "gait" else "inertial-viscous"
        return LoadModel(mode=mode, I_l=self.I_l, b_l=self.b_l)


_BOOL_FIELDS = {"svg"}
_INT_FIELDS = {"repeats", "n", "points", "workers", "instances", "seed"}
_OPTIONAL_FIELDS = {"tau_max", "dq_max", "delta_max"}
_STR_FIELDS = {"motor", "task", "load_mode", "cost", "metric", "output_dir"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_FIELDS:
        return raw
    if key in _BOOL_FIELDS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError("boolean key %r got %r" % (key, raw))
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _OPTIONAL_FIELDS and raw.lower() in ("none", "off"):
            return 0.0
        return float(raw)
    except ValueError:
        raise ConfigError("unparseable value %r for key %r" % (raw, key))


def load_config(path=None, overrides=()) -> RunConfig:
    """Build a RunConfig from an optional config file plus key=value
    override strings (later entries win)."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    values = {}

    def ingest(key, raw, where):
        key = key.strip()
        if key not in fields:
            raise ConfigError("unknown config key %r in %s" % (key, where))
        values[key] = _parse_value(key, raw)

    if path is not None:
        try:
            with open(path) as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError("line %d of %s is not key = value"
                                          % (lineno, path))
                    key, raw = line.split("=", 1)
                    ingest(key, raw, path)
        except OSError as exc:
            raise ConfigError("cannot read config file: %s" % exc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override %r is not key=value" % item)
        key, raw = item.split("=", 1)
        ingest(key, raw, "command line")
    return RunConfig(**values)


def config_hash(cfg: RunConfig) -> str:
    payload = dataclasses.asdict(cfg)
    # execution details that cannot change the numbers are not hashed
    payload.pop("output_dir")
    payload.pop("workers")
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Task construction

def build_task(cfg: RunConfig) -> Trajectory:
    if cfg.task == "cubic":
        system = CubicSpringSystem(alpha=cfg.alpha, I_l=cfg.I_l, q0=cfg.q0)
        traj = generate_cubic_oscillation(system, n=cfg.n)
    elif cfg.task == "gait":
        traj = synthetic_gait_task(n=cfg.n)
    else:
        traj = load_trajectory(cfg.task, resample_to=cfg.n)
    if cfg.repeats > 1:
        traj = concatenate_tasks([(traj, cfg.repeats)])
    return traj


def build_instance(cfg: RunConfig, traj: Trajectory, theta: float):
    p = cfg.resolved_motor()
    load = cfg.resolved_load()
    ops = build_operators(traj.n, traj.dt)
    tau_ela = elastic_torque(traj, load)
    dmax = cfg.resolved_delta_max()
    A1, b1, A2, b2, eps = assemble_monotonicity(tau_ela, traj.q_l, p.r)
    if p.tau_max is None and p.dq_max is None and dmax is None:
        G_lim, h_lim = sp.csr_matrix((0, traj.n)), np.zeros(0)
    else:
        G_lim, h_lim = assemble_actuator_limits(traj, load, p, ops,
                                                delta_max=dmax)
    con = ConstraintSystem(A1=A1, b1=b1, A2=A2, b2=b2, eps_strict=eps,
                           G_lim=G_lim, h_lim=h_lim, q_l=traj.q_l,
                           tau_ela=tau_ela, r=p.r, delta_max=dmax)
    inst = build_problem(assemble_energy_cost(traj, load, p, ops, terms=cfg.cost),
                         assemble_power_terms(tau_ela, p, ops), con,
                         theta=theta, gamma1=cfg.gamma1, gamma2=cfg.gamma2)
    return inst, p, load, ops, tau_ela


def _status_exit(status: str) -> int:
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


# ---------------------------------------------------------------------------
# Commands

def cmd_generate_cubic(cfg: RunConfig) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    system = CubicSpringSystem(alpha=cfg.alpha, I_l=cfg.I_l, q0=cfg.q0)
    traj = generate_cubic_oscillation(system, n=cfg.n)
    save_trajectory(traj, os.path.join(out, "trajectory.csv"),
                    comments=["config %s" % chash])
    write_report(os.path.join(out, "period.json"), {
        "config_hash": chash,
        "period": traj.period,
        "n": traj.n,
        "dt": traj.dt,
        "closure_residual": traj.closure_residual(),
    })
    print("period %.9f s written to %s" % (traj.period, out))
    return EXIT_OK


def cmd_design(cfg: RunConfig) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    traj = build_task(cfg)
    inst, p, load, ops, tau_ela = build_instance(cfg, traj, cfg.theta)
    sol = solve(inst, SolverConfig())

    report = {
        "config_hash": chash,
        "status": sol.status,
        "iterations": sol.iterations,
        "objective": sol.objective,
        "kkt": sol.kkt,
    }
    if sol.q_m is not None:
        delta = elongation(sol.q_m, traj.q_l, p.r)
        # loading/unloading passes agree only to solver tolerance; merge
        # knots relative to the elongation range so the branches collapse
        merge_tol = cfg.profile_merge * max(float(np.ptp(delta)), 1e-12)
        try:
            profile = build_profile(delta, tau_ela,
                                    label=traj.label or cfg.task,
                                    merge_tol=merge_tol)
        except SpringProfileError as exc:
            # the motor trace is optimal but its (delta, tau) samples do not
            # collapse to one single-valued curve; report instead of failing
            report["profile_error"] = str(exc)
        else:
            export_profile(profile, os.path.join(out, "profile.csv"),
                           comment_lines=["config %s" % chash])
        with open(os.path.join(out, "qm_trace.csv"), "w") as fh:
            fh.write("# config %s\ntime,q_m\n" % chash)
            for i, q in enumerate(sol.q_m):
                fh.write("%s,%s\n" % (repr(i * traj.dt), repr(float(q))))
        report["energy"] = energy_breakdown(traj, load, p, ops, sol.q_m)
        report["peak_power_true"] = peak_power_true(traj, load, p, ops, sol.q_m)
        report["peak_power_cvx"] = peak_power_cvx(traj, load, p, ops, sol.q_m)
        report["limit_violation"] = limit_violation(
            traj, load, p, ops, sol.q_m, cfg.resolved_delta_max())
    write_report(os.path.join(out, "solution.json"), report)
    print("design %s: %s" % (cfg.task, sol.status))
    return _status_exit(sol.status)


def _sweep_point(cfg: RunConfig, theta: float) -> TradeoffPoint:
    traj = build_task(cfg)
    inst, p, load, ops, _ = build_instance(cfg, traj, theta)
    sol = solve(inst, SolverConfig())
    if sol.q_m is None:
        return TradeoffPoint(theta=theta, energy_dissipated=np.nan,
                             peak_power_true=np.nan, peak_power_cvx=np.nan,
                             status=sol.status, q_m=None)
    return TradeoffPoint(
        theta=theta,
        energy_dissipated=energy_breakdown(traj, load, p, ops, sol.q_m).dissipated,
        peak_power_true=peak_power_true(traj, load, p, ops, sol.q_m),
        peak_power_cvx=peak_power_cvx(traj, load, p, ops, sol.q_m),
        status=sol.status, q_m=sol.q_m)


def cmd_sweep(cfg: RunConfig) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    thetas = [float(t) for t in theta_grid(cfg.points)]
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(cfg.workers) as pool:
            points = list(pool.map(_sweep_point, [cfg] * len(thetas), thetas))
    else:
        points = [_sweep_point(cfg, t) for t in thetas]

    write_curve_csv(os.path.join(out, "curve.csv"), points)
    solved = [pt for pt in points if pt.q_m is not None]
    report = {
        "config_hash": chash,
        "points": [{
            "theta": pt.theta,
            "energy_dissipated": pt.energy_dissipated,
            "peak_power_true": pt.peak_power_true,
            "peak_power_cvx": pt.peak_power_cvx,
            "status": pt.status,
            "endpoint": pt.theta in (0.0, 1.0),
        } for pt in points],
        "n_solved": len(solved),
        "knee_theta": points[knee_index(points)].theta if len(solved) >= 3
        else None,
    }
    write_report(os.path.join(out, "report.json"), report)
    if cfg.svg and len(solved) >= 2:
        write_curve_svg(os.path.join(out, "curve.svg"), points)
    print("sweep: %d/%d points solved" % (len(solved), len(points)))
    if not solved:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_baseline(cfg: RunConfig) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    traj = build_task(cfg)
    p = cfg.resolved_motor()
    load = cfg.resolved_load()
    ops = build_operators(traj.n, traj.dt)
    dmax = cfg.resolved_delta_max()
    rigid = rigid_baseline(traj, load, p, ops, delta_max=dmax)
    linear = linear_spring_baseline(traj, load, p, ops, metric=cfg.metric,
                                    delta_max=dmax)
    # independent quadrature cross-check of the rigid Joule number
    from .discretization import motor_torque
    audit = oracle.quadrature_energy(
        rigid.q_m, motor_torque(rigid.q_m, elastic_torque(traj, load), p, ops),
        traj.dt, p.k_m)

    def entry(b):
        return {
            "kind": b.kind,
            "stiffness": b.stiffness,
            "energy": b.energy,
            "peak_power": b.peak_power,
            "limit_violation": b.limit_violation,
            "feasible": bool(b.feasible),
        }

    write_report(os.path.join(out, "baseline.json"), {
        "config_hash": chash,
        "rigid": entry(rigid),
        "linear": entry(linear),
        "rigid_joule_quadrature": audit["joule"],
    })
    print("rigid %.4f J (feasible=%s), linear k=%.4g %.4f J (feasible=%s)"
          % (rigid.energy.dissipated, rigid.feasible, linear.stiffness,
             linear.energy.dissipated, linear.feasible))
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    chash = config_hash(cfg)
    checks = {}

    # planted KKT instances
    rng = np.random.default_rng(cfg.seed)
    worst_gap = 0.0
    n_pass = 0
    for k in range(cfg.instances):
        n = int(rng.integers(6, 51))
        planted = oracle.plant_instance(n, seed=cfg.seed + 7919 * k,
                                        with_quads=k % 3 == 1,
                                        difference_rows=k % 3 == 2)
        res = solve_canonical(planted.instance, SolverConfig())
        gap = abs(res.objective - planted.objective_star) \
            / (1.0 + abs(planted.objective_star))
        worst_gap = max(worst_gap, gap)
        if res.status == "optimal" and gap <= cfg.tol:
            n_pass += 1
    checks["planted"] = {"passed": n_pass == cfg.instances,
                         "n_pass": n_pass, "n_total": cfg.instances,
                         "worst_gap": worst_gap}

    # gradient check on an assembled energy cost
    traj = synthetic_gait_task(n=64)
    p = ILM85X26
    load = LoadModel(mode="direct-torque")
    ops = build_operators(traj.n, traj.dt)
    cost = assemble_energy_cost(traj, load, p, ops)
    q = p.r * traj.q_l
    grad_err = oracle.finite_diff_gradient_check(cost.value, cost.gradient, q)
    checks["gradient"] = {"passed": bool(grad_err <= max(cfg.tol, 1e-5)),
                          "max_rel_error": grad_err}

    # convergence order of the periodic derivative operator
    errors = []
    sizes = [64, 128, 256, 512, 1024]
    for n in sizes:
        t = 2.0 * np.pi * np.arange(n) / n
        opsn = build_operators(n, 2.0 * np.pi / n)
        errors.append(float(np.max(np.abs(opsn.D @ np.sin(t) - np.cos(t)))))
    slope = float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])
    checks["operator_order"] = {"passed": bool(abs(slope + 2.0) <= 0.2),
                                "slope": -slope, "errors": errors}

    all_pass = all(c["passed"] for c in checks.values())
    write_report(os.path.join(out, "validation.json"), {
        "config_hash": chash, "checks": checks, "passed": all_pass,
    })
    for name, c in sorted(checks.items()):
        print("%-15s %s" % (name, "pass" if c["passed"] else "FAIL"))
    return EXIT_OK if all_pass else EXIT_SOLVER


COMMANDS = {
    "generate-cubic": cmd_generate_cubic,
    "design": cmd_design,
    "sweep": cmd_sweep,
    "baseline": cmd_baseline,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seaspring",
        description="Design monotone series-elastic spring profiles by "
                    "convex optimization over periodic load trajectories.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None,
                        help="key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest="field_" + f.name, default=None,
                            metavar="V", help="override config key %r" % f.name)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    for f in dataclasses.fields(RunConfig):
        value = getattr(args, "field_" + f.name)
        if value is not None:
            overrides.append("%s=%s" % (f.name, value))
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TrajectoryError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
