"""Design toolkit for nonlinear series-elastic-actuator springs.

Given a periodic load trajectory and motor/transmission parameters, the
toolkit assembles a convex program over the motor position trace, solves it
with a built-in interior-point method, and converts the optimum into a
strictly monotone torque-elongation spring profile.  Energy, peak power,
rigid and linear-spring baselines, and multiobjective trade-off sweeps are
provided for analysis.
"""

from .trajectory import (
    Trajectory,
    CubicSpringSystem,
    load_trajectory,
    save_trajectory,
    generate_cubic_oscillation,
    resample_periodic,
    concatenate_tasks,
    synthetic_gait_task,
)
from .discretization import (
    DiffOperators,
    MotorParams,
    LoadModel,
    ILM85X26,
    build_operators,
    elastic_torque,
    motor_torque,
    elongation,
    power_series,
)
from .problem import (
    EnergyCost,
    PowerTerms,
    ConstraintSystem,
    ProblemInstance,
    assemble_energy_cost,
    assemble_monotonicity,
    assemble_actuator_limits,
    assemble_power_terms,
    build_problem,
)
from .solver import SolverConfig, Solution, solve
from .spring import SpringProfile, build_profile, export_profile, import_profile
from .analysis import (
    EnergyBreakdown,
    TradeoffPoint,
    energy_breakdown,
    peak_power_true,
    peak_power_cvx,
    rigid_baseline,
    linear_spring_baseline,
    tradeoff_sweep,
)

__version__ = "0.1.0"
