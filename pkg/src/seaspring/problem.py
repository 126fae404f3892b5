"""Assembly of the convex design program over the motor position trace.

The decision variable is the motor position vector ``q_m`` (plus two epigraph
slacks when peak terms are in play).  Energy is an exact convex quadratic;
peak power enters through its convex per-sample surrogate (inertial torque
dropped), one rank-1 quadratic constraint per sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretization import DiffOperators, MotorParams, build_operators
from .solver import CanonicalQCQP, QuadConstraint

__all__ = [
    "EnergyCost",
    "PowerTerms",
    "ConstraintSystem",
    "ProblemInstance",
    "assemble_energy_cost",
    "assemble_monotonicity",
    "assemble_actuator_limits",
    "assemble_power_terms",
    "build_problem",
    "dump_problem",
    "load_problem",
]

COST_TERMS = ("total", "joule", "viscous")


@dataclass
class EnergyCost:
    """Quadratic energy model E(q) = q'Q_e q + A_e q + c_e over one period.

    ``F`` and ``c`` give the scaled motor torque tau_m / k_m = F q + c, so
    the Joule part is ||F q + c||^2 dt.
    """

    Q_e: sp.csr_matrix
    A_e: np.ndarray
    c_e: float
    F: sp.csr_matrix
    c: np.ndarray
    dt: float
    terms: str = "total"

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return float(q @ (self.Q_e @ q) + self.A_e @ q + self.c_e)

    def gradient(self, q):
        return 2.0 * (self.Q_e @ q) + self.A_e


def assemble_energy_cost(traj, load, p: MotorParams, ops: DiffOperators,
                         terms: str = "total") -> EnergyCost:
    """Build the energy quadratic for the requested loss terms.

    ``terms``: "total" (Joule + viscous + load exchange), "joule", or
    "viscous".  The load-exchange term is a constant, so restricting terms
    only drops pieces of Q_e / A_e / c_e.
    """
    if terms not in COST_TERMS:
        raise ValueError("terms must be one of %s" % (COST_TERMS,))
    from .discretization import elastic_torque

    tau_ela = elastic_torque(traj, load)
    dt = ops.dt
    F = ((p.I_m * ops.D2 + p.b_m * ops.D) / p.k_m).tocsr()
    c = -tau_ela / (p.eta * p.k_m * p.r)
    FtF = (F.T @ F).tocsr()
    DtD = (ops.D.T @ ops.D).tocsr()
    if terms == "viscous":
        Q = (p.b_m * DtD) * dt
        A = np.zeros(ops.n)
        c_e = 0.0
    elif terms == "joule":
        Q = FtF * dt
        A = 2.0 * (F.T @ c) * dt
        c_e = float(c @ c) * dt
    else:
        Q = (FtF + p.b_m * DtD) * dt
        A = 2.0 * (F.T @ c) * dt
        c_e = (float(c @ c) - float(tau_ela @ traj.dq_l) / p.eta) * dt
    return EnergyCost(Q_e=Q.tocsr(), A_e=A, c_e=c_e, F=F, c=c, dt=dt, terms=terms)


@dataclass
class PowerTerms:
    """Per-sample mechanical power as quadratic forms of the motor trace.

    Row i of the exact power is q'G_i q + H_i q with
    G_i = I_m D2_i' D_i + b_m D_i' D_i; the convex surrogate keeps only the
    rank-1 PSD part b_m D_i' D_i, stored through its factor sqrt(b_m) D_i.
    """

    ops: DiffOperators
    tau_ela: np.ndarray
    I_m: float
    b_m: float
    eta: float
    r: float
    H: sp.csr_matrix   # rows H_i = -tau_ela_i * D_i / (eta r)

    @property
    def n(self):
        return self.ops.n

    def power_exact(self, q):
        q = np.asarray(q, dtype=float)
        Dq = self.ops.D @ q
        return (self.I_m * (self.ops.D2 @ q) + self.b_m * Dq) * Dq + self.H @ q

    def power_cvx(self, q):
        q = np.asarray(q, dtype=float)
        Dq = self.ops.D @ q
        return self.b_m * Dq * Dq + self.H @ q

    def G_dense(self, i):
        """Dense G_i, for verification at small n."""
        d = self.ops.D[i].toarray().ravel()
        d2 = self.ops.D2[i].toarray().ravel()
        return self.I_m * np.outer(d2, d) + self.b_m * np.outer(d, d)

    def G_cvx_factor(self, i):
        """Factor g of the rank-1 surrogate Hessian G_cvx_i = g g'."""
        return np.sqrt(self.b_m) * self.ops.D[i].toarray().ravel()


def assemble_power_terms(tau_ela, p: MotorParams, ops: DiffOperators) -> PowerTerms:
    tau_ela = np.asarray(tau_ela, dtype=float)
    if tau_ela.shape != (ops.n,):
        raise ValueError("dimension mismatch")
    H = (sp.diags(-tau_ela / (p.eta * p.r)) @ ops.D).tocsr()
    return PowerTerms(ops=ops, tau_ela=tau_ela, I_m=p.I_m, b_m=p.b_m,
                      eta=p.eta, r=p.r, H=H)


@dataclass
class ConstraintSystem:
    """Monotonicity rows, actuator-limit rows, and problem context.

    ``A1 q <= b1 - eps_strict`` keeps the torque-elongation map strictly
    increasing; ``A2 q = b2`` handles flat torque segments.  ``G_lim q <=
    h_lim`` collects the bilateral torque/speed/elongation limits.
    """

    A1: sp.csr_matrix
    b1: np.ndarray
    A2: sp.csr_matrix
    b2: np.ndarray
    eps_strict: float
    G_lim: sp.csr_matrix
    h_lim: np.ndarray
    q_l: np.ndarray
    tau_ela: np.ndarray
    r: float
    delta_max: float | None = None

    @property
    def n(self):
        return len(self.q_l)


def assemble_monotonicity(tau_ela, q_l, r, eps_strict=None, zero_tol=0.0):
    """Sign-split difference rows enforcing d(tau)/d(delta) > 0.

    Row i couples samples i and i-1 (i = 0 wraps to n-1).  Returns
    (A1, b1, A2, b2, eps_strict)."""
    tau_ela = np.asarray(tau_ela, dtype=float)
    q_l = np.asarray(q_l, dtype=float)
    n = len(tau_ela)
    dtau = tau_ela - np.roll(tau_ela, 1)
    dql = q_l - np.roll(q_l, 1)
    if eps_strict is None:
        eps_strict = 1e-8 * r * float(np.abs(dql).max(initial=0.0))

    sign = np.where(dtau > zero_tol, 1.0, np.where(dtau < -zero_tol, -1.0, 0.0))
    rows1 = np.nonzero(sign != 0.0)[0]
    rows2 = np.nonzero(sign == 0.0)[0]

    def _difference_rows(rows, signs):
        m = len(rows)
        data = np.concatenate([signs / r, -signs / r])
        ri = np.concatenate([np.arange(m), np.arange(m)])
        ci = np.concatenate([rows, (rows - 1) % n])
        return sp.csr_matrix((data, (ri, ci)), shape=(m, n))

    A1 = _difference_rows(rows1, sign[rows1])
    b1 = sign[rows1] * dql[rows1]
    A2 = _difference_rows(rows2, np.ones(len(rows2)))
    b2 = dql[rows2]
    return A1, b1, A2, b2, float(eps_strict)


def assemble_actuator_limits(traj, load, p: MotorParams, ops: DiffOperators,
                             delta_max=None):
    """Bilateral affine limit rows over q_m: |tau_m| <= tau_max,
    |D q_m| <= dq_max, |delta| <= delta_max (each block only when the limit
    is given).  Returns (G_lim, h_lim)."""
    from .discretization import elastic_torque

    n = ops.n
    tau_ela = elastic_torque(traj, load)
    blocks = []
    rhs = []
    if p.tau_max is not None:
        if not p.tau_max > 0:
            raise ValueError("tau_max must be positive")
        M = (p.I_m * ops.D2 + p.b_m * ops.D).tocsr()
        bias = tau_ela / (p.eta * p.r)
        blocks += [M, -M]
        rhs += [p.tau_max + bias, p.tau_max - bias]
    if p.dq_max is not None:
        if not p.dq_max > 0:
            raise ValueError("dq_max must be positive")
        blocks += [ops.D, -ops.D]
        rhs += [np.full(n, p.dq_max), np.full(n, p.dq_max)]
    if delta_max is not None:
        if not delta_max > 0:
            raise ValueError("delta_max must be positive")
        eye_r = sp.identity(n, format="csr") / p.r
        blocks += [-eye_r, eye_r]
        rhs += [delta_max - traj.q_l, delta_max + traj.q_l]
    if blocks:
        return sp.vstack(blocks, format="csr"), np.concatenate(rhs)
    return sp.csr_matrix((0, n)), np.zeros(0)


@dataclass
class ProblemInstance:
    """Assembled multiobjective program in epigraph form.

    minimize  theta*gamma2*E(q) + (1-theta)*(s + gamma1*a)
    s.t.      power_cvx_i(q) <= s,  |(D2 q)_i| <= a        (epigraph active)
              A1 q <= b1 - eps,  A2 q = b2,  G_lim q <= h_lim
    """

    energy: EnergyCost
    power: PowerTerms
    constraints: ConstraintSystem
    theta: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("gamma weights must be nonnegative")

    @property
    def n(self):
        return self.constraints.n

    @property
    def has_epigraph(self):
        return self.theta < 1.0

    # -- objective pieces -------------------------------------------------
    def energy_term(self, q):
        return self.energy.value(q)

    def power_term(self, q):
        """max power_cvx + gamma1 * peak acceleration at a motor trace."""
        q = np.asarray(q, dtype=float)
        return float(np.max(self.power.power_cvx(q))
                     + self.gamma1 * np.max(np.abs(self.power.ops.D2 @ q)))

    def scalarized(self, q):
        val = self.theta * self.gamma2 * self.energy_term(q)
        if self.has_epigraph:
            val += (1.0 - self.theta) * self.power_term(q)
        return val

    # -- lowering ---------------------------------------------------------
    @property
    def gauge_weight(self):
        """Price on the mean-elongation gauge mode.

        Constant shifts of q_m are invisible to the objective and every
        difference/derivative constraint, so the scalarized program is
        degenerate along 1.  An auxiliary variable z = mean(q)/1 - r*mean(q_l)
        carries a quadratic price, pinning the profile at zero mean
        elongation without touching any physical mode.
        """
        diag = self.energy.Q_e.diagonal()
        return 1e-3 * max(1.0, 2.0 * self.gamma2 * float(diag.mean()))

    def to_canonical(self) -> CanonicalQCQP:
        n = self.n
        con = self.constraints
        ops = self.power.ops
        extra = 2 if self.has_epigraph else 0
        nx = n + extra + 1          # trailing coordinate is the gauge var z
        iz = nx - 1

        P = sp.lil_matrix((nx, nx))
        P[:n, :n] = 2.0 * self.theta * self.gamma2 * self.energy.Q_e
        P[iz, iz] = 2.0 * self.gauge_weight
        lin = np.zeros(nx)
        lin[:n] = self.theta * self.gamma2 * self.energy.A_e
        const = self.theta * self.gamma2 * self.energy.c_e

        def _pad(mat):
            return sp.hstack([mat, sp.csr_matrix((mat.shape[0], nx - n))],
                             format="csr")

        G_rows = [_pad(con.A1), _pad(con.G_lim)]
        h_parts = [con.b1 - con.eps_strict, con.h_lim]
        quads = ()
        if self.has_epigraph:
            lin[n] = 1.0 - self.theta
            lin[n + 1] = (1.0 - self.theta) * self.gamma1
            # peak acceleration: +-(D2 q)_i - a <= 0
            col_a = sp.csr_matrix((np.full(n, -1.0),
                                   (np.arange(n), np.zeros(n, dtype=int))),
                                  shape=(n, 1))
            zeros_z = sp.csr_matrix((n, 1))
            G_rows.append(sp.hstack([ops.D2, sp.csr_matrix((n, 1)), col_a,
                                     zeros_z], format="csr"))
            G_rows.append(sp.hstack([-ops.D2, sp.csr_matrix((n, 1)), col_a,
                                     zeros_z], format="csr"))
            h_parts += [np.zeros(n), np.zeros(n)]
            # convex power epigraph: b_m (D_i q)^2 + H_i q - s <= 0
            sqrt_bm = np.sqrt(self.power.b_m)
            quads = []
            Hcsr = self.power.H
            for i in range(n):
                Fi = _pad(sqrt_bm * ops.D[i])
                w = np.zeros(nx)
                row = Hcsr[i]
                w[row.indices] = row.data
                w[n] = -1.0
                quads.append(QuadConstraint(F=Fi, w=w, d=0.0))
            quads = tuple(quads)

        # gauge row: mean(q) - z = r * mean(q_l)
        gauge = sp.lil_matrix((1, nx))
        gauge[0, :n] = 1.0 / n
        gauge[0, iz] = -1.0
        A_eq = sp.vstack([_pad(con.A2), gauge.tocsr()], format="csr")
        b_eq = np.concatenate([con.b2, [con.r * float(con.q_l.mean())]])

        return CanonicalQCQP(
            P=P.tocsr(), lin=lin, const=const,
            G=sp.vstack(G_rows, format="csr"), h=np.concatenate(h_parts),
            A=A_eq, b=b_eq,
            quads=quads,
        )

    def feasible_seed(self):
        """Stiff-linear-spring interior point: q = r q_l - r tau_ela / k0
        with k0 large enough that all monotonicity rows hold with margin.
        Limit rows may still be violated; the solver's phase-I handles that.
        """
        con = self.constraints
        dtau = con.tau_ela - np.roll(con.tau_ela, 1)
        nz = np.abs(dtau[np.abs(dtau) > 0.0])
        if len(nz) == 0:
            q = con.r * con.q_l
        else:
            eps = max(con.eps_strict, 1e-14 * float(np.abs(dtau).max()))
            # Stiff enough that elongations stay small (bounded seed), soft
            # enough that most monotonicity rows keep a positive margin; rows
            # with near-zero torque increments may end up marginally violated,
            # which phase-I repairs cheaply from this nearby point.
            k_floor = float(np.abs(con.tau_ela).max(initial=0.0)) \
                / (0.1 * (1.0 + float(np.abs(con.q_l).max(initial=0.0))))
            k0 = max(0.25 * float(nz.min()) / eps, k_floor, 1e-12)
            q = con.r * (con.q_l - con.tau_ela / k0)
        z0 = float(q.mean()) - con.r * float(con.q_l.mean())
        if not self.has_epigraph:
            return np.concatenate([q, [z0]])
        ops = self.power.ops
        s0 = float(np.max(self.power.power_cvx(q)))
        a0 = float(np.max(np.abs(ops.D2 @ q)))
        pad = lambda v: v + 0.1 * abs(v) + 1.0
        return np.concatenate([q, [pad(s0), pad(a0), z0]])


def build_problem(costs: EnergyCost, terms: PowerTerms,
                  constraints: ConstraintSystem, theta: float,
                  gamma1: float = 0.02, gamma2: float = 300.0) -> ProblemInstance:
    """Bundle assembled pieces into the scalarized epigraph program."""
    return ProblemInstance(energy=costs, power=terms, constraints=constraints,
                           theta=theta, gamma1=gamma1, gamma2=gamma2)


# ---------------------------------------------------------------------------
# Debug dump (JSON, lossless round-trip)

def _sp_triplets(mat):
    coo = sp.coo_matrix(mat)
    return {"shape": list(coo.shape), "row": coo.row.tolist(),
            "col": coo.col.tolist(), "data": coo.data.tolist()}


def _sp_from_triplets(d):
    return sp.csr_matrix((d["data"], (d["row"], d["col"])),
                         shape=tuple(d["shape"]))


def dump_problem(inst: ProblemInstance, path):
    con = inst.constraints
    doc = {
        "n": inst.n,
        "dt": inst.energy.dt,
        "theta": inst.theta, "gamma1": inst.gamma1, "gamma2": inst.gamma2,
        "terms": inst.energy.terms,
        "eps_strict": con.eps_strict,
        "delta_max": con.delta_max,
        "r": con.r, "eta": inst.power.eta,
        "I_m": inst.power.I_m, "b_m": inst.power.b_m,
        "Q_e": _sp_triplets(inst.energy.Q_e),
        "A_e": inst.energy.A_e.tolist(),
        "c_e": inst.energy.c_e,
        "F": _sp_triplets(inst.energy.F),
        "c": inst.energy.c.tolist(),
        "A1": _sp_triplets(con.A1), "b1": con.b1.tolist(),
        "A2": _sp_triplets(con.A2), "b2": con.b2.tolist(),
        "G_lim": _sp_triplets(con.G_lim), "h_lim": con.h_lim.tolist(),
        "q_l": con.q_l.tolist(), "tau_ela": con.tau_ela.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_problem(path) -> ProblemInstance:
    with open(path) as fh:
        doc = json.load(fh)
    n = doc["n"]
    ops = build_operators(n, doc["dt"])
    energy = EnergyCost(
        Q_e=_sp_from_triplets(doc["Q_e"]), A_e=np.array(doc["A_e"]),
        c_e=doc["c_e"], F=_sp_from_triplets(doc["F"]), c=np.array(doc["c"]),
        dt=doc["dt"], terms=doc["terms"],
    )
    tau_ela = np.array(doc["tau_ela"])
    H = (sp.diags(-tau_ela / (doc["eta"] * doc["r"])) @ ops.D).tocsr()
    power = PowerTerms(ops=ops, tau_ela=tau_ela, I_m=doc["I_m"],
                       b_m=doc["b_m"], eta=doc["eta"], r=doc["r"], H=H)
    con = ConstraintSystem(
        A1=_sp_from_triplets(doc["A1"]), b1=np.array(doc["b1"]),
        A2=_sp_from_triplets(doc["A2"]), b2=np.array(doc["b2"]),
        eps_strict=doc["eps_strict"],
        G_lim=_sp_from_triplets(doc["G_lim"]), h_lim=np.array(doc["h_lim"]),
        q_l=np.array(doc["q_l"]), tau_ela=tau_ela, r=doc["r"],
        delta_max=doc["delta_max"],
    )
    return ProblemInstance(energy=energy, power=power, constraints=con,
                           theta=doc["theta"], gamma1=doc["gamma1"],
                           gamma2=doc["gamma2"])
