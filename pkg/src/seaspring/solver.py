"""Interior-point solver for convex QCQPs with rank-structured quadratic
constraints.

The canonical form is

    minimize    0.5 x'Px + lin'x + const
    subject to  G x <= h
                ||F_k x||^2 + w_k'x + d_k <= 0     k = 1..m_q
                A x = b

with ``P`` positive semidefinite and every ``F_k`` stored as a (small) sparse
factor, so each quadratic constraint contributes a low-rank Hessian update.
The method is a primal-dual interior point with infeasible-start Newton steps
on the perturbed KKT system and a backtracking line search on the residual
norm.  A phase-I subproblem (minimize the worst constraint violation)
produces a strictly feasible start or an infeasibility witness.

Everything is deterministic: no randomized pivoting, fixed initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "QuadConstraint",
    "CanonicalQCQP",
    "SolverConfig",
    "Solution",
    "solve_canonical",
    "solve",
    "kkt_residuals",
]


@dataclass(frozen=True)
class QuadConstraint:
    """Convex quadratic constraint ||F x||^2 + w'x + d <= 0."""

    F: sp.csr_matrix
    w: np.ndarray
    d: float

    def value(self, x):
        Fx = self.F @ x
        return float(Fx @ Fx + self.w @ x + self.d)

    def grad(self, x):
        return 2.0 * (self.F.T @ (self.F @ x)) + self.w


def _empty_csr(rows, cols):
    return sp.csr_matrix((rows, cols))


@dataclass
class CanonicalQCQP:
    P: sp.csr_matrix
    lin: np.ndarray
    const: float = 0.0
    G: sp.csr_matrix | None = None
    h: np.ndarray | None = None
    A: sp.csr_matrix | None = None
    b: np.ndarray | None = None
    quads: tuple[QuadConstraint, ...] = ()

    def __post_init__(self):
        nx = len(self.lin)
        self.P = sp.csr_matrix(self.P)
        if self.G is None:
            self.G = _empty_csr(0, nx)
            self.h = np.zeros(0)
        else:
            self.G = sp.csr_matrix(self.G)
        if self.A is None:
            self.A = _empty_csr(0, nx)
            self.b = np.zeros(0)
        else:
            self.A = sp.csr_matrix(self.A)
        self.h = np.asarray(self.h, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    @property
    def nx(self):
        return len(self.lin)

    @property
    def n_ineq(self):
        return self.G.shape[0] + len(self.quads)

    def _quad_stack(self):
        """Cache stacked single-row factors (F_all, W, d) for vectorized
        evaluation; None when some factor has more than one row."""
        if not hasattr(self, "_qstack"):
            if self.quads and all(qc.F.shape[0] == 1 for qc in self.quads):
                F_all = sp.vstack([qc.F for qc in self.quads], format="csr")
                W = sp.vstack([sp.csr_matrix(qc.w) for qc in self.quads],
                              format="csr")
                d = np.array([qc.d for qc in self.quads])
                self._qstack = (F_all, W, d)
            else:
                self._qstack = None
        return self._qstack

    def objective(self, x):
        return float(0.5 * x @ (self.P @ x) + self.lin @ x + self.const)

    def ineq_values(self, x):
        m0 = self.G.shape[0]
        vals = np.empty(self.n_ineq)
        vals[:m0] = self.G @ x - self.h
        stack = self._quad_stack()
        if stack is not None:
            F_all, W, d = stack
            Fx = F_all @ x
            vals[m0:] = Fx * Fx + W @ x + d
        else:
            for k, qc in enumerate(self.quads):
                vals[m0 + k] = qc.value(x)
        return vals

    def ineq_jacobian(self, x):
        if not self.quads:
            return self.G.copy()
        stack = self._quad_stack()
        if stack is not None:
            F_all, W, _ = stack
            J = sp.diags(2.0 * (F_all @ x)) @ F_all + W
            return sp.vstack([self.G, J], format="csr")
        rows = [self.G] + [sp.csr_matrix(qc.grad(x)) for qc in self.quads]
        return sp.vstack(rows, format="csr")

    def quad_hessian_sum(self, weights):
        """Sum_k weights_k * 2 F_k'F_k, vectorized for single-row factors."""
        stack = self._quad_stack()
        if stack is not None:
            F_all = stack[0]
            return 2.0 * (F_all.T @ sp.diags(weights) @ F_all)
        H = sp.csr_matrix((self.nx, self.nx))
        for k, qc in enumerate(self.quads):
            H = H + 2.0 * weights[k] * (qc.F.T @ qc.F)
        return H

    def max_violation(self, x):
        v = 0.0
        if self.n_ineq:
            v = max(v, float(np.max(self.ineq_values(x))))
        if self.A.shape[0]:
            v = max(v, float(np.max(np.abs(self.A @ x - self.b))))
        return v


@dataclass(frozen=True)
class SolverConfig:
    tol_gap: float = 1e-8        # relative duality-gap tolerance
    tol_feas: float = 1e-8       # relative primal/dual feasibility tolerance
    max_iter: int = 200
    tol_stall: float = 5e-6      # acceptance bar when progress stalls at the
                                 # floating-point floor of the surrogate gap
    regularization: float = 1e-10   # absolute Tikhonov weight on P
    mu: float = 10.0             # barrier parameter growth
    verbose: bool = False

    def __post_init__(self):
        if self.tol_gap <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Solution:
    """Solver output.  ``q_m``/``s``/``a`` are filled by :func:`solve`; the
    raw decision vector and multipliers are always present."""

    x: np.ndarray
    status: str                       # optimal | max_iter | infeasible | unbounded
    objective: float
    kkt: dict
    iterations: int
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q_m: np.ndarray | None = None
    s: float | None = None
    a: float | None = None
    witness: float | None = None      # max constraint violation when infeasible


def kkt_residuals(prob: CanonicalQCQP, x, lam, nu):
    """Scaled KKT residual record at a candidate primal-dual point."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    nu = np.asarray(nu, dtype=float)
    f = prob.ineq_values(x)
    Df = prob.ineq_jacobian(x)
    grad = prob.P @ x + prob.lin
    r_dual = grad + (Df.T @ lam if len(lam) else 0.0) \
        + (prob.A.T @ nu if len(nu) else 0.0)
    dual_scale = 1.0 + max(
        float(np.linalg.norm(grad, np.inf)), float(np.abs(prob.lin).max(initial=0.0))
    )
    pri_scale = 1.0 + float(np.abs(prob.b).max(initial=0.0)) \
        + float(np.abs(prob.h).max(initial=0.0))
    record = {
        "stationarity": float(np.linalg.norm(r_dual, np.inf)) / dual_scale,
        "primal": (max(float(np.max(f, initial=0.0)), 0.0)
                   + float(np.abs(prob.A @ x - prob.b).max(initial=0.0))) / pri_scale,
        "dual": max(float(-lam.min(initial=0.0)), 0.0),
        "complementarity": float(np.abs(lam * f).max(initial=0.0))
        / (1.0 + abs(prob.objective(x))),
        "gap": float(-(f @ lam)) / (1.0 + abs(prob.objective(x))) if len(lam) else 0.0,
    }
    return record


def _solve_kkt(H, A, rhs_x, rhs_nu, reg):
    """Factor and solve the symmetric KKT system with static regularization.

    A few rounds of iterative refinement recover accuracy lost to the
    severe ill-conditioning of the barrier Hessian near the active set.
    """
    p = A.shape[0]
    if p == 0:
        K = sp.csc_matrix(H)
        rhs = rhs_x
    else:
        K = sp.bmat(
            [[H, A.T], [A, -reg * sp.identity(p)]], format="csc"
        )
        rhs = np.concatenate([rhs_x, rhs_nu])
    lu = spla.splu(K)
    sol = lu.solve(rhs)
    for _ in range(3):
        resid = rhs - K @ sol
        if np.linalg.norm(resid, np.inf) <= 1e-14 * max(
                1.0, np.linalg.norm(rhs, np.inf)):
            break
        sol = sol + lu.solve(resid)
    return sol[: H.shape[0]], sol[H.shape[0]:]


def _equality_qp(prob: CanonicalQCQP, cfg: SolverConfig):
    """No inequality constraints: one Newton/KKT solve is exact."""
    nx = prob.nx
    reg = cfg.regularization
    H = (prob.P + reg * sp.identity(nx)).tocsr()
    x, nu = _solve_kkt(H, prob.A, -prob.lin, prob.b, max(reg, 1e-14))
    lam = np.zeros(0)
    kkt = kkt_residuals(prob, x, lam, nu)
    bad = not np.all(np.isfinite(x))
    status = "optimal" if not bad else "unbounded"
    return Solution(x=x, status=status, objective=prob.objective(x), kkt=kkt,
                    iterations=1, lam=lam, nu=nu)


def _phase1(prob: CanonicalQCQP, x0, cfg: SolverConfig):
    """Minimize the worst inequality violation; returns a strictly feasible
    point or None (with the best point found) when the problem is infeasible."""
    nx = prob.nx
    e_t = np.zeros(nx + 1)
    e_t[nx] = 1.0
    G_ext = sp.hstack([prob.G, -np.ones((prob.G.shape[0], 1))], format="csr") \
        if prob.G.shape[0] else _empty_csr(0, nx + 1)
    # cap t from below: minimize-t alone is unbounded whenever the
    # inequalities can be driven arbitrarily slack
    cap_row = sp.csr_matrix((np.array([-1.0]),
                             (np.array([0]), np.array([nx]))),
                            shape=(1, nx + 1))
    G_ext = sp.vstack([G_ext, cap_row], format="csr")
    quads_ext = tuple(
        QuadConstraint(
            F=sp.hstack([qc.F, sp.csr_matrix((qc.F.shape[0], 1))], format="csr"),
            w=np.concatenate([qc.w, [-1.0]]),
            d=qc.d,
        )
        for qc in prob.quads
    )
    A_ext = sp.hstack([prob.A, sp.csr_matrix((prob.A.shape[0], 1))], format="csr") \
        if prob.A.shape[0] else None
    f0 = prob.ineq_values(x0)
    t0 = float(np.max(f0)) if len(f0) else 0.0
    t0 = t0 + 0.1 * (1.0 + abs(t0))
    t_cap = 10.0 * (1.0 + abs(t0))
    margin = 1e-2 * (1.0 + abs(t0))

    # proximity term sigma/2 ||x - x0||^2 keeps the feasible point found
    # near the seed; scaled so its full cost stays well below the t range
    # (otherwise a far seed would pin the iterate in place), and retried
    # weaker in case it masks a feasible region far from x0
    prox_scale = (1.0 + abs(t0)) / max(1.0, float(x0 @ x0))
    res = None
    for sigma in (1e-2 * prox_scale, 1e-8 * prox_scale):
        P_aux = sp.diags(np.concatenate([np.full(nx, sigma),
                                         [cfg.regularization]])).tocsr()
        lin_aux = e_t - np.concatenate([sigma * x0, [0.0]])
        aux = CanonicalQCQP(
            P=P_aux, lin=lin_aux, G=G_ext,
            h=np.concatenate([prob.h, [t_cap]]),
            A=A_ext, b=prob.b if A_ext is not None else None,
            quads=quads_ext,
        )
        res = _ipm(aux, np.concatenate([x0, [t0]]), cfg,
                   stop_fn=lambda z: z[nx] < -margin)
        if res.x[nx] < 0.0:
            break
    t_star = res.x[nx]
    if t_star >= 0.0:
        return None
    x1 = res.x[:nx]
    # pull back toward the seed: by convexity the strictly feasible alphas
    # along the segment form an interval ending at x1, so bisect for its
    # left edge and keep a 5% safety offset
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if np.all(prob.ineq_values(x0 + mid * (x1 - x0)) < 0.0):
            hi = mid
        else:
            lo = mid
    alpha = hi + 0.05 * (1.0 - hi)
    x_back = x0 + alpha * (x1 - x0)
    if np.all(prob.ineq_values(x_back) < 0.0):
        return x_back
    return x1


def _ipm(prob: CanonicalQCQP, x0, cfg: SolverConfig, stop_fn=None):
    """Primal-dual interior point from a strictly feasible x0."""
    nx = prob.nx
    m = prob.n_ineq
    p = prob.A.shape[0]
    reg = cfg.regularization
    Preg = (prob.P + reg * sp.identity(nx)).tocsr()
    divergence = 1e12 * (1.0 + float(np.abs(x0).max(initial=0.0)))

    x = np.asarray(x0, dtype=float).copy()
    f = prob.ineq_values(x)
    if np.any(f >= 0):
        raise ValueError("interior-point start is not strictly feasible")
    lam = 1.0 / (-f)
    nu = np.zeros(p)

    def residuals(x, lam, nu, t):
        f = prob.ineq_values(x)
        Df = prob.ineq_jacobian(x)
        r_dual = Preg @ x + prob.lin + Df.T @ lam + (prob.A.T @ nu if p else 0.0)
        r_cent = -lam * f - 1.0 / t
        r_pri = prob.A @ x - prob.b if p else np.zeros(0)
        return f, Df, r_dual, r_cent, r_pri

    status = "max_iter"
    it = 0
    best_resid = np.inf
    stall = 0
    for it in range(1, cfg.max_iter + 1):
        f = prob.ineq_values(x)
        eta_hat = float(-(f @ lam))
        t = cfg.mu * m / max(eta_hat, 1e-300)
        f, Df, r_dual, r_cent, r_pri = residuals(x, lam, nu, t)

        obj = prob.objective(x)
        grad_scale = 1.0 + max(
            float(np.abs(Preg @ x + prob.lin).max(initial=0.0)),
            float(np.abs(prob.lin).max(initial=0.0)),
        )
        rel_dual = np.linalg.norm(r_dual, np.inf) / grad_scale
        rel_pri = np.linalg.norm(r_pri, np.inf) / (1.0 + np.abs(prob.b).max(initial=0.0)) if p else 0.0
        rel_gap = eta_hat / (1.0 + abs(obj))
        if cfg.verbose:
            print("iter %3d  gap %.3e  dual %.3e  pri %.3e" %
                  (it, rel_gap, rel_dual, rel_pri))
        if stop_fn is not None and stop_fn(x):
            status = "stopped"
            break
        if rel_gap <= cfg.tol_gap and rel_dual <= cfg.tol_feas and rel_pri <= cfg.tol_feas:
            status = "optimal"
            break
        # the surrogate gap bottoms out at the rounding floor of lam.f when
        # multipliers are large; accept a stalled iterate that clears the
        # relaxed bar on all three residuals
        cur = max(rel_gap, rel_dual, rel_pri)
        if cur < 0.9 * best_resid:
            best_resid = cur
            stall = 0
        else:
            stall += 1
        if stall >= 10 and cur <= cfg.tol_stall:
            status = "optimal"
            break
        if np.abs(x).max() > divergence:
            status = "unbounded"
            break

        # Newton step on the perturbed KKT system, lambda eliminated
        w_bar = lam / (-f)
        H = Preg + (Df.T @ sp.diags(w_bar) @ Df)
        if prob.quads:
            H = H + prob.quad_hessian_sum(lam[prob.G.shape[0]:])
        rhs_x = -(r_dual + Df.T @ (r_cent / f))
        dx, dnu = _solve_kkt(H.tocsr(), prob.A, rhs_x, -r_pri, max(reg, 1e-14))
        dlam = (r_cent - lam * (Df @ dx)) / f

        # step length: keep lambda > 0 and f < 0, then Armijo on residual norm
        smax = 1.0
        neg = dlam < 0
        if np.any(neg):
            smax = min(smax, 0.99 * float(np.min(-lam[neg] / dlam[neg])))
        norm0 = np.sqrt(np.linalg.norm(r_dual) ** 2 + np.linalg.norm(r_cent) ** 2
                        + np.linalg.norm(r_pri) ** 2)
        s = smax
        accepted = False
        for _ in range(60):
            xn = x + s * dx
            fn = prob.ineq_values(xn)
            if np.all(fn < 0):
                lamn = lam + s * dlam
                nun = nu + s * dnu
                _, _, rd, rc, rp = residuals(xn, lamn, nun, t)
                normn = np.sqrt(np.linalg.norm(rd) ** 2 + np.linalg.norm(rc) ** 2
                                + np.linalg.norm(rp) ** 2)
                if normn <= (1.0 - 0.01 * s) * norm0:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            # stalled; accept the damped step and let convergence tests decide
            xn, lamn, nun = x + s * dx, np.maximum(lam + s * dlam, 1e-300), nu + s * dnu
            if np.any(prob.ineq_values(xn) >= 0):
                break
        x, lam, nu = xn, lamn, nun

    kkt = kkt_residuals(prob, x, lam, nu)
    return Solution(x=x, status=status, objective=prob.objective(x), kkt=kkt,
                    iterations=it, lam=lam, nu=nu)


def _equilibrate(prob: CanonicalQCQP):
    """Row-scale all constraints to unit coefficient norm.

    Brings monotonicity rows (coefficients ~1/r) and actuator/power rows
    (coefficients ~1/dt^2) to a common scale so the barrier multipliers stay
    commensurate.  Returns (scaled problem, ineq scales, eq scales); a
    scaled-dual lambda_s maps back as lambda = lambda_s / scale.
    """
    def row_norms(mat):
        out = np.asarray(abs(mat).max(axis=1).todense()).ravel() \
            if mat.shape[0] else np.zeros(0)
        return np.maximum(out, 1e-300)

    sg = row_norms(prob.G)
    G_s = sp.diags(1.0 / sg) @ prob.G if prob.G.shape[0] else prob.G
    h_s = prob.h / sg if prob.G.shape[0] else prob.h

    sq = np.ones(len(prob.quads))
    quads_s = []
    for k, qc in enumerate(prob.quads):
        Fn = float(spla.norm(qc.F)) ** 2
        s = max(Fn, float(np.abs(qc.w).max(initial=0.0)), abs(qc.d), 1e-300)
        sq[k] = s
        quads_s.append(QuadConstraint(F=qc.F / np.sqrt(s), w=qc.w / s,
                                      d=qc.d / s))

    se = row_norms(prob.A)
    A_s = sp.diags(1.0 / se) @ prob.A if prob.A.shape[0] else prob.A
    b_s = prob.b / se if prob.A.shape[0] else prob.b

    scaled = CanonicalQCQP(P=prob.P, lin=prob.lin, const=prob.const,
                           G=G_s, h=h_s, A=A_s, b=b_s,
                           quads=tuple(quads_s))
    return scaled, np.concatenate([sg, sq]), se


def solve_canonical(prob: CanonicalQCQP, cfg: SolverConfig | None = None,
                    x0=None) -> Solution:
    """Solve a canonical convex QCQP to the configured KKT tolerances."""
    cfg = cfg or SolverConfig()
    nx = prob.nx
    if prob.n_ineq == 0:
        return _equality_qp(prob, cfg)

    scaled, s_ineq, s_eq = _equilibrate(prob)
    if x0 is None:
        if prob.A.shape[0]:
            x0 = spla.lsqr(prob.A, prob.b, atol=1e-14, btol=1e-14)[0]
        else:
            x0 = np.zeros(nx)
    x0 = np.asarray(x0, dtype=float)
    if np.any(scaled.ineq_values(x0) >= 0):
        x0 = _phase1(scaled, x0, cfg)
        if x0 is None:
            # infeasible: report the best achievable violation as witness
            xw = spla.lsqr(prob.A, prob.b, atol=1e-14, btol=1e-14)[0] \
                if prob.A.shape[0] else np.zeros(nx)
            return Solution(x=xw, status="infeasible", objective=np.nan,
                            kkt={}, iterations=0,
                            witness=prob.max_violation(xw))
    res = _ipm(scaled, x0, cfg)
    # map duals back to the unscaled constraints and certify against them
    res.lam = res.lam / s_ineq
    res.nu = res.nu / s_eq if len(s_eq) else res.nu
    res.kkt = kkt_residuals(prob, res.x, res.lam, res.nu)
    return res


def solve(inst, cfg: SolverConfig | None = None) -> Solution:
    """Solve an assembled design problem (see :mod:`seaspring.problem`).

    The instance provides its canonical lowering and a strictly feasible
    seed; the returned solution carries the motor trace and epigraph values.
    """
    cfg = cfg or SolverConfig()
    prob = inst.to_canonical()
    x0 = inst.feasible_seed()
    res = solve_canonical(prob, cfg, x0=x0)
    n = inst.n
    res.q_m = res.x[:n].copy()
    if inst.has_epigraph:
        res.s = float(res.x[n])
        res.a = float(res.x[n + 1])
    return res
