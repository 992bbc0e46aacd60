"""Primal-dual interior-point solver for smooth NLPs.

Solves::

    min f(x)  s.t.  g(x) = 0,  h(x) <= 0,  x_lower <= x <= x_upper

Variable bounds are folded into ``h`` as linear rows (fixed variables
become linear equalities).  Each iteration takes a Newton step on the
perturbed KKT system, reduced to ``[[M, Jg'], [Jg, 0]]``; the matrix is
factored with a symmetric indefinite LDL' factorization and the
Hessian block is shifted until the inertia is (n, m, 0).

A problem is any object exposing ``x_lower``, ``x_upper``,
``objective(x) -> (f, grad)``, ``equalities(x) -> (g, jac)``,
``inequalities(x) -> (h, jac)`` and optionally
``hessian(x, lam, mu, obj_factor)``.  Without ``hessian`` a damped BFGS
approximation of the Lagrangian Hessian is used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import ldl, solve_triangular

log = logging.getLogger(__name__)

CONVERGED = "converged"
ITERATION_LIMIT = "iteration-limit"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    comp_tol: float = 1e-6
    max_iter: int = 150
    barrier_reduction: float = 0.1
    step_shrink: float = 0.995
    regularization: float = 1e-10
    # largest objective gradient entry after automatic scaling
    max_gradient: float = 100.0

    def __post_init__(self):
        for name in ("feas_tol", "opt_tol", "comp_tol", "regularization", "max_gradient"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.barrier_reduction < 1:
            raise ValueError("barrier_reduction must lie in (0, 1)")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class KKTResiduals:
    primal: float
    dual: float
    complementarity: float

    def within(self, opts: SolverOptions):
        return self.primal <= opts.feas_tol and self.dual <= opts.opt_tol and self.complementarity <= opts.comp_tol


@dataclass
class SolveOutcome:
    x_star: np.ndarray
    multipliers: dict
    status: str
    iterations: int
    kkt_residuals: KKTResiduals
    objective: float
    obj_scale: float = 1.0
    message: str = ""
    barrier_history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


@dataclass
class FunctionNLP:
    """Adapter turning plain callables into the problem interface."""

    x_lower: np.ndarray
    x_upper: np.ndarray
    objective: Callable
    equalities: Optional[Callable] = None
    inequalities: Optional[Callable] = None
    hessian: Optional[Callable] = None

    def __post_init__(self):
        self.x_lower = np.asarray(self.x_lower, dtype=float)
        self.x_upper = np.asarray(self.x_upper, dtype=float)
        n = self.x_lower.size
        if self.equalities is None:
            self.equalities = lambda x: (np.zeros(0), np.zeros((0, n)))
        if self.inequalities is None:
            self.inequalities = lambda x: (np.zeros(0), np.zeros((0, n)))


class _Bounds:
    """Variable bounds rewritten as linear rows."""

    def __init__(self, xl, xu):
        n = xl.size
        self.n = n
        self.fixed = np.flatnonzero(np.isfinite(xl) & (xl == xu))
        free = np.ones(n, dtype=bool)
        free[self.fixed] = False
        self.lower = np.flatnonzero(free & np.isfinite(xl))
        self.upper = np.flatnonzero(free & np.isfinite(xu))
        self.xl, self.xu = xl, xu
        eye = np.eye(n)
        self.jac_fixed = eye[self.fixed]
        self.jac_box = np.vstack([-eye[self.lower], eye[self.upper]])

    @property
    def n_box(self):
        return self.lower.size + self.upper.size

    def fixed_residual(self, x):
        return x[self.fixed] - self.xl[self.fixed]

    def box_values(self, x):
        return np.concatenate([self.xl[self.lower] - x[self.lower], x[self.upper] - self.xu[self.upper]])


def _project_start(x0, xl, xu):
    x = np.array(x0, dtype=float)
    if x.shape != xl.shape:
        raise ValueError(f"x0 has shape {x.shape}, expected {xl.shape}")
    x = np.where(np.isfinite(x), x, 0.0)
    fixed = np.isfinite(xl) & (xl == xu)
    both = np.isfinite(xl) & np.isfinite(xu) & ~fixed
    nudge = np.where(both, 1e-4 * (xu - xl), 1e-4)
    lo = np.where(np.isfinite(xl), xl + nudge, -np.inf)
    hi = np.where(np.isfinite(xu), xu - nudge, np.inf)
    x = np.minimum(np.maximum(x, lo), hi)
    x[fixed] = xl[fixed]
    return x


def _inertia(d, tol):
    """Counts of (positive, negative, near-zero) eigenvalues of block-diagonal ``d``."""
    n = d.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(d[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = (d[i, i],)
            i += 1
        for e in ev:
            if abs(e) <= tol:
                zero += 1
            elif e > 0:
                pos += 1
            else:
                neg += 1
    return pos, neg, zero


def _ldl_solve(lu, d, perm, rhs):
    lt = lu[perm]
    y = solve_triangular(lt, rhs[perm], lower=True, unit_diagonal=True)
    y = np.linalg.solve(d, y)
    out = np.empty_like(rhs)
    out[perm] = solve_triangular(lt.T, y, lower=False, unit_diagonal=True)
    return out


class _KKTSolver:
    """Factor the reduced KKT matrix with inertia correction."""

    def __init__(self, reg):
        self.reg = reg
        self.last_delta = 0.0

    def solve(self, m, jac, rhs):
        n, neq = m.shape[0], jac.shape[0]
        delta_c = 0.0
        delta = 0.0
        for _ in range(60):
            k = np.zeros((n + neq, n + neq))
            k[:n, :n] = m + delta * np.eye(n)
            k[:n, n:] = jac.T
            k[n:, :n] = jac
            if neq:
                k[n:, n:] = -delta_c * np.eye(neq)
            lu, d, perm = ldl(k, lower=True)
            pos, neg, zero = _inertia(d, self.reg)
            if pos == n and neg == neq and zero == 0:
                self.last_delta = delta
                sol = _ldl_solve(lu, d, perm, rhs)
                if np.all(np.isfinite(sol)):
                    return sol, delta
            if zero and delta_c == 0.0 and neq:
                delta_c = 1e-8
                continue
            if delta == 0.0:
                delta = 1e-4 if self.last_delta == 0.0 else max(self.reg, self.last_delta / 3)
            else:
                delta *= 8.0 if self.last_delta else 100.0
            if delta > 1e40:
                break
        return None, delta


def _finite_or_raise(values, what):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FloatingPointError(f"non-finite value in {what} row {int(bad[0])}")


def _split_multipliers(bounds, lam_all, mu_all, n_eq, n_ineq):
    n = bounds.n
    lam = lam_all[:n_eq]
    lam_fixed = lam_all[n_eq:]
    mu = mu_all[:n_ineq]
    mu_box = mu_all[n_ineq:]
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[bounds.lower] = mu_box[: bounds.lower.size]
    upper[bounds.upper] = mu_box[bounds.lower.size :]
    lower[bounds.fixed] += np.maximum(-lam_fixed, 0.0)
    upper[bounds.fixed] += np.maximum(lam_fixed, 0.0)
    return {"eq": lam.copy(), "ineq": mu.copy(), "lower": lower, "upper": upper}


def check_kkt(problem, x, multipliers, obj_scale=1.0) -> KKTResiduals:
    """Residual norms of the KKT conditions at ``(x, multipliers)``.

    ``multipliers`` holds ``eq``, ``ineq``, ``lower`` and ``upper`` arrays
    for the unscaled objective; ``obj_scale`` reproduces the solver's
    internal scaling so results compare with its tolerances.
    """
    x = np.asarray(x, dtype=float)
    xl, xu = np.asarray(problem.x_lower, float), np.asarray(problem.x_upper, float)
    _, df = problem.objective(x)
    g, jg = problem.equalities(x)
    h, jh = problem.inequalities(x)
    n = x.size
    lam = np.asarray(multipliers.get("eq", np.zeros(g.size)), float)
    mu = np.asarray(multipliers.get("ineq", np.zeros(h.size)), float)
    lower = np.asarray(multipliers.get("lower", np.zeros(n)), float)
    upper = np.asarray(multipliers.get("upper", np.zeros(n)), float)

    lower_gap = np.where(np.isfinite(xl), x - xl, np.inf)
    upper_gap = np.where(np.isfinite(xu), xu - x, np.inf)
    viol = [0.0]
    if g.size:
        viol.append(np.max(np.abs(g)))
    if h.size:
        viol.append(np.max(h))
    viol.append(np.max(-lower_gap, initial=0.0))
    viol.append(np.max(-upper_gap, initial=0.0))
    primal = float(max(viol))

    grad = df + jg.T @ lam + jh.T @ mu - lower + upper
    dual = float(obj_scale * np.max(np.abs(grad), initial=0.0))

    comp = [0.0]
    if h.size:
        comp.append(np.max(np.abs(-h * mu)))
    lg = np.where(np.isfinite(lower_gap), lower_gap, 0.0)
    ug = np.where(np.isfinite(upper_gap), upper_gap, 0.0)
    comp.append(np.max(np.abs(lg * lower), initial=0.0))
    comp.append(np.max(np.abs(ug * upper), initial=0.0))
    complementarity = float(obj_scale * max(comp))
    return KKTResiduals(primal, dual, complementarity)


def solve(problem, x0, opts: SolverOptions | None = None, callback=None) -> SolveOutcome:
    """Run the interior-point iteration from ``x0``.

    ``callback(it, x, slack, mu, gamma)`` is called after every accepted
    iterate; ``slack`` covers the inequality rows followed by the
    variable-bound gaps.
    """
    opts = opts or SolverOptions()
    xl = np.asarray(problem.x_lower, dtype=float)
    xu = np.asarray(problem.x_upper, dtype=float)
    if np.any(xl > xu):
        raise ValueError("inconsistent bounds: x_lower > x_upper")
    bounds = _Bounds(xl, xu)
    x = _project_start(x0, xl, xu)
    n = x.size
    hess_fn = getattr(problem, "hessian", None)

    def evaluate(x):
        f, df = problem.objective(x)
        g, jg = problem.equalities(x)
        h, jh = problem.inequalities(x)
        _finite_or_raise(np.atleast_1d(f), "objective")
        _finite_or_raise(df, "objective gradient")
        _finite_or_raise(g, "equality constraint")
        _finite_or_raise(h, "inequality constraint")
        _finite_or_raise(jg, "equality Jacobian")
        _finite_or_raise(jh, "inequality Jacobian")
        return f, df, g, jg, h, jh

    try:
        f, df, g_u, jg_u, h_u, jh_u = evaluate(x)
    except FloatingPointError as exc:
        return _failure(x, str(exc), 0, n)
    n_eq, n_ineq = g_u.size, h_u.size
    scale = min(1.0, opts.max_gradient / max(np.max(np.abs(df), initial=0.0), 1e-300))

    jg = np.vstack([jg_u, bounds.jac_fixed])
    jh = np.vstack([jh_u, bounds.jac_box])

    def stacked(g_u, h_u, x):
        return np.concatenate([g_u, bounds.fixed_residual(x)]), np.concatenate([h_u, bounds.box_values(x)])

    g, h = stacked(g_u, h_u, x)
    m_eq, m_in = g.size, h.size

    z0 = 1.0
    z = np.full(m_in, z0)
    deep = h < -z0
    z[deep] = -h[deep]
    # bound rows use the exact gap as slack so x stays strictly inside its box
    box = slice(n_ineq, m_in)
    z[box] = -h[box]
    gamma = 1.0
    mu = np.full(m_in, z0)
    big = gamma / z > z0
    mu[big] = gamma / z[big]
    lam = np.zeros(m_eq)

    kkt = _KKTSolver(opts.regularization)
    bfgs = None if hess_fn is not None else np.eye(n)
    history = [gamma]

    def lagrangian_grad(df, jg, jh, lam, mu):
        return scale * df + jg.T @ lam + jh.T @ mu

    def residuals(x, g, h, lx, z, mu):
        primal = max(np.max(np.abs(g), initial=0.0), np.max(h, initial=0.0))
        dual = np.max(np.abs(lx), initial=0.0)
        comp = np.max(np.abs(z * mu), initial=0.0)
        return KKTResiduals(float(primal), float(dual), float(comp))

    lx = lagrangian_grad(df, jg, jh, lam, mu)
    res = residuals(x, g, h, lx, z, mu)
    best = (np.inf, x.copy(), lam.copy(), mu.copy(), res, f)

    def score(r):
        return max(r.primal / opts.feas_tol, r.dual / opts.opt_tol, r.complementarity / opts.comp_tol)

    status, message, it = ITERATION_LIMIT, "iteration limit reached", 0
    if res.within(opts) and m_in == 0:
        status, message = CONVERGED, "initial point optimal"
    while status != CONVERGED and it < opts.max_iter:
        it += 1
        if hess_fn is not None:
            hl = hess_fn(x, lam[:n_eq], mu[:n_ineq], scale)
            if not np.all(np.isfinite(hl)):
                return _failure(x, "non-finite value in Lagrangian Hessian", it, n)
        else:
            hl = bfgs
        zinv = 1.0 / z
        mdiag = mu * zinv
        mm = hl + jh.T @ (mdiag[:, None] * jh)
        nn = lx + jh.T @ (zinv * (mu * h + gamma))
        rhs = np.concatenate([-nn, -g])
        sol, delta = kkt.solve(mm, jg, rhs)
        if sol is None:
            status, message = NUMERICAL_FAILURE, f"KKT matrix singular after regularization (delta={delta:.3g})"
            break
        dx, dlam = sol[:n], sol[n:]
        dz = -h - z - jh @ dx
        dmu = -mu + zinv * (gamma - mu * dz)

        neg = dz < 0
        alpha_p = min(1.0, opts.step_shrink * np.min(-z[neg] / dz[neg])) if neg.any() else 1.0
        neg = dmu < 0
        alpha_d = min(1.0, opts.step_shrink * np.min(-mu[neg] / dmu[neg])) if neg.any() else 1.0

        x_new = x + alpha_p * dx
        # fixed-variable rows are linear; pin them so roundoff in dx cannot move them
        x_new[bounds.fixed] = xl[bounds.fixed]
        z = z + alpha_p * dz
        lam = lam + alpha_d * dlam
        mu = mu + alpha_d * dmu
        if m_in:
            gamma = min(gamma, opts.barrier_reduction * float(z @ mu) / m_in)
        history.append(gamma)

        try:
            f, df, g_u, jg_u, h_u, jh_u = evaluate(x_new)
        except FloatingPointError as exc:
            return _failure(x_new, str(exc), it, n)
        if bfgs is not None:
            lx_old = lagrangian_grad(problem.objective(x)[1], jg, jh, lam, mu)
        x = x_new
        jg = np.vstack([jg_u, bounds.jac_fixed])
        jh = np.vstack([jh_u, bounds.jac_box])
        g, h = stacked(g_u, h_u, x)
        # resync against roundoff, never letting a slack collapse to zero
        gap = -h[box]
        z[box] = np.where(gap > 0, gap, z[box])
        lx = lagrangian_grad(df, jg, jh, lam, mu)
        if bfgs is not None:
            bfgs = _damped_bfgs(bfgs, alpha_p * dx, lx - lx_old)
        res = residuals(x, g, h, lx, z, mu)
        if callback is not None:
            callback(it, x.copy(), z.copy(), mu.copy(), gamma)
        log.debug(
            "it %3d  f=%.8g  primal=%.2e dual=%.2e comp=%.2e  gamma=%.2e  ap=%.3f ad=%.3f delta=%.1e",
            it, f, res.primal, res.dual, res.complementarity, gamma, alpha_p, alpha_d, delta,
        )
        sc = score(res)
        if sc < best[0]:
            best = (sc, x.copy(), lam.copy(), mu.copy(), res, f)
        if res.within(opts):
            status, message = CONVERGED, "KKT conditions satisfied"
    if status != CONVERGED:
        _, x, lam, mu, res, f = best
    mult = _split_multipliers(bounds, lam / scale, mu / scale, n_eq, n_ineq)
    return SolveOutcome(
        x_star=x,
        multipliers=mult,
        status=status,
        iterations=it,
        kkt_residuals=res,
        objective=float(f),
        obj_scale=scale,
        message=message,
        barrier_history=history,
    )


def _failure(x, message, it, n):
    log.warning("numerical failure: %s", message)
    return SolveOutcome(
        x_star=np.asarray(x, dtype=float),
        multipliers={},
        status=NUMERICAL_FAILURE,
        iterations=it,
        kkt_residuals=KKTResiduals(np.inf, np.inf, np.inf),
        objective=float("nan"),
        message=message,
    )


def _damped_bfgs(b, s, y):
    """Powell-damped BFGS update keeping ``b`` positive definite."""
    bs = b @ s
    sbs = float(s @ bs)
    if sbs <= 1e-16:
        return b
    sy = float(s @ y)
    theta = 1.0 if sy >= 0.2 * sbs else 0.8 * sbs / (sbs - sy)
    r = theta * y + (1 - theta) * bs
    return b - np.outer(bs, bs) / sbs + np.outer(r, r) / float(s @ r)
