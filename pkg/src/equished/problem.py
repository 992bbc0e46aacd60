"""Equity-constrained AC load-shedding NLP.

Variables (all per-unit except the dimensionless pair variables)::

    theta | v | p_gen | q_gen | p_shed | z_plus | z_minus

Equalities are nodal P/Q mismatches followed by the pairwise coupling
rows of the equity linearization; inequalities are squared branch MVA
limits at both ends followed by the single equity budget row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .case import AdmittanceMatrix, NetworkCase, branch_matrices, build_ybus
from .equity import EquityReport, build_equity_linearization, equity_report
from .errors import AssemblyError

NO_EQUITY = None


# ---------------------------------------------------------------------------
# polar power-flow derivatives (dense)


def bus_injection(ybus, v, theta):
    """Complex power leaving each bus into the network, ``V * conj(Y V)``."""
    y = ybus.complex if isinstance(ybus, AdmittanceMatrix) else ybus
    vc = v * np.exp(1j * theta)
    return vc * np.conj(y @ vc)


def dsbus_dv(y, vc):
    i = y @ vc
    vnorm = vc / np.abs(vc)
    dva = 1j * np.diag(vc) @ np.conj(np.diag(i) - y * vc[None, :])
    dvm = vc[:, None] * np.conj(y * vnorm[None, :]) + np.diag(np.conj(i) * vnorm)
    return dva, dvm


def d2sbus_dv2(y, vc, lam):
    """Second derivatives of ``lam . S(V)``; returns the 2x2 block Hessian (complex)."""
    i = y @ vc
    a = np.diag(lam * vc)
    b = y * vc[None, :]
    c = a @ np.conj(b)
    d = y.conj().T * vc[None, :]
    e = np.diag(np.conj(vc)) @ (d * lam[None, :] - np.diag(d @ lam))
    f = c - a * np.conj(i)[None, :]
    g = 1.0 / np.abs(vc)
    gaa = e + f
    gva = 1j * g[:, None] * (e - f)
    gav = gva.T
    gvv = g[:, None] * (c + c.T) * g[None, :]
    return np.block([[gaa, gav], [gva, gvv]])


def dsbr_dv(ybr, cbr, vc):
    ibr = ybr @ vc
    vbr = cbr @ vc
    vnorm = vc / np.abs(vc)
    dva = 1j * (np.conj(ibr)[:, None] * cbr * vc[None, :] - vbr[:, None] * np.conj(ybr * vc[None, :]))
    dvm = vbr[:, None] * np.conj(ybr * vnorm[None, :]) + np.conj(ibr)[:, None] * cbr * vnorm[None, :]
    return dva, dvm, vbr * np.conj(ibr)


def d2sbr_dv2(cbr, ybr, vc, lam):
    a = ybr.conj().T @ (lam[:, None] * cbr)
    b = np.conj(vc)[:, None] * a * vc[None, :]
    d = np.diag((a @ vc) * np.conj(vc))
    e = np.diag((a.T @ np.conj(vc)) * vc)
    f = b + b.T
    g = 1.0 / np.abs(vc)
    haa = f - d - e
    hva = 1j * g[:, None] * (b - b.T - d + e)
    hav = hva.T
    hvv = g[:, None] * f * g[None, :]
    return np.block([[haa, hav], [hva, hvv]])


def d2asbr_dv2(dva, dvm, sbr, cbr, ybr, vc, mu):
    """Hessian of ``sum_k mu_k |S_k|^2`` with respect to (theta, v)."""
    h = d2sbr_dv2(cbr, ybr, vc, np.conj(sbr) * mu)
    dsv = np.hstack([dva, dvm])
    return 2.0 * np.real(h + dsv.T @ (mu[:, None] * np.conj(dsv)))


# ---------------------------------------------------------------------------
# standalone evaluators


def eval_power_balance(theta, v, p_inj, q_inj, ybus):
    """Nodal mismatches ``inj - V_i sum_j V_j (...)`` in pu (standard polar form)."""
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    g, b = ybus.g, ybus.b
    dth = theta[:, None] - theta[None, :]
    vv = v[:, None] * v[None, :]
    p_calc = np.sum(vv * (g * np.cos(dth) + b * np.sin(dth)), axis=1)
    q_calc = np.sum(vv * (g * np.sin(dth) - b * np.cos(dth)), axis=1)
    return np.asarray(p_inj) - p_calc, np.asarray(q_inj) - q_calc


def eval_branch_flow(theta, v, branch, case):
    """Squared apparent power ``(|S_from|^2, |S_to|^2)`` in pu^2 through ``branch``."""
    idx = case.ordinal
    f, t = idx[branch.from_bus], idx[branch.to_bus]
    vc = np.asarray(v) * np.exp(1j * np.asarray(theta))
    yff, yft, ytf, ytt = branch.admittances()
    i_f = yff * vc[f] + yft * vc[t]
    i_t = ytf * vc[f] + ytt * vc[t]
    s_f = vc[f] * np.conj(i_f)
    s_t = vc[t] * np.conj(i_t)
    return float(abs(s_f) ** 2), float(abs(s_t) ** 2)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableLayout:
    n_bus: int
    n_gen: int
    n_load: int
    n_pairs: int

    def _bounds(self):
        sizes = [self.n_bus, self.n_bus, self.n_gen, self.n_gen, self.n_load, self.n_pairs, self.n_pairs]
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return edges

    @property
    def size(self):
        return 2 * self.n_bus + 2 * self.n_gen + self.n_load + 2 * self.n_pairs

    def block(self, name):
        k = ("theta", "v", "p_gen", "q_gen", "p_shed", "z_plus", "z_minus").index(name)
        e = self._bounds()
        return slice(int(e[k]), int(e[k + 1]))

    @property
    def theta(self):
        return self.block("theta")

    @property
    def v(self):
        return self.block("v")

    @property
    def p_gen(self):
        return self.block("p_gen")

    @property
    def q_gen(self):
        return self.block("q_gen")

    @property
    def p_shed(self):
        return self.block("p_shed")

    @property
    def z_plus(self):
        return self.block("z_plus")

    @property
    def z_minus(self):
        return self.block("z_minus")


@dataclass(frozen=True)
class ShedSolution:
    bus_ids: tuple
    v: np.ndarray
    theta: np.ndarray
    gen_buses: tuple
    p_gen: np.ndarray
    q_gen: np.ndarray
    load_bus_ids: tuple
    p_shed: np.ndarray
    q_shed: np.ndarray
    generation_cost: float
    shed_penalty_cost: float
    total_cost: float
    equity: EquityReport
    converged: bool
    iterations: int
    max_residual: float
    status: str = ""
    beta: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def total_shed(self):
        return float(np.sum(self.p_shed))

    def shed_by_bus(self):
        return dict(zip(self.load_bus_ids, self.p_shed.tolist()))

    def as_dict(self):
        return {
            "beta": self.beta,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "max_residual": self.max_residual,
            "generation_cost": self.generation_cost,
            "shed_penalty_cost": self.shed_penalty_cost,
            "total_cost": self.total_cost,
            "total_shed_mw": self.total_shed,
            "buses": [
                {"id": b, "v": float(vm), "theta": float(va)}
                for b, vm, va in zip(self.bus_ids, self.v, self.theta)
            ],
            "generators": [
                {"bus": b, "p_gen": float(p), "q_gen": float(q)}
                for b, p, q in zip(self.gen_buses, self.p_gen, self.q_gen)
            ],
            "shed": [
                {"bus": b, "p_shed": float(p), "q_shed": float(q)}
                for b, p, q in zip(self.load_bus_ids, self.p_shed, self.q_shed)
            ],
            "equity": self.equity.as_dict(),
            **self.extra,
        }


class SheddingProblem:
    """Assembled NLP; immutable after construction, evaluations are pure."""

    def __init__(self, case: NetworkCase, beta, shed_penalty: float):
        if beta is not None and beta < 0:
            raise AssemblyError(f"beta must be non-negative, got {beta}")
        if not shed_penalty > 0:
            raise AssemblyError(f"shed penalty must be positive, got {shed_penalty}")
        case.check_connected()
        gens = case.active_generators
        if not gens:
            raise AssemblyError("no in-service generators")
        self.case = case
        self.beta = beta
        self.shed_penalty = float(shed_penalty)
        base = case.base_mva
        self.base = base
        self.ybus = build_ybus(case)
        self._y = self.ybus.complex
        nb = case.n_bus
        idx = case.ordinal

        self.gens = gens
        self.gen_ordinals = np.array([idx[g.at_bus] for g in gens], dtype=int)
        self.load_ordinals = np.array(case.load_ordinals, dtype=int)
        pd = np.array([b.p_demand for b in case.buses]) / base
        qd = np.array([b.q_demand for b in case.buses]) / base
        self.pd, self.qd = pd, qd
        load_pd = pd[self.load_ordinals]
        # constant power factor curtailment
        self.shed_q_ratio = qd[self.load_ordinals] / load_pd if load_pd.size else np.zeros(0)

        if beta is not None and self.load_ordinals.size >= 2:
            self.equity = build_equity_linearization(load_pd, beta)
        else:
            self.equity = None
        n_pairs = self.equity.aux_count if self.equity else 0
        self.layout = VariableLayout(nb, len(gens), self.load_ordinals.size, n_pairs)

        self.rated = tuple(br for br in case.active_branches if br.rate > 0)
        self._yf, self._yt = branch_matrices(case, self.rated)
        nl = len(self.rated)
        self._cf = np.zeros((nl, nb))
        self._ct = np.zeros((nl, nb))
        for k, br in enumerate(self.rated):
            self._cf[k, idx[br.from_bus]] = 1.0
            self._ct[k, idx[br.to_bus]] = 1.0
        self._flow_limit = np.array([(br.rate / base) ** 2 for br in self.rated])

        self._build_bounds()
        self._build_linear_parts()

    # -- sizes ---------------------------------------------------------------
    @property
    def n_vars(self):
        return self.layout.size

    @property
    def n_eq(self):
        return 2 * self.case.n_bus + self.layout.n_pairs

    @property
    def n_ineq(self):
        return 2 * len(self.rated) + (1 if self.equity else 0)

    # -- bounds --------------------------------------------------------------
    def _build_bounds(self):
        L, base = self.layout, self.base
        xl = np.full(L.size, -np.inf)
        xu = np.full(L.size, np.inf)
        ref = self.case.reference_ordinal
        xl[L.theta.start + ref] = xu[L.theta.start + ref] = 0.0
        xl[L.v] = [b.v_min for b in self.case.buses]
        xu[L.v] = [b.v_max for b in self.case.buses]
        xl[L.p_gen] = [g.p_min / base for g in self.gens]
        xu[L.p_gen] = [g.p_max / base for g in self.gens]
        xl[L.q_gen] = [g.q_min / base for g in self.gens]
        xu[L.q_gen] = [g.q_max / base for g in self.gens]
        xl[L.p_shed] = 0.0
        xu[L.p_shed] = self.pd[self.load_ordinals]
        xl[L.z_plus] = 0.0
        xl[L.z_minus] = 0.0
        xl.setflags(write=False)
        xu.setflags(write=False)
        self.x_lower, self.x_upper = xl, xu

    def _build_linear_parts(self):
        L, nb = self.layout, self.case.n_bus
        # d(mismatch)/d(gen, shed) are constant
        jac = np.zeros((self.n_eq, L.size))
        for k, i in enumerate(self.gen_ordinals):
            jac[i, L.p_gen.start + k] = -1.0
            jac[nb + i, L.q_gen.start + k] = -1.0
        for k, i in enumerate(self.load_ordinals):
            jac[i, L.p_shed.start + k] = -1.0
            jac[nb + i, L.p_shed.start + k] = -self.shed_q_ratio[k]
        if self.equity:
            rows = slice(2 * nb, 2 * nb + L.n_pairs)
            jac[rows, L.p_shed] = self.equity.coupling_shed
            jac[rows, L.z_plus] = np.eye(L.n_pairs)
            jac[rows, L.z_minus] = -np.eye(L.n_pairs)
        self._eq_linear_jac = jac

        budget = np.zeros(L.size)
        if self.equity:
            budget[L.p_shed] = self.equity.budget_shed
            budget[L.z_plus] = self.equity.budget_z
            budget[L.z_minus] = self.equity.budget_z
        self._budget_row = budget

        self._cost = [np.asarray(g.cost_coeffs, dtype=float) for g in self.gens]

    # -- helpers -------------------------------------------------------------
    def split(self, x):
        L = self.layout
        return {name: x[getattr(L, name)] for name in ("theta", "v", "p_gen", "q_gen", "p_shed", "z_plus", "z_minus")}

    def _vc(self, x):
        L = self.layout
        return x[L.v] * np.exp(1j * x[L.theta])

    # -- objective -----------------------------------------------------------
    def cost_breakdown(self, x):
        """``(generation $/h, shed penalty $/h)`` at ``x``."""
        L, base = self.layout, self.base
        pg_mw = x[L.p_gen] * base
        gen = float(sum(np.polyval(c, p) for c, p in zip(self._cost, pg_mw)))
        shed = float(self.shed_penalty * base * np.sum(x[L.p_shed]))
        return gen, shed

    def objective(self, x):
        L, base = self.layout, self.base
        gen, shed = self.cost_breakdown(x)
        grad = np.zeros(L.size)
        pg_mw = x[L.p_gen] * base
        grad[L.p_gen] = [base * np.polyval(np.polyder(c), p) if c.size > 1 else 0.0 for c, p in zip(self._cost, pg_mw)]
        grad[L.p_shed] = self.shed_penalty * base
        return gen + shed, grad

    def objective_hessian(self, x):
        L, base = self.layout, self.base
        h = np.zeros((L.size, L.size))
        for k, c in enumerate(self._cost):
            if c.size == 3:
                j = L.p_gen.start + k
                h[j, j] = 2.0 * c[0] * base * base
        return h

    # -- constraints ---------------------------------------------------------
    def equalities(self, x):
        L, nb = self.layout, self.case.n_bus
        vc = self._vc(x)
        s = vc * np.conj(self._y @ vc)
        g = np.empty(self.n_eq)
        g[:nb] = s.real + self.pd
        g[nb : 2 * nb] = s.imag + self.qd
        if L.n_pairs:
            g[2 * nb :] = 0.0
        g += self._eq_linear_jac @ x
        jac = self._eq_linear_jac.copy()
        dva, dvm = dsbus_dv(self._y, vc)
        jac[:nb, L.theta] = dva.real
        jac[:nb, L.v] = dvm.real
        jac[nb : 2 * nb, L.theta] = dva.imag
        jac[nb : 2 * nb, L.v] = dvm.imag
        return g, jac

    def branch_flows(self, x):
        """Squared MVA at the from and to ends of every rated branch, pu^2."""
        vc = self._vc(x)
        sf = (self._cf @ vc) * np.conj(self._yf @ vc)
        st = (self._ct @ vc) * np.conj(self._yt @ vc)
        return np.abs(sf) ** 2, np.abs(st) ** 2

    def inequalities(self, x):
        L = self.layout
        nl = len(self.rated)
        h = np.empty(self.n_ineq)
        jac = np.zeros((self.n_ineq, L.size))
        if nl:
            vc = self._vc(x)
            for k, (ybr, cbr) in enumerate(((self._yf, self._cf), (self._yt, self._ct))):
                dva, dvm, sbr = dsbr_dv(ybr, cbr, vc)
                rows = slice(k * nl, (k + 1) * nl)
                h[rows] = np.abs(sbr) ** 2 - self._flow_limit
                p, q = sbr.real, sbr.imag
                jac[rows, L.theta] = 2 * (p[:, None] * dva.real + q[:, None] * dva.imag)
                jac[rows, L.v] = 2 * (p[:, None] * dvm.real + q[:, None] * dvm.imag)
        if self.equity:
            h[-1] = self._budget_row @ x
            jac[-1] = self._budget_row
        return h, jac

    def hessian(self, x, lam, mu, obj_factor=1.0):
        """Hessian of ``obj_factor * f + lam . g + mu . h``."""
        L, nb = self.layout, self.case.n_bus
        hess = obj_factor * self.objective_hessian(x)
        vc = self._vc(x)
        hp = np.real(d2sbus_dv2(self._y, vc, lam[:nb].astype(complex)))
        hq = np.imag(d2sbus_dv2(self._y, vc, lam[nb : 2 * nb].astype(complex)))
        hv = hp + hq
        nl = len(self.rated)
        if nl:
            for k, (ybr, cbr) in enumerate(((self._yf, self._cf), (self._yt, self._ct))):
                m = mu[k * nl : (k + 1) * nl]
                dva, dvm, sbr = dsbr_dv(ybr, cbr, vc)
                hv = hv + d2asbr_dv2(dva, dvm, sbr, cbr, ybr, vc, m)
        # theta and v blocks are adjacent and start at 0
        hess[: 2 * nb, : 2 * nb] += hv
        return hess

    # -- start point and reporting ------------------------------------------
    def initial_point(self):
        """Flat voltages, mid-range dispatch, shed spread in proportion to the capacity deficit."""
        L = self.layout
        xl, xu = self.x_lower, self.x_upper
        x = np.zeros(L.size)
        x[L.v] = 0.5 * (xl[L.v] + xu[L.v])
        x[L.p_gen] = 0.5 * (xl[L.p_gen] + xu[L.p_gen])
        x[L.q_gen] = 0.5 * (xl[L.q_gen] + xu[L.q_gen])
        load_pd = self.pd[self.load_ordinals]
        total = load_pd.sum()
        deficit = max(0.0, total - xu[L.p_gen].sum())
        frac = min(1.0, deficit / total) if total > 0 else 0.0
        x[L.p_shed] = frac * load_pd
        if self.equity:
            zp, zm = self.equity.minimal_z(x[L.p_shed])
            x[L.z_plus], x[L.z_minus] = zp, zm
        return x

    def max_balance_residual(self, x):
        g, _ = self.equalities(x)
        return float(np.max(np.abs(g[: 2 * self.case.n_bus]))) if g.size else 0.0

    def make_solution(self, x, *, converged, iterations, status="") -> ShedSolution:
        L, base, case = self.layout, self.base, self.case
        gen_cost, shed_cost = self.cost_breakdown(x)
        p_shed = x[L.p_shed] * base
        report = equity_report(p_shed, case)
        return ShedSolution(
            bus_ids=case.bus_ids,
            v=x[L.v].copy(),
            theta=x[L.theta].copy(),
            gen_buses=tuple(g.at_bus for g in self.gens),
            p_gen=x[L.p_gen] * base,
            q_gen=x[L.q_gen] * base,
            load_bus_ids=tuple(case.buses[i].id for i in self.load_ordinals),
            p_shed=p_shed,
            q_shed=p_shed * self.shed_q_ratio,
            generation_cost=gen_cost,
            shed_penalty_cost=shed_cost,
            total_cost=gen_cost + shed_cost,
            equity=report,
            converged=converged,
            iterations=iterations,
            max_residual=self.max_balance_residual(x),
            status=status,
            beta=self.beta,
        )


def assemble(case: NetworkCase, beta, shed_penalty: float) -> SheddingProblem:
    """Build the NLP; ``beta=None`` omits the equity rows entirely."""
    return SheddingProblem(case, beta, shed_penalty)
