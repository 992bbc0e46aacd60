"""Independent reference computations used by the test suite.

Nothing here imports the package's numerical code paths; each oracle is
written from textbook formulas with explicit loops.
"""

import cmath
import itertools
import math

import numpy as np
from scipy.optimize import minimize


def textbook_ybus(case):
    """Y_bus assembled entry by entry from the pi-model of each branch."""
    ids = [b.id for b in case.buses]
    pos = {bid: k for k, bid in enumerate(ids)}
    n = len(ids)
    y = [[0j] * n for _ in range(n)]
    for br in case.branches:
        if not br.in_service:
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        z = complex(br.r, br.x)
        ys = 1 / z
        a = cmath.rect(br.tap, br.shift)
        half_b = complex(0, br.b_charging / 2)
        y[i][i] += (ys + half_b) / (abs(a) ** 2)
        y[j][j] += ys + half_b
        y[i][j] += -ys / a.conjugate()
        y[j][i] += -ys / a
    for k, b in enumerate(case.buses):
        y[k][k] += complex(b.shunt_g, b.shunt_b) / case.base_mva
    return np.array(y)


def injections(y, vm, va):
    """P_i, Q_i from the rectangular sum over neighbours."""
    n = len(vm)
    p = np.zeros(n)
    q = np.zeros(n)
    for i in range(n):
        for k in range(n):
            g, b = y[i, k].real, y[i, k].imag
            d = va[i] - va[k]
            p[i] += vm[i] * vm[k] * (g * math.cos(d) + b * math.sin(d))
            q[i] += vm[i] * vm[k] * (g * math.sin(d) - b * math.cos(d))
    return p, q


def newton_power_flow(y, p_spec, q_spec, vm0, ref, pv, tol=1e-12, max_iter=30):
    """Polar Newton-Raphson with a finite-difference Jacobian.

    ``p_spec``/``q_spec`` are net injections in pu; ``ref`` is the slack
    index, ``pv`` the voltage-controlled buses (their Q is free).
    """
    n = len(vm0)
    vm = np.array(vm0, dtype=float)
    va = np.zeros(n)
    pq = [i for i in range(n) if i != ref and i not in pv]
    ang_idx = [i for i in range(n) if i != ref]

    def mismatch(state):
        va_ = va.copy()
        vm_ = vm.copy()
        va_[ang_idx] = state[: len(ang_idx)]
        vm_[pq] = state[len(ang_idx) :]
        p, q = injections(y, vm_, va_)
        return np.concatenate([(p - p_spec)[ang_idx], (q - q_spec)[pq]])

    state = np.concatenate([va[ang_idx], vm[pq]])
    for _ in range(max_iter):
        f = mismatch(state)
        if np.max(np.abs(f)) < tol:
            break
        jac = np.empty((f.size, state.size))
        h = 1e-7
        for k in range(state.size):
            e = np.zeros(state.size)
            e[k] = h
            jac[:, k] = (mismatch(state + e) - mismatch(state - e)) / (2 * h)
        state = state - np.linalg.solve(jac, f)
    else:
        raise RuntimeError("Newton power flow did not converge")
    va[ang_idx] = state[: len(ang_idx)]
    vm[pq] = state[len(ang_idx) :]
    return vm, va


def branch_flows(case, vm, va):
    """Complex power at both ends of each in-service branch, pu."""
    pos = {b.id: k for k, b in enumerate(case.buses)}
    out = []
    for br in case.branches:
        if not br.in_service:
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        vi = cmath.rect(vm[i], va[i])
        vj = cmath.rect(vm[j], va[j])
        ys = 1 / complex(br.r, br.x)
        a = cmath.rect(br.tap, br.shift)
        bc = complex(0, br.b_charging / 2)
        # current through series element seen from the ideal transformer secondary
        i_series = (vi / a - vj) * ys
        i_from = (i_series + bc * vi / a) / a.conjugate()
        i_to = -i_series + bc * vj
        out.append((vi * i_from.conjugate(), vj * i_to.conjugate()))
    return out


def gini_bruteforce(values):
    x = list(values)
    n = len(x)
    total = sum(abs(a - b) for a in x for b in x)
    mean = sum(x) / n
    if mean == 0:
        return 0.0
    return total / (2 * n * (n - 1) * mean)


def qp_active_set_enumeration(q, c, a, b):
    """Global optimum of min 1/2 x'Qx + c'x s.t. Ax <= b (Q positive definite).

    Tries every subset of constraints as the active set and keeps the best
    KKT point with feasible primal and non-negative multipliers.
    """
    n = q.shape[0]
    m = a.shape[0]
    best = None
    for r in range(0, min(n, m) + 1):
        for act in itertools.combinations(range(m), r):
            act = list(act)
            aa = a[act]
            kkt = np.block([[q, aa.T], [aa, np.zeros((r, r))]])
            rhs = np.concatenate([-c, b[act]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(lam < -1e-10) or np.any(a @ x - b > 1e-10):
                continue
            val = 0.5 * x @ q @ x + c @ x
            if best is None or val < best[0]:
                best = (val, x)
    return best


def penalty_opf(objective, eq, ineq, lower, upper, x0, rho_schedule=(1e2, 1e4, 1e6, 1e8, 1e10)):
    """Quadratic-penalty method with projected quasi-Newton inner solves (L-BFGS-B).

    Slow but independent of the interior-point code: only function values
    are used, gradients come from finite differences inside scipy.
    """
    x = np.array(x0, dtype=float)
    bounds = list(zip(lower, upper))
    for rho in rho_schedule:
        def merit(z):
            g = eq(z)
            h = np.maximum(ineq(z), 0.0)
            return objective(z) + rho * (g @ g + h @ h)

        res = minimize(merit, x, method="L-BFGS-B", bounds=bounds, options={"maxiter": 20000, "maxfun": 400000, "ftol": 1e-15, "gtol": 1e-10})
        x = res.x
    return x
