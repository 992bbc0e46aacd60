"""Outage risk index, grid Gini coefficient and its linear constraint form.

Each bus with positive real demand is one subregion.  The outage risk
index of a subregion is the fraction of its demand that is shed; the grid
Gini coefficient is the mean absolute pairwise difference of those
fractions, normalized so that shedding concentrated on a single bus
scores exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class EquityReport:
    ori: np.ndarray
    ori_mean: float
    ggc: float
    n_subregions: int
    bus_ids: tuple = ()

    def as_dict(self):
        return {
            "ori": {str(b): float(v) for b, v in zip(self.bus_ids, self.ori)},
            "ori_mean": self.ori_mean,
            "ggc": self.ggc,
            "n_subregions": self.n_subregions,
        }


def compute_ori(p_shed, p_demand):
    """Elementwise shed fraction ``p_shed / p_demand``."""
    p_shed = np.asarray(p_shed, dtype=float)
    p_demand = np.asarray(p_demand, dtype=float)
    if p_shed.shape != p_demand.shape:
        raise DomainError(f"shape mismatch: shed {p_shed.shape} vs demand {p_demand.shape}")
    bad = np.flatnonzero(~(p_demand > 0))
    if bad.size:
        raise DomainError(
            f"non-positive demand at position(s) {bad.tolist()}; such buses are not load buses"
        )
    return p_shed / p_demand


def pairwise_abs_sum(values):
    """``sum_i sum_j |x_i - x_j|`` in O(n log n).

    After sorting, the k-th gap ``x[k] - x[k-1]`` is crossed by exactly
    ``k * (n - k)`` unordered pairs.  Summing gaps keeps equal inputs at
    exactly zero, which the rank-weighted form does not.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n < 2:
        return 0.0
    k = np.arange(1, n)
    return float(2.0 * np.sum(np.diff(x) * (k * (n - k))))


def compute_ggc(ori) -> float:
    ori = np.asarray(ori, dtype=float)
    n = ori.size
    if n < 2:
        raise DomainError(f"grid Gini coefficient needs at least 2 subregions, got {n}")
    if np.any(ori < 0):
        raise DomainError("outage risk indices must be non-negative")
    total = float(ori.sum())
    if total == 0.0:
        return 0.0
    # n * ORI_mean == sum(ori); dividing by the sum avoids rounding the mean
    return pairwise_abs_sum(ori) / (2.0 * (n - 1) * total)


@dataclass(frozen=True)
class EquityLinearization:
    """Linear rows replacing ``GGC <= beta`` with auxiliary pair variables.

    For every pair ``i < j`` of load buses:

        z_plus[k] - z_minus[k] - (s_i / d_i - s_j / d_j) = 0

    plus one budget inequality

        2 * sum(z_plus + z_minus) - 2 * beta * (n - 1) * sum(s_i / d_i) <= 0

    where the right-hand side equals ``beta * 2n(n-1) * ORI_mean``.  Shed
    ``s`` and demand ``d`` must share a unit; the rows are scale free.
    """

    demand: np.ndarray
    beta: float
    pair_index: tuple
    coupling_shed: np.ndarray  # (n_pairs, n) coefficients on shed
    budget_shed: np.ndarray  # (n,)
    budget_z: float  # coefficient on every z_plus and z_minus entry

    @property
    def n(self):
        return self.demand.size

    @property
    def aux_count(self):
        return len(self.pair_index)

    def coupling_residual(self, shed, z_plus, z_minus):
        return np.asarray(z_plus) - np.asarray(z_minus) + self.coupling_shed @ np.asarray(shed)

    def budget_value(self, shed, z_plus, z_minus):
        return float(self.budget_z * (np.sum(z_plus) + np.sum(z_minus)) + self.budget_shed @ np.asarray(shed))

    def minimal_z(self, shed):
        """Smallest non-negative ``(z_plus, z_minus)`` satisfying the coupling rows."""
        diff = -(self.coupling_shed @ np.asarray(shed, dtype=float))
        return np.maximum(diff, 0.0), np.maximum(-diff, 0.0)

    def is_feasible(self, shed, tol=0.0):
        zp, zm = self.minimal_z(shed)
        return self.budget_value(shed, zp, zm) <= tol


def build_equity_linearization(demand, beta) -> EquityLinearization:
    demand = np.asarray(demand, dtype=float)
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    if np.any(~(demand > 0)):
        raise DomainError("all load-bus demands must be positive")
    n = demand.size
    pairs = tuple(combinations(range(n), 2))
    coupling = np.zeros((len(pairs), n))
    for k, (i, j) in enumerate(pairs):
        coupling[k, i] = -1.0 / demand[i]
        coupling[k, j] = 1.0 / demand[j]
    budget_shed = -2.0 * beta * (n - 1) / demand
    for a in (demand, coupling, budget_shed):
        a.setflags(write=False)
    return EquityLinearization(
        demand=demand,
        beta=float(beta),
        pair_index=pairs,
        coupling_shed=coupling,
        budget_shed=budget_shed,
        budget_z=2.0,
    )


def equity_report(p_shed, case) -> EquityReport:
    """ORI, mean and grid Gini of a shed vector aligned with ``case.load_ordinals``."""
    loads = case.load_ordinals
    demand = np.array([case.buses[i].p_demand for i in loads])
    ori = compute_ori(p_shed, demand)
    n = ori.size
    if n == 0:
        mean, ggc = 0.0, 0.0
    else:
        mean = float(ori.mean())
        # a lone subregion has no pairwise disparity
        ggc = compute_ggc(np.clip(ori, 0.0, None)) if n >= 2 else 0.0
    return EquityReport(
        ori=ori,
        ori_mean=mean,
        ggc=ggc,
        n_subregions=n,
        bus_ids=tuple(case.buses[i].id for i in loads),
    )
