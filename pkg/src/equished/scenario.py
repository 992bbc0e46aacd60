"""Study scenarios: load scaling, generator trips, and beta sweeps."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .case import NetworkCase
from .errors import EquishedError, ScenarioError, SolverError
from .problem import ShedSolution, assemble
from .solver import NUMERICAL_FAILURE, SolverOptions, solve

log = logging.getLogger(__name__)

# $/MWh penalty used in the 14-bus study
STUDY_PENALTY = 500000.0


@dataclass(frozen=True)
class ScenarioConfig:
    load_p_scale: float = 1.0
    load_q_scale: float = 1.0
    # 1-based positions in the case's generator list
    tripped_gens: tuple = ()
    shed_penalty: float = STUDY_PENALTY
    # None disables the equity constraint
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tripped_gens", tuple(int(g) for g in self.tripped_gens))
        if not self.load_p_scale > 0 or not self.load_q_scale > 0:
            raise ScenarioError("load scales must be positive")
        if not self.shed_penalty > 0:
            raise ScenarioError("shed penalty must be positive")
        if self.beta is not None and not self.beta >= 0:
            raise ScenarioError(f"beta must be non-negative, got {self.beta}")

    def with_beta(self, beta):
        return replace(self, beta=beta)

    def as_dict(self):
        return {
            "load_p_scale": self.load_p_scale,
            "load_q_scale": self.load_q_scale,
            "tripped_gens": list(self.tripped_gens),
            "shed_penalty": self.shed_penalty,
            "beta": self.beta,
        }


def study_config(beta=1.0, tripped=(1,)):
    """Doubled real demand, G1 tripped, $500000/MWh penalty."""
    return ScenarioConfig(load_p_scale=2.0, tripped_gens=tripped, shed_penalty=STUDY_PENALTY, beta=beta)


def apply_scenario(base: NetworkCase, cfg: ScenarioConfig) -> NetworkCase:
    ng = len(base.generators)
    for k in cfg.tripped_gens:
        if not 1 <= k <= ng:
            raise ScenarioError(f"generator {k} does not exist (case has {ng})")
    buses = [
        replace(b, p_demand=b.p_demand * cfg.load_p_scale, q_demand=b.q_demand * cfg.load_q_scale)
        for b in base.buses
    ]
    tripped = set(cfg.tripped_gens)
    gens = [replace(g, in_service=False) if k in tripped else g for k, g in enumerate(base.generators, start=1)]
    if not any(g.in_service for g in gens):
        raise ScenarioError("scenario trips every generator")
    return base.with_updates(buses=buses, generators=gens)


def solve_scenario(base: NetworkCase, cfg: ScenarioConfig, opts: SolverOptions | None = None) -> ShedSolution:
    case = apply_scenario(base, cfg)
    problem = assemble(case, cfg.beta, cfg.shed_penalty)
    outcome = solve(problem, problem.initial_point(), opts)
    if outcome.status == NUMERICAL_FAILURE:
        raise SolverError(f"solver failed for scenario {cfg.as_dict()}: {outcome.message}")
    sol = problem.make_solution(
        outcome.x_star, converged=outcome.converged, iterations=outcome.iterations, status=outcome.status
    )
    res = outcome.kkt_residuals
    sol.extra.update(
        {
            "scenario": cfg.as_dict(),
            "solver": {
                "status": outcome.status,
                "message": outcome.message,
                "iterations": outcome.iterations,
                "primal_residual": res.primal,
                "dual_residual": res.dual,
                "complementarity": res.complementarity,
                "objective_scale": outcome.obj_scale,
            },
        }
    )
    return sol


@dataclass(frozen=True)
class SweepRow:
    beta: float
    total_cost: float
    generation_cost: float
    total_shed: float
    ggc: float
    ori: np.ndarray
    converged: bool
    error: str = ""


@dataclass
class SweepResult:
    rows: list
    load_bus_ids: tuple = ()
    solutions: list = field(default_factory=list, repr=False)

    SUMMARY_COLUMNS = ("beta", "total_cost", "generation_cost", "total_shed_mw", "ggc", "converged")

    def converged_rows(self):
        return [r for r in self.rows if r.converged]

    def ori_matrix(self):
        """Rows = load buses, columns = beta values."""
        return np.column_stack([r.ori for r in self.rows]) if self.rows else np.zeros((0, 0))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.SUMMARY_COLUMNS)
            for r in self.rows:
                w.writerow(
                    [repr(r.beta), repr(r.total_cost), repr(r.generation_cost), repr(r.total_shed), repr(r.ggc), int(r.converged)]
                )

    def write_ori_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bus"] + [repr(r.beta) for r in self.rows])
            mat = self.ori_matrix()
            for k, bus in enumerate(self.load_bus_ids):
                w.writerow([bus] + [repr(float(v)) for v in mat[k]])


def _sweep_point(args):
    base, cfg, opts = args
    try:
        return solve_scenario(base, cfg, opts), ""
    except EquishedError as exc:
        return None, str(exc)


def parse_beta_grid(spec: str):
    """``"start:step:end"`` (inclusive) or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"beta grid must be start:step:end, got {spec!r}")
        start, step, end = (float(p) for p in parts)
        if step <= 0 or end < start:
            raise ValueError(f"empty beta grid {spec!r}")
        n = int(np.floor((end - start) / step + 1e-9))
        return [round(start + k * step, 12) for k in range(n + 1)]
    values = [float(v) for v in spec.split(",") if v.strip()]
    if not values:
        raise ValueError("empty beta grid")
    return values


def sweep_beta(base, cfg: ScenarioConfig, beta_grid, opts=None, max_workers=1) -> SweepResult:
    """One independent solve per beta; failures are recorded, not raised."""
    grid = sorted(float(b) for b in beta_grid)
    if not grid:
        raise ScenarioError("beta grid is empty")
    if any(b < 0 for b in grid):
        raise ScenarioError("beta values must be non-negative")
    jobs = [(base, cfg.with_beta(b), opts) for b in grid]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]

    case = apply_scenario(base, cfg)
    loads = tuple(case.buses[i].id for i in case.load_ordinals)
    rows, sols = [], []
    for beta, (sol, err) in zip(grid, results):
        if sol is None:
            log.warning("beta=%g failed: %s", beta, err)
            rows.append(SweepRow(beta, np.nan, np.nan, np.nan, np.nan, np.full(len(loads), np.nan), False, err))
        else:
            rows.append(
                SweepRow(
                    beta=beta,
                    total_cost=sol.total_cost,
                    generation_cost=sol.generation_cost,
                    total_shed=sol.total_shed,
                    ggc=sol.equity.ggc,
                    ori=sol.equity.ori,
                    converged=sol.converged,
                )
            )
        sols.append(sol)
    return SweepResult(rows=rows, load_bus_ids=loads, solutions=sols)
