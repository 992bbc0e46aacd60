"""Grid data model, per-unit helpers and nodal admittance matrix."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import TopologyError, ValidationError


def to_pu(value, base_mva):
    """MW / MVAr -> per-unit on ``base_mva``."""
    return np.divide(value, base_mva)


def from_pu(value, base_mva):
    """Per-unit -> MW / MVAr on ``base_mva``."""
    return np.multiply(value, base_mva)


@dataclass(frozen=True)
class Bus:
    id: int
    p_demand: float = 0.0
    q_demand: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    is_reference: bool = False


@dataclass(frozen=True)
class Generator:
    at_bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    # highest order first, as in np.polyval; P in MW, result in $/h
    cost_coeffs: tuple = (0.0,)
    in_service: bool = True

    def cost(self, p_mw):
        return float(np.polyval(self.cost_coeffs, p_mw))


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    rate: float = 0.0
    in_service: bool = True

    def admittances(self):
        """Return ``(yff, yft, ytf, ytt)`` of the branch pi-model in pu."""
        ys = 1.0 / complex(self.r, self.x)
        t = self.tap * np.exp(1j * self.shift)
        ytt = ys + 0.5j * self.b_charging
        yff = ytt / (self.tap * self.tap)
        yft = -ys / np.conj(t)
        ytf = -ys / t
        return yff, yft, ytf, ytt


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple
    generators: tuple
    branches: tuple
    name: str = ""

    def __post_init__(self):
        # accept lists from callers but store tuples so the case stays hashable
        for attr in ("buses", "generators", "branches"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        self.validate()

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def bus_ids(self):
        return tuple(b.id for b in self.buses)

    @property
    def ordinal(self):
        """Map external bus id -> internal ordinal."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def reference_ordinal(self):
        return next(i for i, b in enumerate(self.buses) if b.is_reference)

    @property
    def active_generators(self):
        return tuple(g for g in self.generators if g.in_service)

    @property
    def active_branches(self):
        return tuple(br for br in self.branches if br.in_service)

    @property
    def load_ordinals(self):
        """Ordinals of buses with positive real demand (the equity subregions)."""
        return tuple(i for i, b in enumerate(self.buses) if b.p_demand > 0)

    def total_demand(self):
        return sum(b.p_demand for b in self.buses)

    def total_capacity(self):
        return sum(g.p_max for g in self.active_generators)

    def with_updates(self, **changes):
        return replace(self, **changes)

    def validate(self):
        if self.base_mva <= 0:
            raise ValidationError(f"base_mva must be positive, got {self.base_mva}")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate bus ids")
        for b in self.buses:
            if not isinstance(b.id, (int, np.integer)) or b.id <= 0:
                raise ValidationError(f"bus id must be a positive integer, got {b.id!r}")
            if not 0 < b.v_min <= b.v_max:
                raise ValidationError(
                    f"bus {b.id}: need 0 < v_min <= v_max, got v_min={b.v_min}, v_max={b.v_max}"
                )
        n_ref = sum(1 for b in self.buses if b.is_reference)
        if self.buses and n_ref != 1:
            raise ValidationError(f"exactly one reference bus required, found {n_ref}")
        known = set(ids)
        for k, g in enumerate(self.generators, start=1):
            if g.at_bus not in known:
                raise ValidationError(f"generator {k} references unknown bus {g.at_bus}")
            if g.p_min > g.p_max:
                raise ValidationError(f"generator {k}: p_min > p_max")
            if g.q_min > g.q_max:
                raise ValidationError(f"generator {k}: q_min > q_max")
            if not 1 <= len(g.cost_coeffs) <= 3:
                raise ValidationError(f"generator {k}: cost polynomial must have 1-3 coefficients")
            if len(g.cost_coeffs) == 3 and g.cost_coeffs[0] < 0:
                raise ValidationError(f"generator {k}: negative quadratic cost coefficient")
        for k, br in enumerate(self.branches, start=1):
            if br.from_bus not in known or br.to_bus not in known:
                raise ValidationError(
                    f"branch {k} references unknown bus ({br.from_bus}, {br.to_bus})"
                )
            if br.from_bus == br.to_bus:
                raise ValidationError(f"branch {k} connects bus {br.from_bus} to itself")
            if br.r == 0 and br.x == 0:
                raise ValidationError(f"branch {k} has zero impedance")
            if br.tap <= 0:
                raise ValidationError(f"branch {k}: tap must be positive")

    def check_connected(self):
        n = self.n_bus
        if n <= 1:
            return
        idx = self.ordinal
        rows = [idx[br.from_bus] for br in self.active_branches]
        cols = [idx[br.to_bus] for br in self.active_branches]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_comp, labels = connected_components(graph, directed=False)
        if n_comp > 1:
            island = [self.buses[i].id for i in np.flatnonzero(labels != labels[self.reference_ordinal])]
            raise TopologyError(f"network is disconnected; buses {island} are islanded")


@dataclass(frozen=True)
class AdmittanceMatrix:
    n: int
    g: np.ndarray
    b: np.ndarray
    ids: tuple = field(default=())

    @property
    def complex(self):
        return self.g + 1j * self.b


def _freeze(a):
    a.setflags(write=False)
    return a


def branch_matrices(case: NetworkCase, branches: Sequence[Branch] | None = None):
    """Branch-to-bus admittance matrices ``(Yf, Yt)`` so that If = Yf V, It = Yt V."""
    if branches is None:
        branches = case.active_branches
    idx = case.ordinal
    nl, nb = len(branches), case.n_bus
    yf = np.zeros((nl, nb), dtype=complex)
    yt = np.zeros((nl, nb), dtype=complex)
    for k, br in enumerate(branches):
        f, t = idx[br.from_bus], idx[br.to_bus]
        yff, yft, ytf, ytt = br.admittances()
        yf[k, f] += yff
        yf[k, t] += yft
        yt[k, f] += ytf
        yt[k, t] += ytt
    return yf, yt


def build_ybus(case: NetworkCase) -> AdmittanceMatrix:
    """Nodal admittance matrix of the in-service network, split into G and B."""
    nb = case.n_bus
    idx = case.ordinal
    y = np.zeros((nb, nb), dtype=complex)
    for br in case.active_branches:
        f, t = idx[br.from_bus], idx[br.to_bus]
        yff, yft, ytf, ytt = br.admittances()
        y[f, f] += yff
        y[f, t] += yft
        y[t, f] += ytf
        y[t, t] += ytt
    for i, bus in enumerate(case.buses):
        y[i, i] += complex(bus.shunt_g, bus.shunt_b) / case.base_mva
    return AdmittanceMatrix(
        n=nb, g=_freeze(y.real.copy()), b=_freeze(y.imag.copy()), ids=case.bus_ids
    )
