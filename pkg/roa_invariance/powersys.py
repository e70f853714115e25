# roa_invariance/powersys.py
"""Network data, Newton-Raphson power flow and Kron reduction onto the
internal nodes of classical (constant voltage behind x'd) machines.

Case files are JSON:

    {"name": ..., "base_mva": 100, "frequency_hz": 50,
     "buses":    [{"id", "type": slack|PV|PQ, "vm", "p_load", "q_load"}],
     "branches": [{"from", "to", "r", "x", "b", "tap", "in_service"}],
     "machines": [{"bus", "h", "d", "xd_prime", "p_mech"}]}

Powers are in pu on base_mva; p_mech is the PV active setpoint and is
ignored for the slack machine.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    CaseSchemaError,
    ContingencyError,
    DisconnectedNetworkError,
    MissingSlackError,
    PowerFlowDiverged,
    ReductionFailed,
)

log = logging.getLogger("powersys")

CASES_DIR = Path(__file__).resolve().parent / "cases"
PF_MAX_ITER = 50
PIVOT_FLOOR = 1e-12


class BusType(str, Enum):
    SLACK = "slack"
    PV = "PV"
    PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    id: int
    type: BusType
    vm: float = 1.0
    p_load: float = 0.0
    q_load: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    in_service: bool = True

    @property
    def ends(self) -> frozenset[int]:
        return frozenset((self.from_bus, self.to_bus))

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Machine:
    bus: int
    h: float
    d: float  # pu power per pu speed deviation
    xd_prime: float
    p_mech: float | None = None


@dataclass(frozen=True)
class PowerCase:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    machines: tuple[Machine, ...]
    base_mva: float = 100.0
    frequency_hz: float = 60.0

    def __post_init__(self):
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseSchemaError(f"{self.name}: duplicate bus ids")
        slacks = [bus.id for bus in self.buses if bus.type is BusType.SLACK]
        if len(slacks) > 1:
            raise CaseSchemaError(f"{self.name}: exactly one slack bus allowed, found {slacks}")
        if not slacks:
            raise MissingSlackError(f"{self.name}: no slack bus")
        known = set(ids)
        for branch in self.branches:
            if branch.from_bus not in known or branch.to_bus not in known:
                raise CaseSchemaError(f"{self.name}: branch {branch.label} references an unknown bus")
            if branch.from_bus == branch.to_bus:
                raise CaseSchemaError(f"{self.name}: branch {branch.label} is a self loop")
            if branch.r == 0.0 and branch.x == 0.0:
                raise CaseSchemaError(f"{self.name}: branch {branch.label} has zero impedance")
            if not branch.tap > 0:
                raise CaseSchemaError(f"{self.name}: branch {branch.label} has tap {branch.tap}")
        machine_buses = [m.bus for m in self.machines]
        if not machine_buses:
            raise CaseSchemaError(f"{self.name}: no machines")
        if len(set(machine_buses)) != len(machine_buses):
            raise CaseSchemaError(f"{self.name}: more than one machine on a bus")
        for machine in self.machines:
            if machine.bus not in known:
                raise CaseSchemaError(f"{self.name}: machine references unknown bus {machine.bus}")
            if not (machine.h > 0 and machine.xd_prime > 0):
                raise CaseSchemaError(f"{self.name}: machine at bus {machine.bus} needs H > 0 and x'd > 0")
            if machine.d < 0:
                raise CaseSchemaError(f"{self.name}: machine at bus {machine.bus} has negative damping")
        if not (self.base_mva > 0 and self.frequency_hz > 0):
            raise CaseSchemaError(f"{self.name}: base_mva and frequency_hz must be positive")
        if not is_connected(self):
            raise DisconnectedNetworkError(f"{self.name}: in-service branch graph is not connected")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def omega_s(self) -> float:
        return 2.0 * np.pi * self.frequency_hz

    def bus_index(self) -> dict[int, int]:
        return {bus.id: k for k, bus in enumerate(self.buses)}

    @property
    def slack(self) -> Bus:
        return next(bus for bus in self.buses if bus.type is BusType.SLACK)

    def find_branch(self, a: int, b: int) -> Branch | None:
        ends = frozenset((a, b))
        for branch in self.branches:
            if branch.in_service and branch.ends == ends:
                return branch
        return None


def _graph_components(n_bus: int, index: dict[int, int], branches) -> int:
    rows = [index[br.from_bus] for br in branches]
    cols = [index[br.to_bus] for br in branches]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_bus, n_bus))
    n_components, _ = connected_components(graph, directed=False)
    return n_components


def is_connected(case: PowerCase, without: Branch | None = None) -> bool:
    live = [br for br in case.branches if br.in_service and br is not without]
    return _graph_components(case.n_bus, case.bus_index(), live) == 1


# --- loading ---
def _require(record: Mapping[str, Any], key: str, where: str):
    if key not in record:
        raise CaseSchemaError(f"{where}: missing key {key!r}")
    return record[key]


def case_from_dict(data: Mapping[str, Any], name: str = "case") -> PowerCase:
    if not isinstance(data, Mapping):
        raise CaseSchemaError("case document must be a JSON object")
    name = str(data.get("name", name))
    try:
        buses = tuple(
            Bus(
                id=int(_require(rec, "id", "bus")),
                type=BusType(_require(rec, "type", "bus")),
                vm=float(rec.get("vm", 1.0)),
                p_load=float(rec.get("p_load", 0.0)),
                q_load=float(rec.get("q_load", 0.0)),
            )
            for rec in _require(data, "buses", name)
        )
        branches = tuple(
            Branch(
                from_bus=int(_require(rec, "from", "branch")),
                to_bus=int(_require(rec, "to", "branch")),
                r=float(_require(rec, "r", "branch")),
                x=float(_require(rec, "x", "branch")),
                b=float(rec.get("b", 0.0)),
                tap=float(rec.get("tap") or 1.0),
                in_service=bool(rec.get("in_service", True)),
            )
            for rec in _require(data, "branches", name)
        )
        machines = tuple(
            Machine(
                bus=int(_require(rec, "bus", "machine")),
                h=float(_require(rec, "h", "machine")),
                d=float(rec.get("d", 0.0)),
                xd_prime=float(_require(rec, "xd_prime", "machine")),
                p_mech=None if rec.get("p_mech") is None else float(rec["p_mech"]),
            )
            for rec in _require(data, "machines", name)
        )
        base_mva = float(_require(data, "base_mva", name))
        frequency = float(_require(data, "frequency_hz", name))
    except (AttributeError, TypeError, ValueError) as exc:
        if isinstance(exc, CaseSchemaError):
            raise
        raise CaseSchemaError(f"{name}: {exc}") from exc
    return PowerCase(name, buses, branches, machines, base_mva, frequency)


def bundled_case_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    return CASES_DIR / f"{stem}.json"


def load_case(path: str | Path) -> PowerCase:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseSchemaError(f"{path}: not valid JSON ({exc})") from exc
    case = case_from_dict(data, name=path.stem)
    log.info(f"loaded case {case.name}: {case.n_bus} buses, {len(case.branches)} branches, "
             f"{len(case.machines)} machines")
    return case


# --- network matrices ---
def bus_admittance(case: PowerCase, skip: Branch | None = None) -> np.ndarray:
    """Dense Ybus from in-service branches, pi model with the tap on the from side."""
    index = case.bus_index()
    y_bus = np.zeros((case.n_bus, case.n_bus), dtype=complex)
    for br in case.branches:
        if not br.in_service or br is skip:
            continue
        f, t = index[br.from_bus], index[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        charging = 0.5j * br.b
        y_bus[f, f] += (y + charging) / (br.tap * br.tap)
        y_bus[t, t] += y + charging
        y_bus[f, t] -= y / br.tap
        y_bus[t, f] -= y / br.tap
    return y_bus


@dataclass(frozen=True)
class PowerFlowSolution:
    voltages: np.ndarray
    injections: np.ndarray
    iterations: int
    mismatch: float


def _specified(case: PowerCase) -> np.ndarray:
    s = np.array([-complex(bus.p_load, bus.q_load) for bus in case.buses])
    index = case.bus_index()
    for machine in case.machines:
        k = index[machine.bus]
        if case.buses[k].type is not BusType.SLACK and machine.p_mech is not None:
            s[k] += machine.p_mech
    return s


def power_flow(case: PowerCase, tol: float = 1e-8, max_iter: int = PF_MAX_ITER) -> PowerFlowSolution:
    """Full Newton-Raphson in polar form; slack angle is zero."""
    y_bus = bus_admittance(case)
    s_spec = _specified(case)
    types = [bus.type for bus in case.buses]
    pv = np.array([k for k, t in enumerate(types) if t is BusType.PV], dtype=int)
    pq = np.array([k for k, t in enumerate(types) if t is BusType.PQ], dtype=int)
    pvpq = np.r_[pv, pq]
    vm = np.array([bus.vm if bus.type is not BusType.PQ else 1.0 for bus in case.buses])
    va = np.zeros(case.n_bus)

    def mismatch(v: np.ndarray) -> np.ndarray:
        mis = v * np.conj(y_bus @ v) - s_spec
        return np.r_[mis[pvpq].real, mis[pq].imag]

    v = vm * np.exp(1j * va)
    f = mismatch(v)
    error = float(np.max(np.abs(f), initial=0.0))
    iteration = 0
    while error > tol:
        if iteration >= max_iter or not np.isfinite(error):
            log.warning(f"{case.name}: power flow stopped after {iteration} iterations, mismatch {error:.3e}")
            raise PowerFlowDiverged(f"power flow did not converge (mismatch {error:.3e})", error, iteration)
        current = y_bus @ v
        d_vm = np.diag(v) @ np.conj(y_bus @ np.diag(v / np.abs(v))) + np.conj(np.diag(current)) @ np.diag(v / np.abs(v))
        d_va = 1j * np.diag(v) @ np.conj(np.diag(current) - y_bus @ np.diag(v))
        jac = np.block([
            [d_va[np.ix_(pvpq, pvpq)].real, d_vm[np.ix_(pvpq, pq)].real],
            [d_va[np.ix_(pq, pvpq)].imag, d_vm[np.ix_(pq, pq)].imag],
        ])
        dx = np.linalg.solve(jac, -f)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        v = vm * np.exp(1j * va)
        f = mismatch(v)
        error = float(np.max(np.abs(f), initial=0.0))
        iteration += 1
    log.debug(f"{case.name}: power flow converged in {iteration} iterations, mismatch {error:.3e}")
    return PowerFlowSolution(v, v * np.conj(y_bus @ v), iteration, error)


# --- contingencies ---
_CONTINGENCY = re.compile(r"^\s*bus:(\d+)\s*,\s*line:(\d+)-(\d+)\s*$")


@dataclass(frozen=True)
class Contingency:
    faulted_bus: int
    tripped_branch: tuple[int, int]

    @classmethod
    def parse(cls, spec: str) -> "Contingency":
        """'bus:8,line:8-9' -> Contingency(8, (8, 9))."""
        match = _CONTINGENCY.match(spec)
        if match is None:
            raise ContingencyError(f"bad contingency {spec!r}; expected bus:N,line:A-B")
        bus, a, b = (int(g) for g in match.groups())
        if bus not in (a, b):
            raise ContingencyError(f"faulted bus {bus} is not an end of line {a}-{b}")
        return cls(bus, (a, b))

    @property
    def line_label(self) -> str:
        return f"{self.tripped_branch[0]}-{self.tripped_branch[1]}"

    def __str__(self) -> str:
        return f"bus:{self.faulted_bus},line:{self.line_label}"

    def branch(self, case: PowerCase) -> Branch:
        branch = case.find_branch(*self.tripped_branch)
        if branch is None:
            raise ContingencyError(f"{case.name}: no in-service branch {self.line_label}")
        if self.faulted_bus not in branch.ends:
            raise ContingencyError(f"faulted bus {self.faulted_bus} is not an end of {self.line_label}")
        return branch


class ReductionKind(str, Enum):
    PRE_FAULT = "pre_fault"
    FAULT_ON = "fault_on"
    POST_FAULT = "post_fault"


@dataclass(frozen=True)
class ReductionVariant:
    kind: ReductionKind
    contingency: Contingency | None = None

    def __post_init__(self):
        if (self.kind is ReductionKind.PRE_FAULT) != (self.contingency is None):
            raise ContingencyError(f"{self.kind.value} reduction {'takes no' if self.contingency else 'needs a'} contingency")

    @classmethod
    def pre_fault(cls) -> "ReductionVariant":
        return cls(ReductionKind.PRE_FAULT)

    @classmethod
    def fault_on(cls, contingency: Contingency) -> "ReductionVariant":
        return cls(ReductionKind.FAULT_ON, contingency)

    @classmethod
    def post_fault(cls, contingency: Contingency) -> "ReductionVariant":
        return cls(ReductionKind.POST_FAULT, contingency)

    def __str__(self) -> str:
        return self.kind.value if self.contingency is None else f"{self.kind.value}({self.contingency})"


@dataclass(frozen=True)
class ReducedSystem:
    y_reduced: np.ndarray
    e_internal: np.ndarray
    p_mech: np.ndarray
    m_inertia: np.ndarray
    d_damp: np.ndarray
    machine_buses: tuple[int, ...]
    variant: str = ReductionKind.PRE_FAULT.value

    @property
    def n_mach(self) -> int:
        return len(self.machine_buses)

    @property
    def e_magnitude(self) -> np.ndarray:
        return np.abs(self.e_internal)

    @property
    def initial_angles(self) -> np.ndarray:
        """Internal angles of the pre-fault operating point."""
        return np.angle(self.e_internal)

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.y_reduced - self.y_reduced.T)))


def with_damping(system: ReducedSystem, d) -> ReducedSystem:
    """Copy with damping d (pu power per rad/s, as stored in d_damp)."""
    d = np.broadcast_to(np.asarray(d, dtype=float), (system.n_mach,)).copy()
    return replace(system, d_damp=d)


def without_transfer_conductances(system: ReducedSystem) -> ReducedSystem:
    """Drop G_ij for i != j; the self conductance stays as a constant local load."""
    y = 1j * system.y_reduced.imag
    y[np.diag_indices(system.n_mach)] += np.real(np.diag(system.y_reduced))
    return replace(system, y_reduced=y)


def kron_reduce(case: PowerCase, solution: PowerFlowSolution,
                variant: ReductionVariant | None = None, lossless: bool = False) -> ReducedSystem:
    """Y_red = Y_gg - Y_gl Y_ll^-1 Y_lg over machine internal nodes."""
    variant = variant or ReductionVariant.pre_fault()
    index = case.bus_index()
    v = solution.voltages

    skip = None
    if variant.contingency is not None:
        skip = variant.contingency.branch(case)
    y_bus = bus_admittance(case, skip if variant.kind is ReductionKind.POST_FAULT else None)
    loads = np.array([complex(bus.p_load, -bus.q_load) for bus in case.buses]) / np.abs(v) ** 2
    y_bus[np.diag_indices(case.n_bus)] += loads

    n_mach = len(case.machines)
    mach_rows = np.array([index[m.bus] for m in case.machines])
    y_int = 1.0 / (1j * np.array([m.xd_prime for m in case.machines]))

    # machine currents from the pre-fault operating point
    s_gen = solution.injections[mach_rows] + np.array([complex(case.buses[k].p_load, case.buses[k].q_load) for k in mach_rows])
    current = np.conj(s_gen / v[mach_rows])
    e_internal = v[mach_rows] + 1j * np.array([m.xd_prime for m in case.machines]) * current

    size = case.n_bus + n_mach
    y_full = np.zeros((size, size), dtype=complex)
    y_full[: case.n_bus, : case.n_bus] = y_bus
    internal = case.n_bus + np.arange(n_mach)
    y_full[internal, internal] += y_int
    y_full[mach_rows, mach_rows] += y_int
    y_full[internal, mach_rows] -= y_int
    y_full[mach_rows, internal] -= y_int

    network = list(range(case.n_bus))
    if variant.kind is ReductionKind.FAULT_ON:
        network.remove(index[variant.contingency.faulted_bus])
    network = np.array(network, dtype=int)
    y_gg = y_full[np.ix_(internal, internal)]
    y_gl = y_full[np.ix_(internal, network)]
    y_ll = y_full[np.ix_(network, network)]

    _, _, upper = scipy.linalg.lu(y_ll)
    pivots = np.abs(np.diag(upper))
    if pivots.size and pivots.min() <= PIVOT_FLOOR * max(1.0, pivots.max()):
        node = case.buses[network[int(np.argmin(pivots))]].id
        raise ReductionFailed(f"{case.name} {variant}: singular network matrix at bus {node}", node)
    y_lg = y_full[np.ix_(network, internal)]
    y_red = y_gg - y_gl @ scipy.linalg.solve(y_ll, y_lg)
    y_red = 0.5 * (y_red + y_red.T)
    if lossless:
        y_red = 1j * y_red.imag

    system = ReducedSystem(
        y_reduced=y_red,
        e_internal=e_internal,
        p_mech=s_gen.real.copy(),
        m_inertia=np.array([2.0 * m.h / case.omega_s for m in case.machines]),
        d_damp=np.array([m.d / case.omega_s for m in case.machines]),
        machine_buses=tuple(m.bus for m in case.machines),
        variant=str(variant),
    )
    log.debug(f"{case.name}: reduced {variant} to {n_mach} internal nodes")
    return system


def reduce_all(case: PowerCase, contingency: Contingency, solution: PowerFlowSolution | None = None,
               lossless: bool = False) -> tuple[ReducedSystem, ReducedSystem, ReducedSystem]:
    """Pre-fault, fault-on and post-fault reductions of one contingency."""
    solution = solution or power_flow(case)
    return (
        kron_reduce(case, solution, ReductionVariant.pre_fault(), lossless),
        kron_reduce(case, solution, ReductionVariant.fault_on(contingency), lossless),
        kron_reduce(case, solution, ReductionVariant.post_fault(contingency), lossless),
    )
