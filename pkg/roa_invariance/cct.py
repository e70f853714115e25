# roa_invariance/cct.py
"""Critical clearing time: the post-fault angle polytope, the first-exit scan
over a fault-on trajectory, and a time-domain bisection oracle.

The scan gates every fault-on sample twice: its angles must lie in Omega_e and
its post-fault energy must sit below the least potential on the boundary of
Omega_e. A sample passing both cannot leave Omega_e after clearing.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import partial
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .dynsys import DecomposedField, IntegratorConfig, Method, Trajectory, integrate, rk4_steps
from .errors import (
    ConfigError,
    ContingencyUnstable,
    EmptyIntersection,
    IntegrationDiverged,
    NoEquilibriumFound,
    NoPostFaultSep,
    ProjectionError,
    RoaError,
)
from .invariance import AffineLimit, CandidateRoa, IndividualInvariantSet, build_candidate
from .polytope import MEMBERSHIP_TOL, HalfspacePolytope
from .powersys import (
    Contingency,
    PowerCase,
    ReducedSystem,
    is_connected,
    power_flow,
    reduce_all,
    without_transfer_conductances,
)
from .swing import (
    SynchronousState,
    angle_potential,
    coi_kinetic_energy,
    reduced_angle_field,
    swing_system,
    synchronous_equilibrium,
)

log = logging.getLogger("cct")

SEPARATION_LIMIT = np.pi
PAIR_REACH_FLOOR = 0.25
BARRIER_SAMPLES = 64
BARRIER_REFINE = 2
FACET_TOL = 1e-7


class CctStatus(str, Enum):
    OK = "ok"
    POLYTOPE_EMPTY = "polytope_empty"
    NEVER_EXITS = "never_exits"
    INITIALLY_OUTSIDE = "initially_outside"
    TRAJECTORY_ENDED = "trajectory_ended"
    FAILED = "failed"


@dataclass(frozen=True)
class CctSettings:
    dt: float = 1e-3
    t_max: float = 5.0
    tol: float = 1e-3
    lossless: bool = False
    transfer_conductances: bool = False
    per_angle_bounds: bool = True
    uep_bounds: bool = True
    pf_tol: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_max > self.dt:
            raise ConfigError(f"t_max ({self.t_max}) must exceed dt ({self.dt})")
        if self.tol < self.dt * (1 - 1e-9):
            raise ConfigError(f"oracle tolerance {self.tol} is finer than dt {self.dt}")


@dataclass(frozen=True)
class CctResult:
    contingency: Contingency | None
    t_c_polytope: float | None
    t_c_oracle: float | None
    exit_state: tuple[float, ...] | None
    dt: float
    status: CctStatus
    oracle_flag: str = ""
    message: str = ""

    @property
    def conservative(self) -> bool | None:
        if self.t_c_polytope is None or self.t_c_oracle is None:
            return None
        return self.t_c_polytope <= self.t_c_oracle + 1e-9


# --- polytope ---
def pair_reach(shift: float, uep_bounds: bool = True) -> tuple[float, float]:
    """How far z_i - z_j may move above and below its equilibrium value.

    ``shift`` is the equilibrium separation of the pair. With ``uep_bounds`` the
    side the pair leans towards stops at the two-machine unstable point, pi - 2|shift|
    away, floored at PAIR_REACH_FLOOR.
    """
    if not uep_bounds:
        return np.pi, np.pi
    up = max(np.pi - 2.0 * max(shift, 0.0), PAIR_REACH_FLOOR)
    down = max(np.pi - 2.0 * max(-shift, 0.0), PAIR_REACH_FLOOR)
    return up, down


def build_power_roa(system: ReducedSystem, guess=None, per_angle_bounds: bool = True,
                    uep_bounds: bool = True) -> CandidateRoa:
    """Bounds on (d_i1 - ds_i1) - (d_j1 - ds_j1) over machine pairs 2..n, optionally on
    d_i1 - ds_i1 as well, all centred at the post-fault equilibrium ds.

    Each bound is pi, or the reach given by ``pair_reach`` with ``uep_bounds``.
    """
    try:
        sep = synchronous_equilibrium(system, guess)
    except NoEquilibriumFound as exc:
        raise NoPostFaultSep(f"no post-fault equilibrium for {system.variant}: {exc}") from exc
    centre = sep.relative
    dim = system.n_mach - 1
    eye = np.eye(dim)
    sets = []
    for i, j in combinations(range(dim), 2):
        row = eye[i] - eye[j]
        shift = centre[i] - centre[j]
        up, down = pair_reach(shift, uep_bounds)
        sets.append(IndividualInvariantSet(
            HalfspacePolytope(np.vstack([row, -row]), [up + shift, down - shift]),
            AffineLimit(row[None, :], [shift], description=f"d{i + 2}1 - d{j + 2}1 = {shift:.6g}"),
            f"pair{i + 2}{j + 2}",
        ))
    if per_angle_bounds:
        for i in range(dim):
            up, down = pair_reach(centre[i], uep_bounds)
            sets.append(IndividualInvariantSet(
                HalfspacePolytope(np.vstack([eye[i], -eye[i]]), [up + centre[i], down - centre[i]]),
                AffineLimit(eye[i][None, :], [centre[i]], description=f"d{i + 2}1 = {centre[i]:.6g}"),
                f"angle{i + 2}",
            ))
    if not sets:
        sets.append(IndividualInvariantSet(HalfspacePolytope.whole_space(dim), AffineLimit(eye, centre), "all"))
    return build_candidate(sets, centre)


def project_angles(states: np.ndarray, n_mach: int) -> np.ndarray:
    """(delta, omega) states -> delta_i - delta_1, i = 2..n."""
    states = np.asarray(states, dtype=float)
    return states[..., 1:n_mach] - states[..., :1]


def projection_matrix(n_mach: int) -> np.ndarray:
    p = np.zeros((n_mach - 1, 2 * n_mach))
    p[:, 0] = -1.0
    p[np.arange(n_mach - 1), np.arange(1, n_mach)] = 1.0
    return p


# --- energy certificate ---
@dataclass(frozen=True)
class EnergyCertificate:
    """W = 1/2 sum M_i (w_i - w_coi)^2 + V(delta) - V(ds) of the post-fault system.

    ``barrier`` is the least V - V(ds) found on the boundary of Omega_e. W does not
    grow along post-fault trajectories when the system has no transfer
    conductances and a uniform D_i / M_i; ``exact`` records whether that holds.
    """

    system: ReducedSystem
    centre: np.ndarray
    barrier: float
    exact: bool = True

    def energy(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        n = self.system.n_mach
        if states.shape[-1] != 2 * n:
            raise ProjectionError(f"energy needs {2 * n} state components, got {states.shape[-1]}")
        potential = angle_potential(self.system, project_angles(states, n))
        return coi_kinetic_energy(self.system, states[..., n:]) + potential - angle_potential(self.system, self.centre)

    def certified(self, states) -> np.ndarray:
        return self.energy(states) < self.barrier


def _uniform_damping(system: ReducedSystem) -> bool:
    ratio = system.d_damp / system.m_inertia
    return bool(np.ptp(ratio) <= 1e-9 * max(float(np.abs(ratio).max()), 1e-12))


def facet_pairs(roa: CandidateRoa, n_mach: int) -> dict[tuple[int, int], tuple[int, float]]:
    """Ordered machine pair (p, q) -> (row, reach) for the row bounding z_p - z_q.

    z is the angle offset from the centre with z_1 = 0. Every row of Omega_e must
    be such a bound and every ordered pair needs one.
    """
    a_matrix = roa.omega_e.a_matrix
    reach_at_centre = roa.omega_e.slack(roa.equilibrium)
    found: dict[tuple[int, int], tuple[int, float]] = {}
    for row, a in enumerate(a_matrix):
        plus, minus = np.flatnonzero(a == 1.0), np.flatnonzero(a == -1.0)
        if len(plus) > 1 or len(minus) > 1 or len(plus) + len(minus) != np.count_nonzero(a) or not a.any():
            raise ConfigError(f"row {row} of Omega_e is not an angle difference bound")
        key = (int(plus[0]) + 1 if len(plus) else 0, int(minus[0]) + 1 if len(minus) else 0)
        if key not in found or reach_at_centre[row] < found[key][1]:
            found[key] = (row, float(reach_at_centre[row]))
    missing = [(p, q) for p in range(n_mach) for q in range(n_mach) if p != q and (p, q) not in found]
    if missing:
        raise ConfigError(f"Omega_e leaves {len(missing)} ordered machine pairs unbounded, e.g. {missing[0]}")
    return found


def _facet_offsets(reach: dict[tuple[int, int], float], n_mach: int, key: tuple[int, int], count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Offsets z with z_p - z_q at its reach, placed one machine at a time so that
    each new angle respects every pair bound with the angles already placed."""
    p, q = key
    u = reach
    if q == 0:
        t_lo = t_hi = 0.0
    elif p == 0:
        t_lo = t_hi = -u[key]
    else:
        t_lo = max(-u[0, q], -u[key] - u[0, p])
        t_hi = min(u[q, 0], u[p, 0] - u[key])
    if t_lo > t_hi:
        return np.zeros((0, n_mach))
    z = np.zeros((count, n_mach))
    z[:, q] = rng.uniform(t_lo, t_hi, count)
    z[:, p] = z[:, q] + u[key]
    placed = sorted({0, p, q})
    valid = np.ones(count, dtype=bool)
    for k in rng.permutation([k for k in range(n_mach) if k not in placed]):
        lo = np.max([z[:, j] - u[j, k] for j in placed], axis=0)
        hi = np.min([z[:, j] + u[k, j] for j in placed], axis=0)
        valid &= lo <= hi
        z[:, k] = rng.uniform(lo, np.maximum(lo, hi))
        placed.append(int(k))
    return z[valid]


def _refine_on_facet(view: ReducedSystem, gradient: DecomposedField, polytope: HalfspacePolytope,
                     row: int, start: np.ndarray) -> float:
    a, b = polytope.a_matrix, polytope.b_vector
    result = minimize(
        lambda y: float(angle_potential(view, y)),
        start,
        jac=lambda y: -gradient(y),
        method="SLSQP",
        constraints=[
            {"type": "eq", "fun": lambda y: np.atleast_1d(a[row] @ y - b[row]), "jac": lambda y: a[row][None, :]},
            {"type": "ineq", "fun": lambda y: b - a @ y, "jac": lambda y: -a},
        ],
        options={"maxiter": 200, "ftol": 1e-12},
    )
    y = result.x
    if abs(a[row] @ y - b[row]) > FACET_TOL or not polytope.contains(y, FACET_TOL):
        return np.inf
    return float(angle_potential(view, y))


def build_energy_certificate(system: ReducedSystem, roa: CandidateRoa, samples: int = BARRIER_SAMPLES,
                             refine: int = BARRIER_REFINE,
                             rng: np.random.Generator | None = None) -> EnergyCertificate:
    """Least potential over the facets of Omega_e: sampled points on each facet,
    the best few polished by SLSQP under the polytope constraints."""
    n = system.n_mach
    pairs = facet_pairs(roa, n)
    reach = {key: value[1] for key, value in pairs.items()}
    view = without_transfer_conductances(system)
    exact = bool(np.allclose(view.y_reduced, system.y_reduced)) and _uniform_damping(system)
    gradient = reduced_angle_field(view, centre_of_inertia=True)
    rng = rng or np.random.default_rng(0)
    lowest = np.inf
    for key, (row, _) in pairs.items():
        z = _facet_offsets(reach, n, key, samples, rng)
        points = roa.equilibrium + z[:, 1:]
        points = points[np.atleast_1d(roa.omega_e.contains(points, FACET_TOL))]
        if not len(points):
            log.debug(f"facet {row} (pair {key}) has no sampled points")
            continue
        values = angle_potential(view, points)
        lowest = min(lowest, float(values.min()))
        if roa.dim > 1:
            for start in points[np.argsort(values)[:refine]]:
                lowest = min(lowest, _refine_on_facet(view, gradient, roa.omega_e, row, start))
    if not np.isfinite(lowest):
        raise EmptyIntersection("no boundary point of Omega_e found for the energy barrier")
    barrier = lowest - float(angle_potential(view, roa.equilibrium))
    if not exact:
        log.warning(f"{system.variant}: transfer conductances or non-uniform damping; energy barrier is approximate")
    if barrier <= 0:
        log.warning(f"{system.variant}: energy barrier {barrier:.4g} is not positive, nothing will be certified")
    log.debug(f"{system.variant}: energy barrier {barrier:.6g} over {len(pairs)} facets")
    return EnergyCertificate(view, roa.equilibrium, barrier, exact)


# --- contingency pipeline ---
@dataclass(frozen=True)
class ContingencyStudy:
    contingency: Contingency
    pre: ReducedSystem
    fault: ReducedSystem
    post: ReducedSystem

    @property
    def initial_state(self) -> np.ndarray:
        return np.r_[self.pre.initial_angles, np.zeros(self.pre.n_mach)]


def prepare(case: PowerCase, contingency: Contingency, settings: CctSettings | None = None) -> ContingencyStudy:
    """Reduced pre-fault, fault-on and post-fault systems of one contingency.

    Unless ``settings.transfer_conductances`` is set the transfer conductances are
    dropped from all three; mechanical power and the self conductances stay.
    """
    settings = settings or CctSettings()
    contingency.branch(case)
    solution = power_flow(case, settings.pf_tol)
    pre, fault, post = reduce_all(case, contingency, solution, settings.lossless)
    if not settings.transfer_conductances:
        pre, fault, post = (without_transfer_conductances(s) for s in (pre, fault, post))
    return ContingencyStudy(contingency, pre, fault, post)


def _fault_on(study: ContingencyStudy, dt: float, t_max: float) -> Trajectory:
    cfg = IntegratorConfig(step=dt, method=Method.RK4)
    try:
        return integrate(swing_system(study.fault), study.initial_state, t_max, cfg)
    except IntegrationDiverged as exc:
        log.info(f"{study.contingency}: fault-on trajectory diverged at t={exc.time:.4f}")
        return exc.trajectory


def fault_on_trajectory(case: PowerCase, contingency: Contingency, dt: float = 1e-3, t_max: float = 5.0,
                        lossless: bool = False, transfer_conductances: bool = False) -> Trajectory:
    """Fault-on (delta, omega) trajectory from the pre-fault operating point at rest."""
    settings = CctSettings(dt=dt, t_max=t_max, tol=dt, lossless=lossless,
                           transfer_conductances=transfer_conductances)
    return _fault_on(prepare(case, contingency, settings), dt, t_max)


def clearing_simulation(case: PowerCase, contingency: Contingency, t_clear: float, dt: float = 1e-3,
                        t_max: float = 5.0, lossless: bool = False,
                        transfer_conductances: bool = False) -> Trajectory:
    """Fault-on until t_clear, post-fault system afterwards."""
    if not 0.0 <= t_clear < t_max:
        raise ConfigError(f"clearing time {t_clear} outside [0, {t_max})")
    settings = CctSettings(dt=dt, t_max=t_max, tol=dt, lossless=lossless,
                           transfer_conductances=transfer_conductances)
    study = prepare(case, contingency, settings)
    cfg = IntegratorConfig(step=dt, method=Method.RK4)
    times, states = [np.zeros(1)], [study.initial_state[None, :]]
    x = study.initial_state
    if t_clear > 0:
        try:
            on = integrate(swing_system(study.fault), x, t_clear, cfg)
        except IntegrationDiverged as exc:
            return exc.trajectory
        times, states = [on.times], [on.states]
        x = on.final_state
    try:
        post = integrate(swing_system(study.post), x, t_max - t_clear, cfg)
    except IntegrationDiverged as exc:
        post = exc.trajectory
    times.append(t_clear + post.times[1:])
    states.append(post.states[1:])
    return Trajectory(np.concatenate(times), np.concatenate(states), diverged=post.diverged, message=post.message)


# --- first exit from the polytope ---
def _grid_samples(traj: Trajectory, dt: float, t_max: float) -> tuple[np.ndarray, int]:
    """States at t = k dt, k = 0..K, plus K; samples beyond the trajectory are cut off."""
    n_steps = int(round(t_max / dt))
    wanted = np.arange(n_steps + 1) * dt
    idx = np.searchsorted(traj.times, wanted - 1e-9 * dt)
    available = idx < len(traj.times)
    idx, wanted = idx[available], wanted[available]
    if np.any(np.abs(traj.times[idx] - wanted) > 1e-6 * dt):
        raise ProjectionError(f"trajectory is not sampled on the {dt:g} s grid")
    return traj.states[idx], n_steps


def polytope_exit_cct(roa: CandidateRoa, traj: Trajectory, dt: float, t_max: float,
                      contingency: Contingency | None = None, tol: float = MEMBERSHIP_TOL,
                      certificate: EnergyCertificate | None = None) -> CctResult:
    """Scan x^f(k dt) forward; t_c is the last sample before the first one outside Omega_e.

    With a ``certificate`` a (delta, omega) sample also counts as outside once its
    post-fault energy reaches the barrier.
    """
    if roa.omega_e.is_empty():
        return CctResult(contingency, None, None, None, dt, CctStatus.POLYTOPE_EMPTY, message="Omega_e is empty")
    if traj.dim == roa.dim:
        project = None
    elif traj.dim == 2 * (roa.dim + 1):
        project = roa.dim + 1
    else:
        raise ProjectionError(f"trajectory dim {traj.dim} matches neither {roa.dim} nor {2 * (roa.dim + 1)}")
    if certificate is not None and project is None:
        raise ProjectionError("an energy certificate needs (delta, omega) samples")
    samples, n_steps = _grid_samples(traj, dt, t_max)
    points = samples if project is None else project_angles(samples, project)
    in_polytope = np.atleast_1d(roa.omega_e.contains(points, tol))
    inside = in_polytope if certificate is None else in_polytope & np.atleast_1d(certificate.certified(samples))
    if inside.all():
        if len(inside) == n_steps + 1:
            return CctResult(contingency, n_steps * dt, None, None, dt, CctStatus.NEVER_EXITS)
        t_last = (len(inside) - 1) * dt
        return CctResult(contingency, t_last, None, None, dt, CctStatus.TRAJECTORY_ENDED,
                         message=f"fault-on trajectory ends at t={t_last:g} s without leaving Omega_e")
    k_exit = int(np.argmin(inside))
    exit_state = tuple(points[k_exit].tolist())
    message = "post-fault energy reached the barrier" if in_polytope[k_exit] else "left Omega_e"
    if k_exit == 0:
        return CctResult(contingency, None, None, exit_state, dt, CctStatus.INITIALLY_OUTSIDE,
                         message=f"fault-on trajectory starts outside: {message}")
    return CctResult(contingency, (k_exit - 1) * dt, None, exit_state, dt, CctStatus.OK, message=message)


# --- time-domain oracle ---
def _loses_synchronism(study: ContingencyStudy, x0: np.ndarray, sep: SynchronousState,
                       dt: float, horizon: float) -> bool:
    n = study.post.n_mach
    field = swing_system(study.post)
    count = int(round(horizon / dt))

    def separated(x: np.ndarray) -> bool:
        offset = x[:n] - sep.delta
        return float(offset.max() - offset.min()) > SEPARATION_LIMIT

    if separated(x0):
        return True
    steps = 0
    for steps, x in rk4_steps(field, x0, dt, count):
        if separated(x):
            return True
    return steps < count


def _post_fault_sep(study: ContingencyStudy) -> SynchronousState:
    try:
        return synchronous_equilibrium(study.post, study.pre.initial_angles)
    except NoEquilibriumFound as exc:
        raise NoPostFaultSep(f"{study.contingency}: no post-fault equilibrium ({exc})") from exc


def _bisect(study: ContingencyStudy, traj: Trajectory, dt: float, t_max: float, tol: float) -> tuple[float, str]:
    sep = _post_fault_sep(study)
    states, n_steps = _grid_samples(traj, dt, t_max)
    last = len(states) - 1

    def unstable(k: int) -> bool:
        return _loses_synchronism(study, states[k], sep, dt, t_max)

    if unstable(0):
        raise ContingencyUnstable(f"{study.contingency}: post-fault system unstable even for instant clearing")
    # lo is stable, hi is unstable; samples past a diverged fault-on run count as unstable
    lo = 0
    if last == n_steps:
        if not unstable(last):
            return n_steps * dt, "no_cct"
        hi = last
    else:
        hi = last if unstable(last) else last + 1
    width = max(1, int(round(tol / dt)))
    while hi - lo > width:
        mid = (lo + hi) // 2
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return lo * dt, ""


def bisection_cct_oracle(case: PowerCase, contingency: Contingency, dt: float = 1e-3, t_max: float = 5.0,
                         tol: float = 1e-3, lossless: bool = False,
                         transfer_conductances: bool = False) -> tuple[float, str]:
    """Largest stable clearing time to within tol, and "no_cct" when clearing at t_max is still stable."""
    settings = CctSettings(dt=dt, t_max=t_max, tol=tol, lossless=lossless,
                           transfer_conductances=transfer_conductances)
    study = prepare(case, contingency, settings)
    return _bisect(study, _fault_on(study, dt, t_max), dt, t_max, tol)


# --- batch ---
def assess(case: PowerCase, contingency: Contingency, settings: CctSettings) -> CctResult:
    """Polytope exit scan and the oracle for one contingency; failures land in the status.

    The scan carries the energy certificate whenever Omega_e bounds every machine
    pair, which needs ``per_angle_bounds``.
    """
    try:
        study = prepare(case, contingency, settings)
        roa = build_power_roa(study.post, study.pre.initial_angles, settings.per_angle_bounds, settings.uep_bounds)
        certificate = build_energy_certificate(study.post, roa) if settings.per_angle_bounds else None
        if certificate is None:
            log.warning(f"{contingency}: no per-angle bounds, scanning Omega_e without the energy certificate")
        traj = _fault_on(study, settings.dt, settings.t_max)
        result = polytope_exit_cct(roa, traj, settings.dt, settings.t_max, contingency, certificate=certificate)
        t_oracle, flag = _bisect(study, traj, settings.dt, settings.t_max, settings.tol)
    except (RoaError, np.linalg.LinAlgError) as exc:
        log.debug(f"{contingency}: assessment failed", exc_info=True)
        return CctResult(contingency, None, None, None, settings.dt, CctStatus.FAILED, message=str(exc))
    result = CctResult(contingency, result.t_c_polytope, t_oracle, result.exit_state, settings.dt,
                       result.status, flag, result.message)
    if result.conservative is False:
        log.warning(f"{contingency}: polytope estimate {result.t_c_polytope:.3f} s exceeds oracle {t_oracle:.3f} s")
    log.info(f"{contingency}: t_c polytope={result.t_c_polytope} oracle={t_oracle} status={result.status.value}")
    return result


def screen(case: PowerCase, contingencies: Sequence[Contingency], settings: CctSettings | None = None,
           jobs: int | None = 1) -> list[CctResult]:
    """One result per contingency, in input order."""
    settings = settings or CctSettings()
    contingencies = list(contingencies)
    if not contingencies:
        return []
    work = partial(assess, case, settings=settings)
    if jobs == 1 or len(contingencies) == 1:
        return [work(c) for c in contingencies]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, contingencies))


def random_line_trips(case: PowerCase, count: int, rng: np.random.Generator) -> list[Contingency]:
    """Line trips that keep the network connected, faulted at a random end."""
    candidates = [br for br in case.branches if br.in_service and is_connected(case, without=br)]
    chosen = rng.choice(len(candidates), size=min(count, len(candidates)), replace=False)
    trips = []
    for k in chosen:
        branch = candidates[int(k)]
        bus = branch.from_bus if rng.random() < 0.5 else branch.to_bus
        trips.append(Contingency(bus, (branch.from_bus, branch.to_bus)))
    return trips
