# roa_invariance/invariance.py
"""Candidate regions of attraction built from individually invariant sets,
and the two numerical certificates: facet flow and trajectory invariance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space

from .dynsys import DecomposedField, Field, IntegratorConfig, Method, integrate_batch
from .errors import DimensionMismatch, EmptyIntersection, EquilibriumOutside, UnboundedSet
from .polytope import MEMBERSHIP_TOL, SAMPLING_CLIP, HalfspacePolytope, intersect

log = logging.getLogger("invariance")

LIMIT_RESIDUAL_TOL = 1e-8
FACET_FLOW_TOL = 1e-7
EXIT_TOL = 1e-7
CONVERGENCE_TOL = 1e-3
LIMIT_SAMPLE_RADIUS = np.pi


# --- Limit sets ---
@dataclass(frozen=True)
class PointLimit:
    point: np.ndarray
    description: str = ""
    kind = "point"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    @property
    def dim(self) -> int:
        return self.point.shape[0]

    def sample(self, rng: np.random.Generator, count: int, radius: float = LIMIT_SAMPLE_RADIUS) -> np.ndarray:
        return np.tile(self.point, (count, 1))

    def distance(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=float) - self.point, axis=-1)


@dataclass(frozen=True)
class AffineLimit:
    """Equilibrium subspace {x : C x = d}."""

    c_matrix: np.ndarray
    d_vector: np.ndarray
    description: str = ""
    kind = "affine"

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c_matrix, dtype=float))
        d = np.asarray(self.d_vector, dtype=float).reshape(-1)
        if c.shape[0] != d.shape[0]:
            raise DimensionMismatch(f"C has {c.shape[0]} rows but d has {d.shape[0]} entries")
        object.__setattr__(self, "c_matrix", c)
        object.__setattr__(self, "d_vector", d)

    @property
    def dim(self) -> int:
        return self.c_matrix.shape[1]

    def sample(self, rng: np.random.Generator, count: int, radius: float = LIMIT_SAMPLE_RADIUS) -> np.ndarray:
        base = np.linalg.lstsq(self.c_matrix, self.d_vector, rcond=None)[0]
        directions = null_space(self.c_matrix)
        coeffs = rng.uniform(-radius, radius, size=(count, directions.shape[1]))
        return base + coeffs @ directions.T

    def distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        residual = x @ self.c_matrix.T - self.d_vector
        return np.linalg.norm(residual @ np.linalg.pinv(self.c_matrix).T, axis=-1)


@dataclass(frozen=True)
class GraphLimit:
    """Equilibrium curve x[dependent] = graph(x), graph ignoring x[dependent]."""

    dim: int
    dependent: int
    graph: Callable[[np.ndarray], np.ndarray]
    description: str = ""
    kind = "graph"

    def sample(self, rng: np.random.Generator, count: int, radius: float = LIMIT_SAMPLE_RADIUS) -> np.ndarray:
        points = rng.uniform(-radius, radius, size=(count, self.dim))
        points[:, self.dependent] = self.graph(points)
        return points

    def distance(self, x) -> np.ndarray:
        # vertical distance; an upper bound on the Euclidean one
        x = np.asarray(x, dtype=float)
        return np.abs(x[..., self.dependent] - self.graph(x))


LimitSet = PointLimit | AffineLimit | GraphLimit


@dataclass(frozen=True)
class IndividualInvariantSet:
    polytope: HalfspacePolytope
    limit: LimitSet
    label: str = ""

    @property
    def dim(self) -> int:
        return self.polytope.dim

    def limit_residual(self, part: Field, rng: np.random.Generator, count: int = 64) -> float:
        """max ||f^i(w)||_inf over sampled points w of the limit set."""
        points = self.limit.sample(rng, count)
        return float(np.max(np.abs(part(points))))


@dataclass(frozen=True)
class CandidateRoa:
    omega_e: HalfspacePolytope
    equilibrium: np.ndarray
    sources: tuple[IndividualInvariantSet, ...] = ()

    @property
    def dim(self) -> int:
        return self.omega_e.dim


def build_candidate(sets: Sequence[IndividualInvariantSet], equilibrium,
                    tol: float = MEMBERSHIP_TOL) -> CandidateRoa:
    """Omega_e = intersection of the individual sets, gated on non-emptiness and
    on the equilibrium lying inside it."""
    sets = tuple(sets)
    if not sets:
        raise EmptyIntersection("no individual invariant sets given")
    omega_e = intersect([s.polytope for s in sets])
    equilibrium = np.asarray(equilibrium, dtype=float)
    if equilibrium.shape != (omega_e.dim,):
        raise DimensionMismatch(f"equilibrium has shape {equilibrium.shape}, sets have dim {omega_e.dim}")
    if omega_e.is_empty():
        raise EmptyIntersection(f"intersection of {len(sets)} individual sets is empty")
    if not omega_e.contains(equilibrium, tol):
        worst = float(-np.min(omega_e.slack(equilibrium)))
        raise EquilibriumOutside(f"equilibrium {equilibrium.tolist()} violates Omega_e by {worst:.3e}")
    log.debug(f"candidate built: {omega_e.n_rows} rows from {len(sets)} sets")
    return CandidateRoa(omega_e, equilibrium, sets)


# --- Facet flow ---
@dataclass(frozen=True)
class FacetFlow:
    facet: int
    normal: tuple[float, ...]
    bound: float
    samples: int
    part_maxima: tuple[float | None, ...]
    composite_max: float | None


@dataclass(frozen=True)
class FacetFlowReport:
    facets: tuple[FacetFlow, ...]
    tol: float = FACET_FLOW_TOL

    @property
    def violations(self) -> list[tuple[int, str, float]]:
        found = []
        for flow in self.facets:
            for k, value in enumerate(flow.part_maxima):
                if value is not None and value > self.tol:
                    found.append((flow.facet, f"f{k + 1}", value))
            if flow.composite_max is not None and flow.composite_max > self.tol:
                found.append((flow.facet, "f", flow.composite_max))
        return found

    @property
    def passed(self) -> bool:
        return not self.violations


def _facet_points(unit: HalfspacePolytope, bounded: HalfspacePolytope, row: int, count: int,
                  lower: np.ndarray, upper: np.ndarray, rng: np.random.Generator,
                  max_draws: int) -> np.ndarray:
    a = unit.a_matrix[row]
    b = unit.b_vector[row]
    found: list[np.ndarray] = []
    have = draws = 0
    while have < count and draws < max_draws:
        batch = max(4 * (count - have), 256)
        points = rng.uniform(lower, upper, size=(batch, unit.dim))
        draws += batch
        points -= np.outer(points @ a - b, a)
        hits = points[bounded.contains(points, MEMBERSHIP_TOL)]
        found.append(hits)
        have += len(hits)
    if not found:
        return np.zeros((0, unit.dim))
    return np.concatenate(found)[:count]


def check_boundary_flow(field: DecomposedField, roa: CandidateRoa, samples_per_facet: int,
                        rng: np.random.Generator | None = None, tol: float = FACET_FLOW_TOL,
                        clip: float = SAMPLING_CLIP, max_draws: int = 1_000_000) -> FacetFlowReport:
    """Outward normal component of every sub-field (and of their sum) on each facet of Omega_e."""
    if field.dim != roa.dim:
        raise DimensionMismatch(f"field dim {field.dim} does not match candidate dim {roa.dim}")
    rng = rng or np.random.default_rng(0)
    unit = roa.omega_e.normalized()
    bounded = unit.clipped(clip)
    lower, upper = bounded.bounding_box(clip)
    flows = []
    for row in range(unit.n_rows):
        points = _facet_points(unit, bounded, row, samples_per_facet, lower, upper, rng, max_draws)
        normal = unit.a_matrix[row]
        if len(points) == 0:
            log.debug(f"facet {row} has no sampled points inside Omega_e")
            flows.append(FacetFlow(row, tuple(normal), float(unit.b_vector[row]), 0,
                                   (None,) * len(field), None))
            continue
        per_part = field.evaluate_parts(points) @ normal
        part_maxima = per_part.max(axis=1)
        composite = float((field(points) @ normal).max())
        bound = float(part_maxima.sum())
        assert composite <= bound + 1e-9 * (1.0 + float(np.abs(part_maxima).sum()))
        flows.append(FacetFlow(row, tuple(normal), float(unit.b_vector[row]), len(points),
                               tuple(float(v) for v in part_maxima), composite))
    report = FacetFlowReport(tuple(flows), tol)
    log.info(f"facet flow: {unit.n_rows} facets, {len(report.violations)} violations")
    return report


# --- Trajectory invariance ---
@dataclass(frozen=True)
class ExitRecord:
    sample: int
    time: float
    state: tuple[float, ...]


@dataclass(frozen=True)
class TrajectoryInvarianceReport:
    n_samples: int
    t_end: float
    exits: tuple[ExitRecord, ...]
    terminal_distances: np.ndarray = field(repr=False)
    convergence_tol: float = CONVERGENCE_TOL

    @property
    def invariant(self) -> bool:
        return not self.exits

    @property
    def max_distance(self) -> float:
        return float(np.max(self.terminal_distances)) if len(self.terminal_distances) else 0.0

    @property
    def converged(self) -> bool:
        return self.max_distance <= self.convergence_tol

    @property
    def passed(self) -> bool:
        return self.invariant and self.converged


def check_trajectory_invariance(field: Field, roa: CandidateRoa, n_samples: int, t_end: float,
                                rng: np.random.Generator | None = None,
                                cfg: IntegratorConfig | None = None,
                                initial_states=None, limit: LimitSet | None = None,
                                exit_tol: float = EXIT_TOL, clip: float = SAMPLING_CLIP,
                                convergence_tol: float = CONVERGENCE_TOL) -> TrajectoryInvarianceReport:
    """Integrate uniformly sampled starts in Omega_e; report exits and terminal distances."""
    if n_samples < 1 or not t_end > 0:
        raise ValueError("need a positive sample count and horizon")
    if field.dim != roa.dim:
        raise DimensionMismatch(f"field dim {field.dim} does not match candidate dim {roa.dim}")
    rng = rng or np.random.default_rng(0)
    cfg = cfg or IntegratorConfig(step=1e-2, method=Method.RK45)
    if initial_states is None:
        try:
            starts = roa.omega_e.sample(n_samples, rng, clip)
        except UnboundedSet:
            log.error(f"could not sample {n_samples} points in Omega_e")
            raise
    else:
        starts = np.atleast_2d(np.asarray(initial_states, dtype=float))
    batch = integrate_batch(field, starts, t_end, cfg)

    inside = roa.omega_e.slack(batch.states).min(axis=-1) >= -exit_tol
    exits = []
    diverged = batch.diverged
    for sample in np.flatnonzero(~inside.all(axis=0) | diverged):
        if inside[:, sample].all():
            # frozen inside Omega_e: the exit is the divergence itself
            exits.append(ExitRecord(int(sample), float(batch.diverged_at[sample]),
                                    tuple(batch.final_states[sample].tolist())))
            continue
        k = int(np.argmin(inside[:, sample]))
        exits.append(ExitRecord(int(sample), float(batch.times[k]), tuple(batch.states[k, sample].tolist())))
    if diverged.any():
        log.warning(f"trajectory invariance: {int(diverged.sum())} samples diverged")

    target = limit if limit is not None else PointLimit(roa.equilibrium)
    distances = target.distance(batch.final_states)
    report = TrajectoryInvarianceReport(len(starts), float(t_end), tuple(exits), distances, convergence_tol)
    log.info(f"trajectory invariance: {len(starts)} samples, {len(exits)} exits, "
             f"max terminal distance {report.max_distance:.3e}")
    return report
