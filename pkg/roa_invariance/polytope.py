# roa_invariance/polytope.py
"""Halfspace polytopes {x : A x <= b}: membership, intersection, feasibility."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import simplex
from .errors import DimensionMismatch, PolytopeError, UnboundedSet

log = logging.getLogger("polytope")

MEMBERSHIP_TOL = 1e-9
SAMPLING_CLIP = 50.0


@dataclass(frozen=True, eq=False)
class HalfspacePolytope:
    a_matrix: np.ndarray
    b_vector: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=float)
        b = np.array(self.b_vector, dtype=float).reshape(-1)
        if a.ndim != 2:
            raise PolytopeError(f"A must be a matrix, got shape {a.shape}")
        if a.shape[0] != b.shape[0]:
            raise PolytopeError(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        if a.shape[1] < 1:
            raise PolytopeError("polytope dimension must be positive")
        zero_rows = ~np.any(a != 0.0, axis=1)
        if np.any(zero_rows & (b < 0.0)):
            raise PolytopeError(f"all-zero row with negative bound at rows {np.flatnonzero(zero_rows & (b < 0)).tolist()}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_vector", b)

    # --- constructors ---
    @classmethod
    def whole_space(cls, dim: int) -> "HalfspacePolytope":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "HalfspacePolytope":
        """lower <= x <= upper; infinite entries contribute no row."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(len(lower))
        rows, bounds = [], []
        for k in range(len(lower)):
            if np.isfinite(upper[k]):
                rows.append(eye[k])
                bounds.append(upper[k])
            if np.isfinite(lower[k]):
                rows.append(-eye[k])
                bounds.append(-lower[k])
        return cls(np.reshape(rows, (len(rows), len(lower))), np.asarray(bounds))

    @classmethod
    def symmetric_box(cls, dim: int, radius: float) -> "HalfspacePolytope":
        return cls.box(np.full(dim, -radius), np.full(dim, radius))

    # --- properties ---
    @property
    def dim(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def __repr__(self) -> str:
        return f"HalfspacePolytope(dim={self.dim}, rows={self.n_rows})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, HalfspacePolytope):
            return NotImplemented
        return (self.a_matrix.shape == other.a_matrix.shape
                and np.array_equal(self.a_matrix, other.a_matrix)
                and np.array_equal(self.b_vector, other.b_vector))

    __hash__ = None

    # --- operations ---
    def slack(self, x) -> np.ndarray:
        """b - A x for a state (n,) or a batch (..., n)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"point has {x.shape[-1]} components, polytope dim is {self.dim}")
        return self.b_vector - x @ self.a_matrix.T

    def contains(self, x, tol: float = MEMBERSHIP_TOL):
        """True iff a_i.x <= b_i + tol for every row; vectorized over leading axes."""
        if tol < 0:
            raise PolytopeError("membership tolerance must be non-negative")
        inside = np.all(self.slack(x) >= -tol, axis=-1)
        return bool(inside) if np.ndim(inside) == 0 else inside

    def normalized(self) -> "HalfspacePolytope":
        """Same set with unit-norm non-zero rows; zero rows dropped."""
        norms = np.linalg.norm(self.a_matrix, axis=1)
        keep = norms > 0
        return HalfspacePolytope(self.a_matrix[keep] / norms[keep, None], self.b_vector[keep] / norms[keep])

    def feasible_point(self) -> np.ndarray | None:
        """Phase-1 simplex witness, or None when the polytope is empty."""
        unit = self.normalized()
        result = simplex.solve(unit.a_matrix, unit.b_vector)
        if result.status is simplex.LpStatus.INFEASIBLE:
            return None
        return result.x

    def is_empty(self) -> bool:
        return self.feasible_point() is None

    def minimize(self, c) -> tuple[np.ndarray, float]:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise DimensionMismatch(f"objective has shape {c.shape}, polytope dim is {self.dim}")
        unit = self.normalized()
        result = simplex.solve(unit.a_matrix, unit.b_vector, c)
        if result.status is simplex.LpStatus.INFEASIBLE:
            raise PolytopeError("cannot optimize over an empty polytope")
        if result.status is simplex.LpStatus.UNBOUNDED:
            raise UnboundedSet("objective is unbounded below on this polytope")
        return result.x, result.value

    def clipped(self, clip: float = SAMPLING_CLIP) -> "HalfspacePolytope":
        return intersect([self, HalfspacePolytope.symmetric_box(self.dim, clip)])

    def bounding_box(self, clip: float = SAMPLING_CLIP) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate LP bounds of P ∩ [-clip, clip]^n."""
        bounded = self.clipped(clip)
        lower = np.empty(self.dim)
        upper = np.empty(self.dim)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            lower[k] = bounded.minimize(e)[1]
            upper[k] = -bounded.minimize(-e)[1]
        return lower, upper

    def sample(self, count: int, rng: np.random.Generator, clip: float = SAMPLING_CLIP,
               max_draws: int = 1_000_000) -> np.ndarray:
        """Uniform samples by rejection inside the (clipped) bounding box."""
        if self.is_empty():
            raise PolytopeError("cannot sample an empty polytope")
        lower, upper = self.bounding_box(clip)
        accepted: list[np.ndarray] = []
        have = draws = 0
        while have < count:
            if draws >= max_draws:
                raise UnboundedSet(
                    f"rejection sampling accepted {have}/{count} points after {draws} draws; "
                    "give the set explicit bounds"
                )
            batch = min(max(4 * (count - have), 256), max_draws - draws)
            candidates = rng.uniform(lower, upper, size=(batch, self.dim))
            draws += batch
            hits = candidates[self.contains(candidates, 0.0)]
            accepted.append(hits)
            have += len(hits)
        return np.concatenate(accepted)[:count]

    def shifted(self, offset) -> "HalfspacePolytope":
        """The set {x + offset : x in P}."""
        offset = np.asarray(offset, dtype=float)
        return HalfspacePolytope(self.a_matrix, self.b_vector + self.a_matrix @ offset)


def intersect(polytopes: Sequence[HalfspacePolytope]) -> HalfspacePolytope:
    """Row concatenation, in list order."""
    polytopes = list(polytopes)
    if not polytopes:
        raise PolytopeError("intersect needs at least one polytope")
    dims = {p.dim for p in polytopes}
    if len(dims) != 1:
        raise DimensionMismatch(f"cannot intersect polytopes of dimensions {sorted(dims)}")
    if len(polytopes) == 1:
        return polytopes[0]
    return HalfspacePolytope(
        np.vstack([p.a_matrix for p in polytopes]),
        np.concatenate([p.b_vector for p in polytopes]),
    )


def contains(p: HalfspacePolytope, x, tol: float = MEMBERSHIP_TOL):
    return p.contains(x, tol)


def is_empty(p: HalfspacePolytope) -> bool:
    return p.is_empty()
