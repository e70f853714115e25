# roa_invariance/examples.py
"""The three bundled second order systems, their decompositions and
analytic invariant sets.

    example1:  x1' = -b sin x1 - a x1          x2' = -b sin x2 - a x2
    example2:  x1' = -a1 sin x1 - b sin(x1-x2) x2' = -a2 sin x2 - b sin(x2-x1)
    example3:  x1' = -a x2 sin x1              x2' = -b x2 + c cos x1
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynsys import DecomposedField, VectorField
from .errors import ConfigError, NoEquilibriumFound, UnknownExample
from .invariance import (
    AffineLimit,
    CandidateRoa,
    GraphLimit,
    IndividualInvariantSet,
    PointLimit,
    build_candidate,
)
from .polytope import HalfspacePolytope

log = logging.getLogger("examples")

PI = np.pi
EQUILIBRIUM_TOL = 1e-10

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "example1": {"a": 0.1, "b": 1.0},
    "example2": {"a1": 1.0, "a2": 0.5, "b": 0.5},
    "example3": {"a": 2.0, "b": 2.7, "c": 1.7},
}


@dataclass(frozen=True)
class ExampleSystem:
    name: str
    params: Mapping[str, float]
    field: DecomposedField
    omega_sets: tuple[IndividualInvariantSet, ...]
    roa: CandidateRoa

    @property
    def dim(self) -> int:
        return self.field.dim

    @property
    def equilibrium(self) -> np.ndarray:
        return self.roa.equilibrium


def _component(index: int, func: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """A 2-D field that is `func` in one coordinate and zero in the other."""

    def part(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        out[..., index] = func(x)
        return out

    return part


def _halfplanes(rows, bounds) -> HalfspacePolytope:
    return HalfspacePolytope(np.asarray(rows, dtype=float).reshape(-1, 2), np.asarray(bounds, dtype=float))


def _axis_line(index: int, label: str) -> AffineLimit:
    c = np.zeros((1, 2))
    c[0, index] = 1.0
    return AffineLimit(c, [0.0], description=label)


# --- builders ---
def _example1(p: Mapping[str, float]):
    a, b = p["a"], p["b"]
    parts = (
        VectorField(2, _component(0, lambda x: -b * np.sin(x[..., 0])), "f1"),
        VectorField(2, _component(1, lambda x: -b * np.sin(x[..., 1])), "f2"),
        VectorField(2, lambda x: -a * x, "f3"),
    )
    sets = (
        IndividualInvariantSet(_halfplanes([[1, 0], [-1, 0]], [PI, PI]), _axis_line(0, "x1 = 0"), "Omega1"),
        IndividualInvariantSet(_halfplanes([[0, 1], [0, -1]], [PI, PI]), _axis_line(1, "x2 = 0"), "Omega2"),
        IndividualInvariantSet(HalfspacePolytope.whole_space(2), PointLimit([0.0, 0.0], "origin"), "Omega3"),
    )
    return parts, sets, np.zeros(2)


def _example2(p: Mapping[str, float]):
    a1, a2, b = p["a1"], p["a2"], p["b"]

    def coupling(x: np.ndarray) -> np.ndarray:
        s = b * np.sin(x[..., 0] - x[..., 1])
        return np.stack([-s, s], axis=-1)

    parts = (
        VectorField(2, _component(0, lambda x: -a1 * np.sin(x[..., 0])), "f1"),
        VectorField(2, _component(1, lambda x: -a2 * np.sin(x[..., 1])), "f2"),
        VectorField(2, coupling, "f3"),
    )
    sets = (
        IndividualInvariantSet(_halfplanes([[1, 0], [-1, 0]], [PI, PI]), _axis_line(0, "x1 = 0"), "Omega1"),
        IndividualInvariantSet(_halfplanes([[0, 1], [0, -1]], [PI, PI]), _axis_line(1, "x2 = 0"), "Omega2"),
        IndividualInvariantSet(
            _halfplanes([[1, -1], [-1, 1]], [PI, PI]),
            AffineLimit([[1.0, -1.0]], [0.0], description="x1 - x2 = 0"),
            "Omega3",
        ),
    )
    return parts, sets, np.zeros(2)


def _example3(p: Mapping[str, float]):
    a, b, c = p["a"], p["b"], p["c"]
    parts = (
        VectorField(2, _component(0, lambda x: -a * x[..., 1] * np.sin(x[..., 0])), "f1"),
        VectorField(2, _component(1, lambda x: -b * x[..., 1] + c * np.cos(x[..., 0])), "f2"),
    )
    sets = (
        IndividualInvariantSet(
            _halfplanes([[1, 0], [-1, 0], [0, -1]], [PI, PI, 0.0]), _axis_line(0, "x1 = 0, x2 >= 0"), "Omega1"
        ),
        IndividualInvariantSet(
            _halfplanes([[1, 0], [-1, 0]], [PI / 2, PI / 2]),
            GraphLimit(2, 1, lambda x: (c / b) * np.cos(x[..., 0]), description="x2 = (c/b) cos x1"),
            "Omega2",
        ),
    )
    return parts, sets, np.array([0.0, c / b])


_BUILDERS = {"example1": _example1, "example2": _example2, "example3": _example3}


def names() -> list[str]:
    return list(_BUILDERS)


def example(name: str, params: Mapping[str, float] | None = None) -> ExampleSystem:
    """Build a bundled system; `params` overrides the figure defaults."""
    if name not in _BUILDERS:
        raise UnknownExample(f"unknown example {name!r}; choose one of {', '.join(_BUILDERS)}")
    merged = dict(DEFAULT_PARAMS[name])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"{name} has no parameter {key!r} (parameters: {', '.join(merged)})")
        value = float(value)
        if not value > 0:
            raise ConfigError(f"parameter {key} must be positive, got {value}")
        merged[key] = value
    parts, sets, equilibrium = _BUILDERS[name](merged)
    field = DecomposedField(parts, name=name)
    residual = float(np.max(np.abs(field(equilibrium))))
    if residual > EQUILIBRIUM_TOL:
        raise NoEquilibriumFound(f"{name}: f(x_e) = {residual:.3e} at {equilibrium.tolist()}", equilibrium, residual)
    roa = build_candidate(sets, equilibrium)
    log.debug(f"{name} built with {merged}: {len(parts)} parts, Omega_e has {roa.omega_e.n_rows} rows")
    return ExampleSystem(name, merged, field, sets, roa)


# --- grids ---
@dataclass(frozen=True)
class FieldGrid:
    """Row-major samples: the first coordinate varies slowest."""

    states: np.ndarray
    values: np.ndarray
    resolution: int


def vector_field_grid(system: ExampleSystem, box: Sequence[tuple[float, float]], resolution: int) -> FieldGrid:
    if resolution < 2:
        raise ConfigError(f"grid resolution must be at least 2, got {resolution}")
    if len(box) != system.dim:
        raise ConfigError(f"box has {len(box)} ranges for a {system.dim}-dimensional system")
    axes = []
    for lo, hi in box:
        if not hi > lo:
            raise ConfigError(f"degenerate grid range [{lo}, {hi}]")
        axes.append(np.linspace(lo, hi, resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    states = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return FieldGrid(states, system.field(states), resolution)
