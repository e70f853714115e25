# roa_invariance/dynsys.py
"""Autonomous ODE primitives: vector fields, decompositions, trajectories and
the RK4 / Dormand-Prince integrators.

Vector fields evaluate on arrays whose *last* axis is the state, so the same
field integrates one initial condition or a whole batch of them.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    IntegrationDiverged,
    IntegrationError,
    NoEquilibriumFound,
)

log = logging.getLogger("dynsys")

DIVERGENCE_LIMIT = 1e6
NEWTON_MAX_ITER = 100
FD_STEP = 1e-7

# --- Dormand-Prince 5(4) tableau (autonomous fields need no c nodes) ---
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# 5th order weights are the last A row (FSAL); E = b5 - b4
_DP_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


class Field(Protocol):
    """Anything integrable: a state dimension and a vectorized evaluation."""

    @property
    def dim(self) -> int: ...

    def __call__(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class VectorField:
    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"vector field dimension must be positive, got {self.dim}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"{self.name or 'field'} expects dim {self.dim}, got state of shape {x.shape}")
        return np.asarray(self.func(x), dtype=float)


@dataclass(frozen=True)
class DecomposedField:
    """f = f^1 + ... + f^m, summed left to right in declaration order."""

    parts: tuple[VectorField, ...]
    name: str = ""

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise DimensionMismatch("a decomposed field needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise DimensionMismatch(f"parts disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def __len__(self) -> int:
        return len(self.parts)

    def __call__(self, x) -> np.ndarray:
        total = self.parts[0](x)
        for part in self.parts[1:]:
            total = total + part(x)
        return total

    def evaluate_parts(self, x) -> np.ndarray:
        """Stack of part evaluations, shape (m, ..., n)."""
        return np.stack([part(x) for part in self.parts])

    def composite(self) -> VectorField:
        return VectorField(self.dim, self.__call__, name=self.name)


# --- Trajectories ---
@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diverged: bool = False
    message: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if times.ndim != 1 or len(times) == 0:
            raise DimensionMismatch("trajectory needs a non-empty 1-D time vector")
        if states.shape[0] != times.shape[0]:
            raise DimensionMismatch(f"{states.shape[0]} states for {times.shape[0]} timestamps")
        if np.any(np.diff(times) <= 0.0):
            raise DimensionMismatch("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class BatchTrajectory:
    """N trajectories sharing one time grid; states have shape (k, N, n)."""

    times: np.ndarray
    states: np.ndarray
    diverged_at: np.ndarray | None = None

    @property
    def diverged(self) -> np.ndarray:
        """Per-sample flag; a diverged sample is frozen at its last valid state."""
        if self.diverged_at is None:
            return np.zeros(self.count, dtype=bool)
        return ~np.isnan(self.diverged_at)

    @property
    def count(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def final_states(self) -> np.ndarray:
        return self.states[-1]

    def trajectory(self, index: int) -> Trajectory:
        return Trajectory(self.times, self.states[:, index, :])


# --- Integrator configuration ---
class Method(str, Enum):
    RK4 = "fixed-RK4"
    RK45 = "adaptive-RK45"


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    method: Method = Method.RK4
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_norm: float = DIVERGENCE_LIMIT
    max_steps: int = 10_000_000

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Method(self.method))
        except ValueError:
            raise ConfigError(f"unknown integration method {self.method!r}") from None
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("tolerances must be positive")
        if not self.max_norm > 0:
            raise ConfigError("divergence guard must be positive")


def _rk4_step(field: Field, x: np.ndarray, h: float) -> np.ndarray:
    k1 = field(x)
    k2 = field(x + 0.5 * h * k1)
    k3 = field(x + 0.5 * h * k2)
    k4 = field(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _fixed_grid(t_end: float, h: float) -> np.ndarray:
    n_full = int(math.floor(t_end / h + 1e-9))
    times = np.arange(n_full + 1, dtype=float) * h
    if t_end - times[-1] > 1e-9 * h:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def _diverged(times, states, t: float, x: np.ndarray, reason: str) -> IntegrationDiverged:
    partial = (np.asarray(times), np.asarray(states))
    log.debug(f"integration aborted at t={t:.6g}: {reason}")
    return IntegrationDiverged(f"integration diverged at t={t:.6g}: {reason}", t, np.array(x), partial)


def _check(x_new: np.ndarray, max_norm: float) -> str | None:
    if not np.all(np.isfinite(x_new)):
        return "non-finite derivative"
    if np.max(np.abs(x_new), initial=0.0) > max_norm:
        return f"state norm exceeded {max_norm:g}"
    return None


def _bad_rows(x_new: np.ndarray, max_norm: float) -> np.ndarray:
    """Per-sample mask of non-finite or oversized states."""
    with np.errstate(invalid="ignore"):
        return ~np.all(np.isfinite(x_new), axis=-1) | (np.max(np.abs(x_new), axis=-1) > max_norm)


def _frozen_field(field: Field, frozen: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Zero derivative on frozen rows; ``frozen`` is updated in place by the caller."""
    def masked(x: np.ndarray) -> np.ndarray:
        return np.where(frozen[..., None], 0.0, field(x))

    return masked


def _run_fixed(field: Field, x0: np.ndarray, t_end: float, cfg: IntegratorConfig,
               frozen: np.ndarray | None = None, diverged_at: np.ndarray | None = None):
    grid = _fixed_grid(t_end, cfg.step)
    states = np.empty((len(grid),) + x0.shape)
    states[0] = x0
    x = x0
    f = field if frozen is None else _frozen_field(field, frozen)
    for k in range(1, len(grid)):
        h = grid[k] - grid[k - 1] if k == len(grid) - 1 else cfg.step
        with np.errstate(over="ignore", invalid="ignore"):
            x_new = _rk4_step(f, x, h)
        if frozen is None:
            reason = _check(x_new, cfg.max_norm)
            if reason is not None:
                raise _diverged(grid[:k], states[:k], float(grid[k - 1]), x, reason)
        else:
            bad = _bad_rows(x_new, cfg.max_norm) & ~frozen
            if bad.any():
                x_new[bad] = x[bad]
                frozen |= bad
                diverged_at[bad] = grid[k]
                log.debug(f"{int(bad.sum())} samples diverged at t={grid[k]:.6g}")
        states[k] = x_new
        x = x_new
    return grid, states


def rk4_steps(field: Field, x0, h: float, count: int):
    """Yield (k, x_k) for k = 1..count on the grid k*h; stops early on divergence."""
    x = np.asarray(x0, dtype=float)
    for k in range(1, count + 1):
        x = _rk4_step(field, x, h)
        if _check(x, DIVERGENCE_LIMIT) is not None:
            return
        yield k, x


def _error_norm(err: np.ndarray, x: np.ndarray, x_new: np.ndarray, cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
    per_state = np.sqrt(np.mean((err / scale) ** 2, axis=-1))
    return float(np.max(per_state))


def _run_adaptive(field: Field, x0: np.ndarray, t_end: float, cfg: IntegratorConfig,
                  frozen: np.ndarray | None = None, diverged_at: np.ndarray | None = None):
    times = [0.0]
    states = [x0]
    t, x, h = 0.0, x0, min(cfg.step, t_end)
    f = field if frozen is None else _frozen_field(field, frozen)
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(x)
    if frozen is None:
        if _check(k1, math.inf) is not None:
            raise _diverged(times, states, t, x, "non-finite derivative")
    else:
        bad = _bad_rows(k1, math.inf)
        frozen |= bad
        diverged_at[bad] = 0.0
        k1 = np.where(frozen[..., None], 0.0, k1)
    steps = 0
    while t < t_end:
        steps += 1
        if steps > cfg.max_steps:
            raise IntegrationError(f"adaptive integration exceeded {cfg.max_steps} steps at t={t:.6g}")
        h = min(h, t_end - t)
        ks = [k1]
        with np.errstate(over="ignore", invalid="ignore"):
            for stage in range(1, 7):
                incr = sum(a * k for a, k in zip(_DP_A[stage], ks))
                ks.append(f(x + h * incr))
            x_new = x + h * sum(a * k for a, k in zip(_DP_A[6], ks))
        if frozen is None:
            reason = _check(x_new, cfg.max_norm)
            overflow = reason is not None and "non-finite" in reason
        else:
            reason = None
            bad = _bad_rows(x_new, math.inf) & ~frozen
            overflow = bool(bad.any())
        if overflow:
            # shrink before giving up: a too-large trial step can overflow
            if h > 1e-12 * max(1.0, t_end):
                h *= 0.2
                continue
            if frozen is None:
                raise _diverged(times, states, t, x, reason)
            frozen |= bad
            diverged_at[bad] = t
            k1 = np.where(frozen[..., None], 0.0, k1)
            continue
        err = h * sum(e * k for e, k in zip(_DP_E, ks))
        norm = _error_norm(err, x, x_new, cfg)
        if norm <= 1.0:
            k_last = ks[6]
            if frozen is None:
                if reason is not None:
                    raise _diverged(times, states, t, x, reason)
            else:
                big = _bad_rows(x_new, cfg.max_norm) & ~frozen
                if big.any():
                    x_new = np.where(big[..., None], x, x_new)
                    frozen |= big
                    diverged_at[big] = t + h
                    k_last = np.where(frozen[..., None], 0.0, k_last)
                    log.debug(f"{int(big.sum())} samples diverged at t={t + h:.6g}")
            t = t_end if t_end - (t + h) <= 1e-12 * max(1.0, t_end) else t + h
            x, k1 = x_new, k_last
            times.append(t)
            states.append(x)
            factor = 5.0 if norm == 0.0 else min(5.0, max(0.2, 0.9 * norm ** -0.2))
        else:
            factor = max(0.2, 0.9 * norm ** -0.2)
        h *= factor
        if h < 1e-14 * max(1.0, t_end):
            raise IntegrationError(f"step size underflow at t={t:.6g}")
    return np.asarray(times), np.stack(states)


def _run(field: Field, x0: np.ndarray, t_end: float, cfg: IntegratorConfig,
         frozen: np.ndarray | None = None, diverged_at: np.ndarray | None = None):
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if x0.shape[-1] != field.dim:
        raise DimensionMismatch(f"initial state has {x0.shape[-1]} components, field has dim {field.dim}")
    if cfg.method is Method.RK4:
        return _run_fixed(field, x0, t_end, cfg, frozen, diverged_at)
    return _run_adaptive(field, x0, t_end, cfg, frozen, diverged_at)


def integrate(field: Field, x0, t_end: float, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Solve x' = f(x) from (0, x0) to t_end, keeping every accepted step.

    Raises IntegrationDiverged with the last valid state and time; its
    ``trajectory`` attribute holds the samples computed so far.
    """
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    try:
        times, states = _run(field, x0, float(t_end), cfg)
    except IntegrationDiverged as exc:
        if exc.trajectory is not None:
            exc.trajectory = Trajectory(exc.trajectory[0], exc.trajectory[1], diverged=True, message=str(exc))
        raise
    return Trajectory(times, states)


def integrate_batch(field: Field, x0s, t_end: float, cfg: IntegratorConfig | None = None) -> BatchTrajectory:
    """Integrate N initial conditions (rows of ``x0s``) on one shared step sequence.

    A sample whose state turns non-finite or exceeds the divergence guard is
    frozen at its last valid state; the others carry on.
    """
    cfg = cfg or IntegratorConfig()
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    frozen = np.zeros(x0s.shape[0], dtype=bool)
    diverged_at = np.full(x0s.shape[0], np.nan)
    times, states = _run(field, x0s, float(t_end), cfg, frozen, diverged_at)
    if frozen.any():
        log.info(f"{int(frozen.sum())} of {len(frozen)} samples diverged before t={t_end:g}")
    return BatchTrajectory(times, states, diverged_at)


# --- Equilibria ---
def jacobian(field: Field, x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with per-coordinate step 1e-7 (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    h = FD_STEP * (1.0 + np.abs(x))
    shift = np.diag(h)
    forward = field(x[None, :] + shift)
    backward = field(x[None, :] - shift)
    return ((forward - backward) / (2.0 * h[:, None])).T


def equilibrium_solve(field: Field, guess, tol: float = 1e-10, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Damped Newton iteration on f(x) = 0.

    Steps are least-squares solutions of J dx = -f so rank-deficient
    Jacobians (rotational symmetry of swing models) still make progress.
    """
    x = np.asarray(guess, dtype=float).reshape(-1)
    if x.shape[0] != field.dim:
        raise DimensionMismatch(f"guess has {x.shape[0]} components, field has dim {field.dim}")
    r = field(x)
    res = float(np.max(np.abs(r)))
    for iteration in range(max_iter):
        if res <= tol:
            break
        step = np.linalg.lstsq(jacobian(field, x), -r, rcond=None)[0]
        lam = 1.0
        while lam >= 2.0 ** -20:
            x_try = x + lam * step
            r_try = field(x_try)
            res_try = float(np.max(np.abs(r_try)))
            if np.isfinite(res_try) and res_try < res:
                break
            lam *= 0.5
        else:
            log.debug(f"newton stalled after {iteration} iterations, residual {res:.3e}")
            break
        x, r, res = x_try, r_try, res_try
    if not res <= tol:
        raise NoEquilibriumFound(f"no equilibrium within {max_iter} iterations (residual {res:.3e})", x, res)
    assert float(np.max(np.abs(field(x)))) <= tol
    return x


def zero_field(dim: int) -> VectorField:
    return VectorField(dim, np.zeros_like, name="zero")


def linear_field(matrix: Sequence[Sequence[float]]) -> VectorField:
    """x' = A x, with A applied along the last axis."""
    a = np.asarray(matrix, dtype=float)
    return VectorField(a.shape[0], lambda x: x @ a.T, name="linear")
