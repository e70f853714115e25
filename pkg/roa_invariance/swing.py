# roa_invariance/swing.py
"""Classical swing model on a reduced network.

State layout is (delta_1..delta_n, omega_1..omega_n); angles in rad, speeds
in rad/s relative to synchronous speed.

    delta_i' = omega_i
    M_i omega_i' = P_i - sum_j E_i E_j (B_ij sin d_ij + G_ij cos d_ij) - D_i omega_i
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dynsys import DecomposedField, VectorField, equilibrium_solve
from .errors import DimensionMismatch
from .powersys import ReducedSystem

log = logging.getLogger("swing")


def _couplings(system: ReducedSystem) -> tuple[np.ndarray, np.ndarray]:
    """E_i E_j B_ij and E_i E_j G_ij."""
    e = system.e_magnitude
    scale = np.outer(e, e)
    return scale * system.y_reduced.imag, scale * system.y_reduced.real


def net_injection(system: ReducedSystem) -> np.ndarray:
    """P_i minus the constant self-conductance term E_i^2 G_ii."""
    return system.p_mech - system.e_magnitude ** 2 * np.real(np.diag(system.y_reduced))


def electrical_power(system: ReducedSystem, delta) -> np.ndarray:
    """P_e,i(delta) including the self term; vectorized over leading axes."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != system.n_mach:
        raise DimensionMismatch(f"{delta.shape[-1]} angles for {system.n_mach} machines")
    c_b, c_g = _couplings(system)
    diff = delta[..., :, None] - delta[..., None, :]
    return np.sum(c_b * np.sin(diff) + c_g * np.cos(diff), axis=-1)


def _pair_terms(system: ReducedSystem):
    c_b, c_g = _couplings(system)
    return [(i, j, c_b[i, j], c_g[i, j]) for i, j in combinations(range(system.n_mach), 2)]


# --- full (delta, omega) model ---
def swing_field(system: ReducedSystem) -> DecomposedField:
    """Linear part first, then one interaction part per machine pair i < j."""
    n = system.n_mach
    p_net = net_injection(system)
    m = system.m_inertia
    d = system.d_damp

    def linear(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        out[..., :n] = x[..., n:]
        out[..., n:] = (p_net - d * x[..., n:]) / m
        return out

    def pair(i: int, j: int, b: float, g: float):
        def part(x: np.ndarray) -> np.ndarray:
            out = np.zeros_like(x)
            d_ij = x[..., i] - x[..., j]
            s, c = np.sin(d_ij), np.cos(d_ij)
            out[..., n + i] = -(b * s + g * c) / m[i]
            out[..., n + j] = -(-b * s + g * c) / m[j]
            return out

        return part

    parts = [VectorField(2 * n, linear, "linear")]
    parts += [VectorField(2 * n, pair(i, j, b, g), f"pair{i + 1}{j + 1}") for i, j, b, g in _pair_terms(system)]
    return DecomposedField(tuple(parts), name=f"swing[{system.variant}]")


def swing_system(system: ReducedSystem) -> VectorField:
    """The same dynamics evaluated in one vectorized pass."""
    n = system.n_mach
    p_net = net_injection(system)
    c_b, c_g = _couplings(system)
    np.fill_diagonal(c_g, 0.0)
    m = system.m_inertia
    d = system.d_damp

    def func(x: np.ndarray) -> np.ndarray:
        delta, omega = x[..., :n], x[..., n:]
        diff = delta[..., :, None] - delta[..., None, :]
        p_e = np.sum(c_b * np.sin(diff) + c_g * np.cos(diff), axis=-1)
        return np.concatenate([omega, (p_net - p_e - d * omega) / m], axis=-1)

    return VectorField(2 * n, func, name=f"swing[{system.variant}]")


def energy(system: ReducedSystem, state) -> np.ndarray:
    """Classical energy function; conserved only for lossless, undamped systems."""
    state = np.asarray(state, dtype=float)
    n = system.n_mach
    delta, omega = state[..., :n], state[..., n:]
    c_b, _ = _couplings(system)
    kinetic = 0.5 * np.sum(system.m_inertia * omega ** 2, axis=-1)
    potential = -np.sum(net_injection(system) * delta, axis=-1)
    for i, j in combinations(range(n), 2):
        potential = potential - c_b[i, j] * np.cos(delta[..., i] - delta[..., j])
    return kinetic + potential


# --- reduced-order angle model ---
def relative_injection(system: ReducedSystem) -> np.ndarray:
    """Net injections less each machine's inertial share of the total, P_i - M_i P_T / M_T."""
    p_net = net_injection(system)
    m = system.m_inertia
    return p_net - m * p_net.sum() / m.sum()


def reduced_angle_field(system: ReducedSystem, centre_of_inertia: bool = False) -> DecomposedField:
    """delta_j1' = P_j - P_e,j(delta_21..delta_n1) for j = 2..n, machine 1 as reference.

    Parts: the constant injection, then one part per machine pair. With
    ``centre_of_inertia`` the injections are ``relative_injection``; on a
    system without transfer conductances the field is then -grad of
    ``angle_potential``.
    """
    n = system.n_mach
    if n < 2:
        raise DimensionMismatch("the reduced angle model needs at least two machines")
    p_net = (relative_injection(system) if centre_of_inertia else net_injection(system))[1:]

    def injection(y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(p_net, y.shape).copy()

    def angle(y: np.ndarray, k: int) -> np.ndarray:
        return np.zeros(y.shape[:-1]) if k == 0 else y[..., k - 1]

    def pair(i: int, j: int, b: float, g: float):
        def part(y: np.ndarray) -> np.ndarray:
            out = np.zeros_like(y)
            d_ij = angle(y, i) - angle(y, j)
            s, c = np.sin(d_ij), np.cos(d_ij)
            if i > 0:
                out[..., i - 1] = -(b * s + g * c)
            out[..., j - 1] = -(-b * s + g * c)
            return out

        return part

    parts = [VectorField(n - 1, injection, "injection")]
    parts += [VectorField(n - 1, pair(i, j, b, g), f"pair{i + 1}{j + 1}") for i, j, b, g in _pair_terms(system)]
    return DecomposedField(tuple(parts), name=f"angles[{system.variant}]")


def angle_potential(system: ReducedSystem, angles) -> np.ndarray:
    """Potential of the reduced angle model in delta_i1 coordinates.

    V = -sum_i (P_i - M_i P_T / M_T) delta_i1 - sum_{i<j} E_i E_j B_ij cos delta_ij
    """
    angles = np.asarray(angles, dtype=float)
    n = system.n_mach
    if angles.shape[-1] != n - 1:
        raise DimensionMismatch(f"{angles.shape[-1]} relative angles for {n} machines")
    c_b, _ = _couplings(system)
    delta = np.concatenate([np.zeros(angles.shape[:-1] + (1,)), angles], axis=-1)
    value = -np.sum(relative_injection(system)[1:] * angles, axis=-1)
    for i, j in combinations(range(n), 2):
        value = value - c_b[i, j] * np.cos(delta[..., i] - delta[..., j])
    return value


def coi_kinetic_energy(system: ReducedSystem, omega) -> np.ndarray:
    """1/2 sum_i M_i (omega_i - omega_coi)^2."""
    omega = np.asarray(omega, dtype=float)
    m = system.m_inertia
    coi = np.sum(m * omega, axis=-1, keepdims=True) / m.sum()
    return 0.5 * np.sum(m * (omega - coi) ** 2, axis=-1)


@dataclass(frozen=True)
class SynchronousState:
    delta: np.ndarray
    slip: float

    @property
    def relative(self) -> np.ndarray:
        """delta_i1 = delta_i - delta_1 for i = 2..n."""
        return self.delta[1:] - self.delta[0]


def synchronous_equilibrium(system: ReducedSystem, guess=None, tol: float = 1e-10) -> SynchronousState:
    """Angles (machine 1 at zero) and common slip s with P_i - P_e,i - D_i s = 0.

    Without damping there is no slip; the machines share one acceleration
    instead, so each mismatch equals its inertial share of the total.
    """
    n = system.n_mach
    p_net = net_injection(system)
    c_b, c_g = _couplings(system)
    np.fill_diagonal(c_g, 0.0)
    d = system.d_damp
    damped = bool(np.any(d > 0))

    def angles(z: np.ndarray) -> np.ndarray:
        zero = np.zeros(z.shape[:-1] + (1,))
        return np.concatenate([zero, z[..., : n - 1]], axis=-1)

    def residual(z: np.ndarray) -> np.ndarray:
        delta = angles(z)
        diff = delta[..., :, None] - delta[..., None, :]
        mismatch = p_net - np.sum(c_b * np.sin(diff) + c_g * np.cos(diff), axis=-1)
        if damped:
            return mismatch - d * z[..., n - 1: n]
        m = system.m_inertia
        shared = m * np.sum(mismatch, axis=-1, keepdims=True) / m.sum()
        return (mismatch - shared)[..., 1:]

    dim = n if damped else n - 1
    if guess is None:
        guess = system.initial_angles
    guess = np.asarray(guess, dtype=float)
    start = np.zeros(dim)
    start[: n - 1] = guess[1:] - guess[0]
    z = equilibrium_solve(VectorField(dim, residual, "synchronous"), start, tol=tol)
    slip = float(z[n - 1]) if damped else 0.0
    log.debug(f"synchronous equilibrium [{system.variant}]: slip {slip:.3e} rad/s")
    return SynchronousState(np.r_[0.0, z[: n - 1]], slip)
