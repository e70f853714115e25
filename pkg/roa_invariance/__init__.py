# roa_invariance/__init__.py
"""Region-of-attraction estimates from individually invariant sets, with a
power-system critical clearing time pipeline built on top."""
from .cct import (
    CctResult,
    CctSettings,
    CctStatus,
    EnergyCertificate,
    assess,
    bisection_cct_oracle,
    build_energy_certificate,
    build_power_roa,
    polytope_exit_cct,
    screen,
)
from .dynsys import DecomposedField, IntegratorConfig, Method, Trajectory, VectorField, integrate
from .errors import RoaError
from .examples import example, names
from .invariance import (
    AffineLimit,
    CandidateRoa,
    GraphLimit,
    IndividualInvariantSet,
    PointLimit,
    build_candidate,
    check_boundary_flow,
    check_trajectory_invariance,
)
from .polytope import HalfspacePolytope, intersect
from .powersys import Contingency, PowerCase, kron_reduce, load_case, power_flow, reduce_all
from .swing import swing_field, swing_system, synchronous_equilibrium

__version__ = "0.1.0"
