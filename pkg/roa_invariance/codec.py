# roa_invariance/codec.py
"""JSON and CSV formats for polytopes, candidate sets, reports, grids,
trajectories and CCT tables. build_* returns text or plain dicts, parse_*
reverses it; floats are written with repr precision."""
from __future__ import annotations

import csv
import io
import json
from typing import Any, Iterable, Mapping

import numpy as np

from .cct import CctResult, CctStatus
from .dynsys import Trajectory
from .errors import PolytopeError
from .examples import FieldGrid
from .invariance import (
    AffineLimit,
    CandidateRoa,
    FacetFlowReport,
    GraphLimit,
    PointLimit,
    TrajectoryInvarianceReport,
)
from .polytope import HalfspacePolytope
from .powersys import Contingency

CCT_HEADER = ("faulted_bus", "tripped_line", "t_c_polytope", "t_c_oracle", "status")


def _num(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _opt(text: str) -> float | None:
    return None if text == "" else float(text)


def _json_num(value):
    """NaN/inf are not JSON; report them as null."""
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None


def dump_json(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _write_csv(header: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


# --- polytopes and candidate sets ---
def build_polytope(p: HalfspacePolytope) -> dict:
    return {"A": p.a_matrix.tolist(), "b": p.b_vector.tolist(), "dim": p.dim}


def parse_polytope(doc: Mapping[str, Any]) -> HalfspacePolytope:
    if not isinstance(doc, Mapping) or "A" not in doc or "b" not in doc:
        raise PolytopeError("polytope document needs keys 'A' and 'b'")
    rows = doc["A"]
    dim = doc.get("dim")
    if not rows:
        if dim is None:
            raise PolytopeError("a polytope with no rows needs 'dim'")
        return HalfspacePolytope.whole_space(int(dim))
    a = np.asarray(rows, dtype=float)
    if dim is not None and a.shape[1] != int(dim):
        raise PolytopeError(f"'dim' is {dim} but rows have {a.shape[1]} columns")
    return HalfspacePolytope(a, np.asarray(doc["b"], dtype=float))


def build_limit(limit) -> dict:
    if isinstance(limit, PointLimit):
        return {"kind": "point", "point": limit.point.tolist(), "description": limit.description}
    if isinstance(limit, AffineLimit):
        return {"kind": "affine", "C": limit.c_matrix.tolist(), "d": limit.d_vector.tolist(),
                "description": limit.description}
    if isinstance(limit, GraphLimit):
        return {"kind": "graph", "dependent": limit.dependent, "description": limit.description}
    raise TypeError(f"unknown limit set {limit!r}")


def build_candidate(roa: CandidateRoa) -> dict:
    return {
        "omega_e": build_polytope(roa.omega_e),
        "equilibrium": roa.equilibrium.tolist(),
        "sets": [
            {"label": s.label, "polytope": build_polytope(s.polytope), "limit": build_limit(s.limit)}
            for s in roa.sources
        ],
    }


# --- reports ---
def build_flow_report(report: FacetFlowReport) -> dict:
    return {
        "tol": report.tol,
        "passed": report.passed,
        "facets": [
            {
                "facet": f.facet,
                "normal": list(f.normal),
                "bound": f.bound,
                "samples": f.samples,
                "part_maxima": [_json_num(v) for v in f.part_maxima],
                "composite_max": _json_num(f.composite_max),
            }
            for f in report.facets
        ],
        "violations": [{"facet": k, "part": part, "value": value} for k, part, value in report.violations],
    }


def build_invariance_report(report: TrajectoryInvarianceReport) -> dict:
    return {
        "n_samples": report.n_samples,
        "t_end": report.t_end,
        "invariant": report.invariant,
        "converged": report.converged,
        "passed": report.passed,
        "max_terminal_distance": report.max_distance,
        "convergence_tol": report.convergence_tol,
        "exits": [{"sample": e.sample, "time": e.time, "state": list(e.state)} for e in report.exits],
    }


# --- grids and trajectories ---
def build_grid_csv(grid: FieldGrid) -> str:
    n = grid.states.shape[1]
    header = [f"x{k + 1}" for k in range(n)] + [f"f{k + 1}" for k in range(n)]
    rows = ([_num(v) for v in np.r_[x, f]] for x, f in zip(grid.states, grid.values))
    return _write_csv(header, rows)


def build_trajectory_csv(traj: Trajectory) -> str:
    header = ["t"] + [f"x{k + 1}" for k in range(traj.dim)]
    rows = ([_num(t)] + [_num(v) for v in x] for t, x in zip(traj.times, traj.states))
    return _write_csv(header, rows)


def parse_trajectory_csv(text: str) -> Trajectory:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "t":
        raise ValueError("trajectory CSV must start with a 't' column")
    data = np.array([[float(v) for v in row] for row in reader if row])
    if data.size == 0:
        raise ValueError("trajectory CSV has no samples")
    return Trajectory(data[:, 0], data[:, 1:])


# --- CCT tables ---
def build_cct_csv(results: Iterable[CctResult]) -> str:
    rows = (
        [
            "" if r.contingency is None else str(r.contingency.faulted_bus),
            "" if r.contingency is None else r.contingency.line_label,
            _num(r.t_c_polytope),
            _num(r.t_c_oracle),
            r.status.value,
        ]
        for r in results
    )
    return _write_csv(CCT_HEADER, rows)


def parse_cct_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CCT_HEADER:
        raise ValueError(f"CCT table header must be {','.join(CCT_HEADER)}")
    return [
        {
            "faulted_bus": int(row["faulted_bus"]) if row["faulted_bus"] else None,
            "tripped_line": row["tripped_line"],
            "t_c_polytope": _opt(row["t_c_polytope"]),
            "t_c_oracle": _opt(row["t_c_oracle"]),
            "status": CctStatus(row["status"]),
        }
        for row in reader
    ]


def build_cct_json(results: Iterable[CctResult]) -> list[dict]:
    return [
        {
            "contingency": None if r.contingency is None else str(r.contingency),
            "t_c_polytope": r.t_c_polytope,
            "t_c_oracle": r.t_c_oracle,
            "exit_state": None if r.exit_state is None else list(r.exit_state),
            "dt": r.dt,
            "status": r.status.value,
            "oracle_flag": r.oracle_flag,
            "message": r.message,
            "conservative": r.conservative,
        }
        for r in results
    ]


def parse_cct_json(doc: Iterable[Mapping[str, Any]]) -> list[CctResult]:
    return [
        CctResult(
            contingency=None if row["contingency"] is None else Contingency.parse(row["contingency"]),
            t_c_polytope=row["t_c_polytope"],
            t_c_oracle=row["t_c_oracle"],
            exit_state=None if row["exit_state"] is None else tuple(row["exit_state"]),
            dt=row["dt"],
            status=CctStatus(row["status"]),
            oracle_flag=row.get("oracle_flag", ""),
            message=row.get("message", ""),
        )
        for row in doc
    ]
