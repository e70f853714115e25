# roa_invariance/simplex.py
"""Dense two-phase simplex with Bland's rule over {x : A x <= b}, x free.

Free variables are split as x = u - v. Rows with a negative bound are
negated and given an artificial variable; phase 1 minimizes the sum of
artificials, phase 2 (optional) minimizes c.x from the phase-1 basis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import RoaError

log = logging.getLogger("simplex")

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-12
MAX_PIVOTS = 100_000


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    value: float
    infeasibility: float
    pivots: int


class _Tableau:
    def __init__(self, a: np.ndarray, b: np.ndarray):
        m, n = a.shape
        self.n = n
        negative = b < 0
        sign = np.where(negative, -1.0, 1.0)
        body = np.hstack([a, -a, np.eye(m)]) * sign[:, None]
        art_rows = np.flatnonzero(negative)
        art = np.zeros((m, len(art_rows)))
        art[art_rows, np.arange(len(art_rows))] = 1.0
        self.t = np.hstack([body, art])
        self.rhs = b * sign
        self.first_art = 2 * n + m
        self.basis = np.where(negative, 0, 2 * n + np.arange(m))
        self.basis[art_rows] = self.first_art + np.arange(len(art_rows))
        self.pivots = 0

    @property
    def width(self) -> int:
        return self.t.shape[1]

    def pivot(self, row: int, col: int):
        self.pivots += 1
        if self.pivots > MAX_PIVOTS:
            raise RoaError(f"simplex exceeded {MAX_PIVOTS} pivots")
        p = self.t[row, col]
        self.t[row] /= p
        self.rhs[row] /= p
        factor = self.t[:, col].copy()
        factor[row] = 0.0
        self.t -= np.outer(factor, self.t[row])
        self.rhs -= factor * self.rhs[row]
        self.basis[row] = col

    def run(self, cost: np.ndarray, allowed: np.ndarray) -> LpStatus:
        """Bland's rule: lowest-index improving column, lowest-index leaving variable on ties."""
        while True:
            reduced = cost - cost[self.basis] @ self.t
            improving = np.flatnonzero(allowed & (reduced < -PIVOT_TOL))
            if improving.size == 0:
                return LpStatus.OPTIMAL
            col = int(improving[0])
            column = self.t[:, col]
            rows = np.flatnonzero(column > PIVOT_TOL)
            if rows.size == 0:
                return LpStatus.UNBOUNDED
            ratios = self.rhs[rows] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + PIVOT_TOL * (1.0 + abs(best))]
            row = int(ties[np.argmin(self.basis[ties])])
            self.pivot(row, col)

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis; drop rows that stay redundant."""
        keep = np.ones(len(self.basis), dtype=bool)
        for row in range(len(self.basis)):
            if self.basis[row] < self.first_art:
                continue
            candidates = np.flatnonzero(np.abs(self.t[row, : self.first_art]) > 1e-9)
            if candidates.size:
                self.pivot(row, int(candidates[0]))
            else:
                keep[row] = False
        self.t = self.t[keep]
        self.rhs = self.rhs[keep]
        self.basis = self.basis[keep]

    def point(self) -> np.ndarray:
        values = np.zeros(self.width)
        values[self.basis] = self.rhs
        return values[: self.n] - values[self.n: 2 * self.n]


def solve(a, b, c=None) -> LpResult:
    """Feasibility (c is None) or minimization of c.x over A x <= b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    if m == 0:
        x = np.zeros(n)
        if c is not None and np.any(np.asarray(c) != 0):
            return LpResult(LpStatus.UNBOUNDED, None, -np.inf, 0.0, 0)
        return LpResult(LpStatus.OPTIMAL, x, 0.0, 0.0, 0)

    tab = _Tableau(a, b)
    phase_one = np.zeros(tab.width)
    phase_one[tab.first_art:] = 1.0
    tab.run(phase_one, np.ones(tab.width, dtype=bool))
    infeasibility = float(phase_one[tab.basis] @ tab.rhs)
    if infeasibility > FEAS_TOL:
        log.debug(f"phase 1 infeasible: residual {infeasibility:.3e} after {tab.pivots} pivots")
        return LpResult(LpStatus.INFEASIBLE, None, np.inf, infeasibility, tab.pivots)
    if c is None:
        return LpResult(LpStatus.OPTIMAL, tab.point(), 0.0, infeasibility, tab.pivots)

    tab.drive_out_artificials()
    c = np.asarray(c, dtype=float)
    cost = np.zeros(tab.width)
    cost[:n] = c
    cost[n: 2 * n] = -c
    allowed = np.arange(tab.width) < tab.first_art
    status = tab.run(cost, allowed)
    if status is LpStatus.UNBOUNDED:
        return LpResult(status, None, -np.inf, infeasibility, tab.pivots)
    x = tab.point()
    return LpResult(LpStatus.OPTIMAL, x, float(c @ x), infeasibility, tab.pivots)
