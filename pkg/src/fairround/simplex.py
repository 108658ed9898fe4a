"""Dense two-phase primal simplex with Bland's rule.

Solves ``min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0`` for
nonnegative right-hand sides, which is all the time-indexed LP needs.
Bland's rule (lowest-index entering column, lowest-index leaving basic
variable among ratio ties) guarantees termination on the heavily
degenerate scheduling LPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
COST_TOL = 1e-9
RATIO_TIE = 1e-12
FEAS_TOL = 1e-7


class SimplexError(RuntimeError):
    """Internal failure: unboundedness or pivot budget exhausted."""


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible"
    pivots: int
    phase1_residual: float


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factor = tab[:, col].copy()
    factor[row] = 0.0
    nz = np.nonzero(factor)[0]
    if nz.size:
        tab[nz] -= np.outer(factor[nz], tab[row])


def _bland(tab: np.ndarray, basis: np.ndarray, ncols: int, max_pivots: int) -> int:
    """Run Bland pivots on ``tab`` (objective in the last row) until optimal."""
    pivots = 0
    rows = tab.shape[0] - 1
    while True:
        costs = tab[-1, :ncols]
        neg = np.nonzero(costs < -COST_TOL)[0]
        if neg.size == 0:
            return pivots
        col = int(neg[0])
        column = tab[:rows, col]
        ok = np.nonzero(column > PIVOT_TOL)[0]
        if ok.size == 0:
            raise SimplexError("LP is unbounded")
        ratios = tab[ok, -1] / column[ok]
        best = ratios.min()
        tied = ok[ratios <= best + RATIO_TIE]
        row = int(tied[np.argmin(basis[tied])])
        _pivot(tab, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise SimplexError(f"pivot budget of {max_pivots} exhausted")


def solve(c, a_eq, b_eq, a_ub, b_ub, max_pivots: int = 200_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, c.size)
    a_ub = np.asarray(a_ub, dtype=float).reshape(-1, c.size)
    b_eq = np.asarray(b_eq, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    if (b_eq < 0).any() or (b_ub < 0).any():
        raise ValueError("right-hand sides must be nonnegative")
    nv, ne, nu = c.size, b_eq.size, b_ub.size
    rows = ne + nu
    # columns: structural | slacks | artificials | rhs
    ncols = nv + nu + ne
    tab = np.zeros((rows + 1, ncols + 1))
    tab[:ne, :nv] = a_eq
    tab[ne:rows, :nv] = a_ub
    tab[ne:rows, nv:nv + nu] = np.eye(nu)
    tab[:ne, nv + nu:ncols] = np.eye(ne)
    tab[:ne, -1] = b_eq
    tab[ne:rows, -1] = b_ub
    basis = np.concatenate([np.arange(nv + nu, ncols), np.arange(nv, nv + nu)])

    # phase 1: minimize the artificial sum
    tab[-1, :nv + nu] = -tab[:ne, :nv + nu].sum(axis=0)
    tab[-1, -1] = -tab[:ne, -1].sum()
    pivots = _bland(tab, basis, ncols, max_pivots)
    residual = -tab[-1, -1]
    if residual > FEAS_TOL:
        return SimplexResult(np.zeros(nv), float("nan"), "infeasible", pivots, float(residual))

    # drive zero-level artificials out of the basis, dropping redundant rows
    keep = np.ones(rows, dtype=bool)
    for r in range(rows):
        if basis[r] >= nv + nu:
            cand = np.nonzero(np.abs(tab[r, :nv + nu]) > PIVOT_TOL)[0]
            if cand.size:
                _pivot(tab, r, int(cand[0]))
                basis[r] = int(cand[0])
                pivots += 1
            else:
                keep[r] = False
    keep_rows = np.concatenate([np.nonzero(keep)[0], [rows]])
    tab = np.delete(tab[keep_rows], np.s_[nv + nu:ncols], axis=1)
    basis = basis[keep]
    ncols = nv + nu

    # phase 2
    cost = np.concatenate([c, np.zeros(nu)])
    tab[-1, :ncols] = cost - cost[basis] @ tab[:-1, :ncols]
    tab[-1, -1] = -cost[basis] @ tab[:-1, -1]
    pivots += _bland(tab, basis, ncols, max_pivots)

    x = np.zeros(ncols)
    x[basis] = tab[:-1, -1]
    return SimplexResult(x[:nv], float(c @ x[:nv]), "optimal", pivots, float(residual))
