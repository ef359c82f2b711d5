"""Dense tableau simplex for max c.x s.t. A x <= b, x >= 0 with b >= 0.

Because b >= 0 the all-slack basis is feasible, so a single phase suffices.
Bland's rule (lowest-index entering column, lowest-index leaving variable on
ratio ties) rules out cycling on degenerate vertices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    """Raised when the simplex cannot finish (iteration cap, unboundedness, bad input)."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(f"{message} (after {iterations} pivots)")
        self.iterations = iterations


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    basis: np.ndarray
    iterations: int
    basic: bool = True


def simplex_max(c, A, b, tol: float = 1e-9, max_iter: int | None = None) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape if A.size else (len(b), len(c))
    if len(c) != n or len(b) != m:
        raise SolverError("dimension mismatch between c, A and b")
    if np.any(b < -tol):
        raise SolverError("right-hand side must be non-negative")
    if n == 0:
        return SimplexResult(np.zeros(0), 0.0, np.arange(m), 0)
    if max_iter is None:
        max_iter = 50 * (n + m) + 1000

    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = np.maximum(b, 0.0)
    tab[m, :n] = c
    basis = np.arange(n, n + m)

    it = 0
    while True:
        reduced = tab[m, :-1]
        candidates = np.flatnonzero(reduced > tol)
        if candidates.size == 0:
            break
        if it >= max_iter:
            raise SolverError("iteration limit reached", it)
        j = candidates[0]
        col = tab[:m, j]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            raise SolverError(f"objective unbounded along column {j}", it)
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best + tol]
        r = tied[np.argmin(basis[tied])]
        tab[r] /= tab[r, j]
        others = np.flatnonzero(np.abs(tab[:, j]) > 0)
        others = others[others != r]
        tab[others] -= np.outer(tab[others, j], tab[r])
        basis[r] = j
        it += 1

    x_full = np.zeros(n + m)
    x_full[basis] = tab[:m, -1]
    # recompute the basic values from the original data to shed pivoting error
    B = np.hstack([A, np.eye(m)])[:, basis]
    try:
        xb = np.linalg.solve(B, np.maximum(b, 0.0))
        if np.all(xb > -1e-9) and np.all(np.isfinite(xb)):
            x_full[:] = 0.0
            x_full[basis] = np.maximum(xb, 0.0)
    except np.linalg.LinAlgError:
        pass
    x = x_full[:n]
    return SimplexResult(x, float(c @ x), basis.copy(), it)
