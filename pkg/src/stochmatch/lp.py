"""LP relaxations of the optimum online policy, derived quantities and statistics.

Bernoulli model, one variable per stored edge:

    max  sum w_it x_it
    s.t. sum_i x_it <= p_t                               (each t)
         x_it + p_t * sum_{t' < t} x_it' <= p_t          (each edge)
         x >= 0

The general (typed) model uses one column per arrival type k with time t_k
and probability p_k in place of (t, p_t).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .instance import BernoulliInstance, GeneralInstance
from .simplex import SimplexResult, SolverError, simplex_max

LpSolver = Callable[[np.ndarray, np.ndarray, np.ndarray], SimplexResult]

BINARY_TOL = 1e-7


def highs_solver(c, A, b) -> SimplexResult:
    """Alternative backend through scipy's HiGHS dual simplex (used as a cross-check)."""
    from scipy.optimize import linprog

    if len(c) == 0:
        return SimplexResult(np.zeros(0), 0.0, np.array([], dtype=int), 0)
    res = linprog(-np.asarray(c), A_ub=A, b_ub=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}", int(getattr(res, "nit", 0)))
    x = np.maximum(res.x, 0.0)
    return SimplexResult(x, float(np.dot(c, x)), np.array([], dtype=int), int(res.nit))


def _rates(x: np.ndarray, p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """r = x / (p (1 - y)), with r = 0 wherever x = 0."""
    denom = p * (1.0 - y)
    r = np.zeros_like(x)
    pos = (x > 0) & (denom > 0)
    r[pos] = x[pos] / denom[pos]
    # positive mass over a vanishing denominator is infeasible; make it visible
    r[(x > 0) & (denom <= 0)] = np.inf
    return r


@dataclass(frozen=True)
class LpSolution:
    """Fractional matching x as an (n, T) array."""

    instance: BernoulliInstance
    x: np.ndarray
    objective: float
    basic: bool = True
    iterations: int = 0

    @cached_property
    def y(self) -> np.ndarray:
        """y[i, t] = sum of x[i, t'] over t' < t."""
        y = np.zeros_like(self.x)
        if self.x.shape[1] > 1:
            y[:, 1:] = np.cumsum(self.x, axis=1)[:, :-1]
        return y

    @cached_property
    def r(self) -> np.ndarray:
        return _rates(self.x, self.instance.p_array[None, :], self.y)

    def fractional_count(self, tol: float = BINARY_TOL) -> int:
        r = self.r
        return int(np.sum((r > tol) & (r < 1.0 - tol)))

    def to_dict(self) -> dict:
        n, T = self.x.shape
        return {"x": [{"i": i + 1, "t": t + 1, "v": float(self.x[i, t])}
                      for t in range(T) for i in range(n) if self.x[i, t] != 0.0],
                "objective": float(self.objective)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


@dataclass(frozen=True)
class GeneralLpSolution:
    """Typed fractional matching x as an (n, K) array, one column per arrival type."""

    instance: GeneralInstance
    x: np.ndarray
    objective: float
    basic: bool = True
    iterations: int = 0

    @cached_property
    def y(self) -> np.ndarray:
        """y[i, t] = mass of node i over all types at times before t; shape (n, T)."""
        inst = self.instance
        per_t = np.zeros((inst.n, inst.T))
        for k in range(inst.K):
            per_t[:, inst.type_time[k]] += self.x[:, k]
        y = np.zeros_like(per_t)
        if inst.T > 1:
            y[:, 1:] = np.cumsum(per_t, axis=1)[:, :-1]
        return y

    @cached_property
    def r(self) -> np.ndarray:
        inst = self.instance
        return _rates(self.x, inst.type_prob[None, :], self.y[:, inst.type_time])

    def to_dict(self) -> dict:
        inst = self.instance
        out = []
        for k, a in enumerate(inst.types):
            for i in range(inst.n):
                if self.x[i, k] != 0.0:
                    out.append({"i": i + 1, "t": a.t + 1, "j": a.j + 1, "v": float(self.x[i, k])})
        return {"x": out, "objective": float(self.objective)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def build_lp(instance: BernoulliInstance):
    """Return (c, A, b, columns) with columns[k] = (i, t) of variable k."""
    columns = [(i, t) for i, t, _ in instance.edges]
    c = np.array([w for _, _, w in instance.edges], dtype=float)
    p = instance.p_array
    rows, rhs = [], []
    by_t: dict[int, list[int]] = {}
    by_i: dict[int, list[int]] = {}
    for k, (i, t) in enumerate(columns):
        by_t.setdefault(t, []).append(k)
        by_i.setdefault(i, []).append(k)
    for t in sorted(by_t):
        row = np.zeros(len(columns))
        row[by_t[t]] = 1.0
        rows.append(row)
        rhs.append(p[t])
    for k, (i, t) in enumerate(columns):
        row = np.zeros(len(columns))
        row[k] = 1.0
        for k2 in by_i[i]:
            if columns[k2][1] < t:
                row[k2] = p[t]
        rows.append(row)
        rhs.append(p[t])
    A = np.array(rows) if rows else np.zeros((0, len(columns)))
    return c, A, np.array(rhs, dtype=float), columns


def solve_lp(instance: BernoulliInstance, solver: LpSolver | None = None) -> LpSolution:
    solver = solver or simplex_max
    c, A, b, columns = build_lp(instance)
    res = solver(c, A, b)
    x = np.zeros((instance.n, instance.T))
    for k, (i, t) in enumerate(columns):
        x[i, t] = res.x[k]
    x.setflags(write=False)
    return LpSolution(instance, x, float(c @ res.x) if len(c) else 0.0, res.basic, res.iterations)


def build_lp_general(instance: GeneralInstance):
    """Return (c, A, b, columns) with columns[v] = (i, k) for type column k."""
    W, M = instance.weight_matrix, instance.edge_mask
    tk, pk = instance.type_time, instance.type_prob
    columns = [(i, k) for k in range(instance.K) for i in range(instance.n) if M[i, k]]
    c = np.array([W[i, k] for i, k in columns], dtype=float)
    rows, rhs = [], []
    for k in range(instance.K):
        idx = [v for v, (_, kk) in enumerate(columns) if kk == k]
        if idx:
            row = np.zeros(len(columns))
            row[idx] = 1.0
            rows.append(row)
            rhs.append(pk[k])
    for v, (i, k) in enumerate(columns):
        row = np.zeros(len(columns))
        row[v] = 1.0
        for v2, (i2, k2) in enumerate(columns):
            if i2 == i and tk[k2] < tk[k]:
                row[v2] = pk[k]
        rows.append(row)
        rhs.append(pk[k])
    A = np.array(rows) if rows else np.zeros((0, len(columns)))
    return c, A, np.array(rhs, dtype=float), columns


def solve_lp_general(instance: GeneralInstance, solver: LpSolver | None = None) -> GeneralLpSolution:
    solver = solver or simplex_max
    c, A, b, columns = build_lp_general(instance)
    res = solver(c, A, b)
    x = np.zeros((instance.n, instance.K))
    for v, (i, k) in enumerate(columns):
        x[i, k] = res.x[v]
    x.setflags(write=False)
    return GeneralLpSolution(instance, x, float(c @ res.x) if len(c) else 0.0, res.basic, res.iterations)


# -------------------------------------------------------------- feasibility

@dataclass
class Violation:
    constraint: str
    i: int | None
    t: int | None
    slack: float

    def __str__(self):
        where = ", ".join(f"{k}={v + 1}" for k, v in (("i", self.i), ("t", self.t)) if v is not None)
        return f"{self.constraint} violated at {where} (slack {self.slack:.3g})"


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def check_feasibility(x, instance: BernoulliInstance, tol: float = 1e-7) -> FeasibilityReport:
    """List violated constraints; slack < 0 means violated by that amount.

    Besides the two LP constraint families this checks the implied degree bound
    y[i, t] + x[i, t] <= 1 - prod_{t' <= t} (1 - p_t'), which follows from
    x[i, t] <= p_t (1 - y[i, t]) by induction over t.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n, instance.T):
        raise ValueError(f"x has shape {x.shape}, expected {(instance.n, instance.T)}")
    p = instance.p_array
    rep = FeasibilityReport()
    for i, t in zip(*np.nonzero(x < -tol)):
        rep.violations.append(Violation("nonnegativity", int(i), int(t), float(x[i, t])))
    s1 = p - x.sum(axis=0)
    for t in np.flatnonzero(s1 < -tol):
        rep.violations.append(Violation("arrival capacity", None, int(t), float(s1[t])))
    y = np.zeros_like(x)
    y[:, 1:] = np.cumsum(x, axis=1)[:, :-1]
    s2 = p[None, :] * (1.0 - y) - x
    for i, t in zip(*np.nonzero(s2 < -tol)):
        rep.violations.append(Violation("offline availability", int(i), int(t), float(s2[i, t])))
    cap = 1.0 - np.cumprod(1.0 - p)
    s3 = cap[None, :] - (y + x)
    for i, t in zip(*np.nonzero(s3 < -tol)):
        rep.violations.append(Violation("implied degree bound", int(i), int(t), float(s3[i, t])))
    return rep


def check_feasibility_general(x, instance: GeneralInstance, tol: float = 1e-7) -> FeasibilityReport:
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n, instance.K):
        raise ValueError(f"x has shape {x.shape}, expected {(instance.n, instance.K)}")
    rep = FeasibilityReport()
    sol = GeneralLpSolution(instance, x, 0.0)
    tk, pk = instance.type_time, instance.type_prob
    for i, k in zip(*np.nonzero(x < -tol)):
        rep.violations.append(Violation("nonnegativity", int(i), int(tk[k]), float(x[i, k])))
    s1 = pk - x.sum(axis=0)
    for k in np.flatnonzero(s1 < -tol):
        rep.violations.append(Violation("type capacity", None, int(tk[k]), float(s1[k])))
    s2 = pk[None, :] * (1.0 - sol.y[:, tk]) - x
    for i, k in zip(*np.nonzero(s2 < -tol)):
        rep.violations.append(Violation("offline availability", int(i), int(tk[k]), float(s2[i, k])))
    return rep


# --------------------------------------------------------------- statistics

@dataclass(frozen=True)
class LpStatistics:
    """x-weighted averages of r*y, r*(1-y) and r, split at y <= theta."""

    theta: float
    alpha: float
    beta_le: float
    beta_gt: float
    S_le: float
    S_gt: float
    total_mass: float

    @property
    def zero_mass(self) -> bool:
        return self.total_mass == 0.0


def lp_statistics(solution: LpSolution, theta: float) -> LpStatistics:
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    x, y, r = solution.x, solution.y, solution.r
    mass = float(x.sum())
    if mass <= 0.0:
        return LpStatistics(theta, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    low = y <= theta
    rx = r * x
    return LpStatistics(
        theta=theta,
        alpha=float(np.sum(rx * y) / mass),
        beta_le=float(np.sum((rx * (1 - y))[low]) / mass),
        beta_gt=float(np.sum((rx * (1 - y))[~low]) / mass),
        S_le=float(np.sum(rx[low]) / mass),
        S_gt=float(np.sum(rx[~low]) / mass),
        total_mass=mass,
    )
