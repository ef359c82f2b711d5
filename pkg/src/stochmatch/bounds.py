"""Lower bounds on E[min(1, X)] for X = sum_i c_i X_i with X_i ~ Ber(q_i).

Also hosts the scalar functions used by the certified constants: g_theta,
the scaled-algorithm curve k, the envelope conv_raw and the vertex-weighted
objective vertex_B.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pivotal import SubsetDistribution

INT_TOL = 1e-12
EXACT_MAX_N = 20


def g_theta(theta: float, x):
    """(1 - (1-theta) {x/(1-theta)}) * theta ** floor(x/(1-theta)); accepts arrays."""
    if not 0.0 <= theta < 1.0:
        raise ValueError("g_theta needs 0 <= theta < 1")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("g_theta needs x >= 0")
    z = x / (1.0 - theta)
    whole = np.floor(z + INT_TOL)
    frac = np.maximum(z - whole, 0.0)
    out = (1.0 - (1.0 - theta) * frac) * np.power(theta, whole)
    return float(out) if out.ndim == 0 else out


def k_func(eps: float, delta: float, z):
    """1 - g_{theta_hat}((1-eps) z) exp(-(1+delta)(1-z)), theta = delta/(delta+eps), theta_hat = theta (1-eps)."""
    if eps + delta <= 0:
        raise ValueError("k_func needs eps + delta > 0")
    theta = delta / (delta + eps)
    theta_hat = theta * (1.0 - eps)
    z = np.asarray(z, dtype=float)
    out = 1.0 - g_theta(theta_hat, (1.0 - eps) * z) * np.exp(-(1.0 + delta) * (1.0 - z))
    return float(out) if np.ndim(out) == 0 else out


def f_var(z):
    return 1.0 - 0.5 * np.sqrt(z)


def conv_raw(theta: float, x, y):
    """1 - g_theta(x) (1 - y/(1-x))^((1-x)^2/y), with the y = 0 limit 1 - g_theta(x) e^{-(1-x)}.

    Domain: 0 <= x < 1 and 0 <= y <= (1-x)^2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if np.any((x < 0) | (x >= 1) | (y < 0) | (y > (1 - x) ** 2 * (1 + 1e-12))):
        raise ValueError("conv_raw outside 0 <= x < 1, 0 <= y <= (1-x)^2")
    one_minus = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.minimum(y / one_minus, 1.0)
        expo = one_minus ** 2 / y
        log_term = np.where(z < 1.0, np.log1p(-z) * expo, -np.inf)
        tail = np.where(y > 0, np.exp(log_term), np.exp(-one_minus))
    out = 1.0 - g_theta(theta, x) * tail
    return float(out) if out.ndim == 0 else out


def vertex_B(x, y):
    """max(1 - sqrt(x + y - x(1/2 + x/2) - y^2/2)/2, 0.614 + 0.122/2 + 0.197 y^2/2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    var_side = 1.0 - 0.5 * np.sqrt(np.maximum(x + y - x * (0.5 + x / 2) - y ** 2 / 2, 0.0))
    lin_side = 0.614 + 0.122 * 0.5 + 0.197 * y ** 2 / 2
    out = np.maximum(var_side, lin_side)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ systems

@dataclass(frozen=True)
class WeightedBernoulliSystem:
    """Coefficients c and marginals q; distribution=None means independent coins."""

    c: tuple[float, ...]
    q: tuple[float, ...]
    distribution: SubsetDistribution | None = None

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if len(self.c) != len(self.q):
            raise ValueError("c and q must have the same length")
        for v in self.c + self.q:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"coefficient or marginal {v} outside [0, 1]")
        if self.distribution is not None:
            if self.distribution.n != len(self.q):
                raise ValueError("distribution dimension does not match q")
            if np.max(np.abs(self.distribution.marginals() - np.array(self.q)), initial=0.0) > 1e-12:
                raise ValueError("distribution marginals differ from q")

    @classmethod
    def explicit(cls, c: Sequence[float], dist: SubsetDistribution) -> "WeightedBernoulliSystem":
        return cls(tuple(c), tuple(np.clip(dist.marginals(), 0.0, 1.0)), dist)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def independent(self) -> bool:
        return self.distribution is None

    def mean(self) -> float:
        return float(np.dot(self.c, self.q))

    def with_c(self, c) -> "WeightedBernoulliSystem":
        return WeightedBernoulliSystem(tuple(c), self.q, self.distribution)


@dataclass
class BoundReport:
    name: str
    value: float
    params: dict = field(default_factory=dict)
    exact: float | None = None

    @property
    def valid(self) -> bool | None:
        if self.exact is None:
            return None
        return self.value <= self.exact + 1e-12


def exact_min1(system: WeightedBernoulliSystem) -> float:
    """E[min(1, X)] by enumeration of outcomes."""
    c = system.c
    if system.distribution is not None:
        return float(sum(q * min(1.0, sum(c[i] for i in s)) for s, q in system.distribution.outcomes))
    n = system.n
    if n > EXACT_MAX_N:
        raise ValueError(f"independent enumeration limited to n <= {EXACT_MAX_N}")
    q = system.q
    total = 0.0
    # depth-first over coins; once the partial sum reaches 1 the rest cannot matter
    stack = [(0, 0.0, 1.0)]
    while stack:
        k, s, pr = stack.pop()
        if s >= 1.0:
            total += pr
            continue
        if k == n:
            total += pr * s
            continue
        if q[k] > 0.0:
            stack.append((k + 1, s + c[k], pr * q[k]))
        if q[k] < 1.0:
            stack.append((k + 1, s, pr * (1.0 - q[k])))
    return float(total)


def independent_coin_bound(system: WeightedBernoulliSystem) -> float:
    cq = np.array(system.c) * np.array(system.q)
    return float(1.0 - np.prod(1.0 - cq))


def bucketing_bound(system: WeightedBernoulliSystem, partition: Sequence[Sequence[int]]) -> float:
    """1 - prod over buckets of (1 - sum_B c_i q_i); each bucket needs sum_B c_i <= 1."""
    seen = sorted(i for B in partition for i in B)
    if seen != list(range(system.n)):
        raise ValueError("partition must cover every index exactly once")
    c, q = np.array(system.c), np.array(system.q)
    prod = 1.0
    for B in partition:
        B = list(B)
        if c[B].sum() > 1.0 + INT_TOL:
            raise ValueError(f"bucket {B} has coefficient sum {c[B].sum()} > 1")
        prod *= 1.0 - float(np.dot(c[B], q[B]))
    return float(1.0 - prod)


def greedy_partition(c: Sequence[float]) -> list[list[int]]:
    """Consecutive buckets, each grown while the coefficient sum stays <= 1."""
    parts, cur, tot = [], [], 0.0
    for i, ci in enumerate(c):
        if cur and tot + ci > 1.0:
            parts.append(cur)
            cur, tot = [], 0.0
        cur.append(i)
        tot += ci
    if cur:
        parts.append(cur)
    return parts


def fractional_bucketing_bound(system: WeightedBernoulliSystem, theta: float) -> float:
    """1 - g_theta(mu_S) prod_{i not in S}(1 - c_i q_i), S = {i : q_i >= 1 - theta}."""
    if not 0.0 <= theta < 1.0:
        raise ValueError("fractional bucketing needs 0 <= theta < 1")
    c, q = np.array(system.c), np.array(system.q)
    high = q >= 1.0 - theta
    mu = float(np.dot(c[high], q[high]))
    rest = float(np.prod(1.0 - c[~high] * q[~high]))
    return float(1.0 - g_theta(theta, mu) * rest)


def variance_of(system: WeightedBernoulliSystem) -> float:
    c, q = np.array(system.c), np.array(system.q)
    if system.distribution is None:
        return float(np.sum(c ** 2 * q * (1.0 - q)))
    m = float(np.dot(c, q))
    second = sum(pr * sum(c[i] for i in s) ** 2 for s, pr in system.distribution.outcomes)
    return float(max(second - m * m, 0.0))


def variance_bound(mean: float, var: float) -> float:
    """E[X] - sqrt(Var(X) E[X]) / 2, clamped at 0; valid for any X >= 0 with E[X] <= 1."""
    if mean > 1.0 + INT_TOL:
        raise ValueError("variance bound needs E[X] <= 1")
    if mean < 0 or var < 0:
        raise ValueError("mean and variance must be non-negative")
    return float(max(mean - 0.5 * math.sqrt(var * mean), 0.0))


def merge_pair(system: WeightedBernoulliSystem, j: int, k: int, direction: str):
    """Shift weight between c_j and c_k keeping E[X]; returns (new c, rho).

    plus:  c_j + rho q_k, c_k - rho q_j;  minus: c_j - rho q_k, c_k + rho q_j;
    rho is the largest step keeping both coefficients in [0, 1].
    """
    if j == k:
        raise ValueError("merge_pair needs two distinct indices")
    c, q = list(system.c), system.q
    if not (0.0 < c[j] < 1.0 and 0.0 < c[k] < 1.0):
        raise ValueError("merge_pair needs fractional coefficients c_j, c_k")
    if q[j] == 0.0 and q[k] == 0.0:
        raise ValueError("merge_pair needs q_j + q_k > 0")

    def ratio(num, den):
        return num / den if den > 0 else math.inf

    if direction == "plus":
        a, b = ratio(1.0 - c[j], q[k]), ratio(c[k], q[j])
        rho = min(a, b)
        c[j] = 1.0 if a <= b else min(c[j] + rho * q[k], 1.0)
        c[k] = 0.0 if b <= a else max(c[k] - rho * q[j], 0.0)
    elif direction == "minus":
        a, b = ratio(c[j], q[k]), ratio(1.0 - c[k], q[j])
        rho = min(a, b)
        c[j] = 0.0 if a <= b else max(c[j] - rho * q[k], 0.0)
        c[k] = 1.0 if b <= a else min(c[k] + rho * q[j], 1.0)
    else:
        raise ValueError("direction must be 'plus' or 'minus'")
    return tuple(c), rho


def merge_split(system: WeightedBernoulliSystem, j: int, k: int):
    """(X_plus, X_minus, sigma) with sigma c_plus + (1-sigma) c_minus = c."""
    cp, rp = merge_pair(system, j, k, "plus")
    cm, rm = merge_pair(system, j, k, "minus")
    return system.with_c(cp), system.with_c(cm), rm / (rp + rm)


def all_bounds(system: WeightedBernoulliSystem, theta: float, partition=None) -> list[BoundReport]:
    exact = exact_min1(system) if (system.distribution is not None or system.n <= EXACT_MAX_N) else None
    partition = greedy_partition(system.c) if partition is None else partition
    out = [
        BoundReport("independent_coin", independent_coin_bound(system), {}, exact),
        BoundReport("bucketing", bucketing_bound(system, partition), {"partition": partition}, exact),
        BoundReport("fractional_bucketing", fractional_bucketing_bound(system, theta), {"theta": theta}, exact),
    ]
    mean = system.mean()
    if mean <= 1.0:
        var = variance_of(system)
        out.append(BoundReport("variance", variance_bound(mean, var), {"mean": mean, "var": var}, exact))
    return out
