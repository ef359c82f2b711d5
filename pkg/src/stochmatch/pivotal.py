"""Linear-order pivotal sampling.

The lowest-index fractional entry is carried forward and paired with the next
fractional entry.  Each pivot moves mass between the two so that one of them
becomes integral, keeping both the pair sum and the expectations unchanged:

    s = a + b <= 1:  (s, 0) w.p. a/s,            else (0, s)
    s = a + b >  1:  (1, s-1) w.p. (1-b)/(2-s),  else (s-1, 1)

Here a is the carried (lower-index) value and b the new one.  If a fractional
carry is left at the end (the total is not an integer), it is rounded up with
probability equal to its value.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

FRAC_TOL = 1e-12
EXACT_MAX_N = 16


def is_fractional(v) -> np.ndarray | bool:
    return np.abs(v - np.round(v)) > FRAC_TOL


@dataclass(frozen=True)
class PivotalInput:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"pivotal input value {v} outside [0, 1]")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SubsetDistribution:
    """Finite law of a random subset of {0, ..., n-1}."""

    outcomes: tuple[tuple[frozenset, float], ...]
    n: int

    @classmethod
    def from_dict(cls, probs: dict, n: int) -> "SubsetDistribution":
        items = sorted(((frozenset(s), float(q)) for s, q in probs.items()),
                       key=lambda e: (len(e[0]), sorted(e[0])))
        return cls(tuple(items), n)

    @classmethod
    def independent(cls, q: Sequence[float]) -> "SubsetDistribution":
        """Product law with marginals q (enumerates all 2^n subsets with positive mass)."""
        q = [float(v) for v in q]
        probs = {frozenset(): 1.0}
        for i, qi in enumerate(q):
            nxt = {}
            for s, pr in probs.items():
                if qi < 1.0:
                    nxt[s] = nxt.get(s, 0.0) + pr * (1.0 - qi)
                if qi > 0.0:
                    s2 = s | {i}
                    nxt[s2] = nxt.get(s2, 0.0) + pr * qi
            probs = nxt
        return cls.from_dict(probs, len(q))

    def total(self) -> float:
        return float(sum(q for _, q in self.outcomes))

    def marginals(self) -> np.ndarray:
        m = np.zeros(self.n)
        for s, q in self.outcomes:
            for i in s:
                m[i] += q
        return m

    def prob(self, predicate) -> float:
        return float(sum(q for s, q in self.outcomes if predicate(s)))

    def as_dict(self) -> dict[frozenset, float]:
        return {s: q for s, q in self.outcomes}


def _pivot(a: float, b: float, u: float) -> tuple[float, float]:
    """One sum-preserving pivot on the pair (a, b) driven by the uniform u."""
    s = a + b
    if s <= 1.0:
        return (s, 0.0) if u < a / s else (0.0, s)
    return (1.0, s - 1.0) if u < (1.0 - b) / (2.0 - s) else (s - 1.0, 1.0)


def _pivot_branches(a: float, b: float) -> list[tuple[float, float, float]]:
    """Both outcomes of a pivot as (probability, new a, new b)."""
    s = a + b
    if s <= 1.0:
        q = a / s
        return [(q, s, 0.0), (1.0 - q, 0.0, s)]
    q = (1.0 - b) / (2.0 - s)
    return [(q, 1.0, s - 1.0), (1.0 - q, s - 1.0, 1.0)]


def ps_sample(values: PivotalInput | Sequence[float], rng: np.random.Generator) -> list[int]:
    """Draw one subset; uses one uniform per pivot and one for a leftover carry."""
    v = values.values if isinstance(values, PivotalInput) else PivotalInput(tuple(values)).values
    chosen = []
    carry, carry_val = -1, 0.0
    for k, b in enumerate(v):
        if not is_fractional(b):
            if round(b) == 1:
                chosen.append(k)
            continue
        if carry < 0:
            carry, carry_val = k, b
            continue
        na, nb = _pivot(carry_val, b, rng.random())
        # exactly one of the two is now integral
        if is_fractional(na):
            carry_val = na
            if round(nb) == 1:
                chosen.append(k)
        else:
            if round(na) == 1:
                chosen.append(carry)
            if is_fractional(nb):
                carry, carry_val = k, nb
            else:
                if round(nb) == 1:
                    chosen.append(k)
                carry, carry_val = -1, 0.0
    if carry >= 0 and rng.random() < carry_val:
        chosen.append(carry)
    return sorted(chosen)


def ps_exact_distribution(values: PivotalInput | Sequence[float]) -> SubsetDistribution:
    """Exact output law of ps_sample by recursion over both outcomes of every pivot."""
    v = values.values if isinstance(values, PivotalInput) else PivotalInput(tuple(values)).values
    n = len(v)
    if n > EXACT_MAX_N:
        raise ValueError(f"exact pivotal distribution limited to n <= {EXACT_MAX_N}, got {n}")
    out: dict[frozenset, float] = {}

    def rec(k: int, carry: int, carry_val: float, chosen: frozenset, prob: float):
        if prob == 0.0:
            return
        if k == n:
            if carry >= 0:
                branches = [(carry_val, chosen | {carry}), (1.0 - carry_val, chosen)]
            else:
                branches = [(1.0, chosen)]
            for q, s in branches:
                if q > 0.0:
                    out[s] = out.get(s, 0.0) + prob * q
            return
        b = v[k]
        if not is_fractional(b):
            rec(k + 1, carry, carry_val, chosen | {k} if round(b) == 1 else chosen, prob)
            return
        if carry < 0:
            rec(k + 1, k, b, chosen, prob)
            return
        for q, na, nb in _pivot_branches(carry_val, b):
            if is_fractional(na):
                rec(k + 1, carry, na, chosen | {k} if round(nb) == 1 else chosen, prob * q)
            else:
                ch = chosen | {carry} if round(na) == 1 else chosen
                if is_fractional(nb):
                    rec(k + 1, k, nb, ch, prob * q)
                else:
                    rec(k + 1, -1, 0.0, ch | {k} if round(nb) == 1 else ch, prob * q)

    rec(0, -1, 0.0, frozenset(), 1.0)
    return SubsetDistribution.from_dict(out, n)


def ps_sample_batch(V: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized pivotal sampling of every row of V (shape (R, m)); returns a bool mask.

    Consumes exactly R*(m+1) uniforms regardless of the values, so downstream
    draws stay aligned across replications.
    """
    V = np.asarray(V, dtype=float)
    R, m = V.shape
    U = rng.random((R, m + 1))
    sel = np.zeros((R, m), dtype=bool)
    carry = np.full(R, -1, dtype=np.int64)
    cval = np.zeros(R)
    rows = np.arange(R)
    for k in range(m):
        b = V[:, k]
        frac = is_fractional(b)
        sel[:, k] = ~frac & (np.round(b) == 1)
        has = carry >= 0
        start = frac & ~has
        carry[start] = k
        cval[start] = b[start]
        piv = np.flatnonzero(frac & has)
        if piv.size == 0:
            continue
        a, bb, u = cval[piv], b[piv], U[piv, k]
        s = a + bb
        low = s <= 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(low, u < a / s, u < (1.0 - bb) / (2.0 - s))
        na = np.where(low, np.where(first, s, 0.0), np.where(first, 1.0, s - 1.0))
        nb = np.where(low, np.where(first, 0.0, s), np.where(first, s - 1.0, 1.0))
        a_frac = is_fractional(na)
        b_frac = is_fractional(nb)
        # carry stays fractional: the new entry is settled
        r1 = piv[a_frac]
        cval[r1] = na[a_frac]
        sel[r1, k] = np.round(nb[a_frac]) == 1
        # carry settled
        settle = ~a_frac
        r2 = piv[settle]
        sel[r2, carry[r2]] = np.round(na[settle]) == 1
        move = settle & b_frac
        r3 = piv[move]
        carry[r3] = k
        cval[r3] = nb[move]
        done = settle & ~b_frac
        r4 = piv[done]
        sel[r4, k] = np.round(nb[done]) == 1
        carry[r4] = -1
        cval[r4] = 0.0
    left = np.flatnonzero(carry >= 0)
    sel[left, carry[left]] = U[left, m] < cval[left]
    return sel


@dataclass
class NcdReport:
    max_violation: float
    worst_subset: tuple[int, ...] | None
    worst_side: str | None

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_violation <= tol


def check_ncd(dist: SubsetDistribution, v: Sequence[float] | None = None) -> NcdReport:
    """Largest excess of Pr[all in I on] over prod v_I, or of Pr[all in I off] over prod (1-v_I)."""
    v = dist.marginals() if v is None else np.asarray(v, dtype=float)
    n = dist.n
    masks = np.zeros(len(dist.outcomes), dtype=np.int64)
    probs = np.zeros(len(dist.outcomes))
    for k, (s, q) in enumerate(dist.outcomes):
        masks[k] = sum(1 << i for i in s)
        probs[k] = q
    full = (1 << n) - 1
    worst, where, side = -np.inf, None, None
    for size in range(1, n + 1):
        for I in combinations(range(n), size):
            im = sum(1 << i for i in I)
            on = probs[(masks & im) == im].sum()
            off = probs[(masks & im) == 0].sum()
            d_on = on - float(np.prod(v[list(I)]))
            d_off = off - float(np.prod(1.0 - v[list(I)]))
            if d_on > worst:
                worst, where, side = d_on, I, "on"
            if d_off > worst:
                worst, where, side = d_off, I, "off"
    if where is None:
        return NcdReport(0.0, None, None)
    return NcdReport(float(worst), where, side)
