"""Exact benchmarks: the optimum online policy by dynamic programming over free sets,
the stochastic 3-SAT value, and the offline (prophet) optimum.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import linear_sum_assignment

from .instance import BernoulliInstance, GeneralInstance, Stochastic3SatFormula

MAX_N = 20
SAT_MAX_N = 16
PROPHET_EXACT_MAX_T = 20


class OracleError(ValueError):
    pass


@dataclass
class MdpValue:
    """value = V(all free, first step); policy[t][mask] is the node to match or -1.

    For typed instances policy[t] maps a type column k to its per-mask action array.
    """

    value: float
    policy: list = field(repr=False)


def _bits(n):
    masks = np.arange(1 << n, dtype=np.int64)
    return masks, [(masks >> i) & 1 == 1 for i in range(n)]


def _best_action(V_next, weights, has_edge, masks, bits):
    """Per mask: max of skipping and matching any free neighbor; ties keep the earlier choice."""
    best = V_next.copy()
    act = np.full(len(masks), -1, dtype=np.int16)
    for i in np.flatnonzero(has_edge):
        cand = np.where(bits[i], weights[i] + V_next[masks ^ (1 << i)], -np.inf)
        better = cand > best
        best = np.where(better, cand, best)
        act[better] = i
    return best, act


def opt_online(instance: BernoulliInstance) -> MdpValue:
    n, T = instance.n, instance.T
    if n > MAX_N:
        raise OracleError(f"optimum online DP limited to n <= {MAX_N}")
    W, M, p = instance.weight_matrix, instance.edge_mask, instance.p_array
    masks, bits = _bits(n)
    V = np.zeros(1 << n)
    policy = [None] * T
    for t in range(T - 1, -1, -1):
        best, act = _best_action(V, W[:, t], M[:, t], masks, bits)
        V = (1.0 - p[t]) * V + p[t] * best
        policy[t] = act
    return MdpValue(float(V[-1]), policy)


def evaluate_policy(instance: BernoulliInstance, policy) -> float:
    """Expected weight of a deterministic policy given as per-step action arrays."""
    n, T = instance.n, instance.T
    W, M, p = instance.weight_matrix, instance.edge_mask, instance.p_array
    masks, _ = _bits(n)
    V = np.zeros(1 << n)
    for t in range(T - 1, -1, -1):
        act = np.asarray(policy[t])
        val = V.copy()
        for i in np.unique(act[act >= 0]):
            rows = act == i
            if np.any((masks[rows] >> i) & 1 == 0) or not M[i, t]:
                raise OracleError(f"policy matches unavailable node {i + 1} at step {t + 1}")
            val[rows] = W[i, t] + V[masks[rows] ^ (1 << i)]
        V = (1.0 - p[t]) * V + p[t] * val
    return float(V[-1])


def opt_online_general(instance: GeneralInstance) -> MdpValue:
    n, T = instance.n, instance.T
    if n > MAX_N:
        raise OracleError(f"optimum online DP limited to n <= {MAX_N}")
    W, M, pk = instance.weight_matrix, instance.edge_mask, instance.type_prob
    masks, bits = _bits(n)
    V = np.zeros(1 << n)
    policy = [None] * T
    for t in range(T - 1, -1, -1):
        ks = instance.types_at(t)
        stay = 1.0 - sum(pk[k] for k in ks)
        newV = max(stay, 0.0) * V
        acts = {}
        for k in ks:
            best, act = _best_action(V, W[:, k], M[:, k], masks, bits)
            newV = newV + pk[k] * best
            acts[k] = act
        V = newV
        policy[t] = acts
    return MdpValue(float(V[-1]), policy)


# ------------------------------------------------------------ stochastic SAT

def satisfied_counts(formula: Stochastic3SatFormula) -> np.ndarray:
    """Number of satisfied clauses for every assignment; bit v-1 of the index is x_v."""
    n = formula.num_vars
    a = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for clause in formula.clauses:
        sat = np.zeros(1 << n, dtype=bool)
        for lit in clause:
            val = (a >> (abs(lit) - 1)) & 1 == 1
            sat |= val if lit > 0 else ~val
        counts += sat
    return counts


def opt_stochastic_3sat(formula: Stochastic3SatFormula) -> float:
    """Expected satisfied clauses when odd variables are chosen (in order) and even ones are coin flips."""
    n = formula.num_vars
    if n > SAT_MAX_N:
        raise OracleError(f"stochastic SAT DP limited to {SAT_MAX_N} variables")
    vals = satisfied_counts(formula).astype(float)
    if n == 0:
        return float(vals[0])
    # axis 0 of the reshaped table is the most significant bit, i.e. the last variable
    arr = vals.reshape((2,) * n)
    for v in range(n, 0, -1):
        arr = arr.max(axis=0) if v % 2 == 1 else arr.mean(axis=0)
    return float(arr)


def expected_variable_matches(num_vars: int) -> float:
    """Odd variable nodes arrive surely, even ones w.p. 1/2; equals 3n/4 for even n."""
    return (num_vars + 1) // 2 + 0.5 * (num_vars // 2)


@dataclass
class Sandwich:
    lower: float
    upper: float
    opt_sat: float
    base: float

    def contains(self, v: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= v <= self.upper + tol


def hardness_sandwich(formula: Stochastic3SatFormula, p: float) -> Sandwich:
    """[base + p Opt - n C_k p^2, base + p Opt] with C_k = k^2 2^k and base the expected variable arrivals."""
    opt = opt_stochastic_3sat(formula)
    base = expected_variable_matches(formula.num_vars)
    ck = formula.k ** 2 * 2 ** formula.k
    return Sandwich(base + p * opt - formula.num_vars * ck * p * p, base + p * opt, opt, base)


# ------------------------------------------------------------------ prophet

@dataclass
class ProphetEstimate:
    mean: float
    stderr: float
    replications: int


def _offline_optimum(W: np.ndarray, arrived: np.ndarray) -> float:
    cols = np.flatnonzero(arrived)
    if cols.size == 0 or W.shape[0] == 0:
        return 0.0
    sub = W[:, cols]
    rows, cs = linear_sum_assignment(sub, maximize=True)
    return float(sub[rows, cs].sum())


def _prophet_chunk(W, p, seed, chunk, size):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    arrivals = rng.random((size, len(p))) < p[None, :]
    return np.array([_offline_optimum(W, a) for a in arrivals])


def prophet_value_mc(instance: BernoulliInstance, replications: int, seed: int, workers: int = 1,
                     chunk_size: int = 4096) -> ProphetEstimate:
    """Monte Carlo mean of the maximum-weight matching of the realized graph."""
    if replications < 1:
        raise OracleError("replications must be at least 1")
    W, p = instance.weight_matrix, instance.p_array
    sizes = [min(chunk_size, replications - s) for s in range(0, replications, chunk_size)]
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _prophet_chunk(W, p, seed, *a), enumerate(sizes)))
    else:
        parts = [_prophet_chunk(W, p, seed, c, s) for c, s in enumerate(sizes)]
    vals = np.concatenate(parts)
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return ProphetEstimate(float(vals.mean()), se, replications)


def prophet_value_exact(instance: BernoulliInstance) -> float:
    """Exact offline optimum by enumerating all 2^T arrival patterns."""
    T = instance.T
    if T > PROPHET_EXACT_MAX_T:
        raise OracleError(f"exact prophet value limited to T <= {PROPHET_EXACT_MAX_T}")
    W, p = instance.weight_matrix, instance.p_array
    total = 0.0
    for pattern in product((False, True), repeat=T):
        a = np.array(pattern)
        prob = float(np.prod(np.where(a, p, 1.0 - p)))
        if prob > 0.0:
            total += prob * _offline_optimum(W, a)
    return total
