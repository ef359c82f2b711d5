"""Online correlated-proposal algorithms, Monte Carlo simulation and exact evaluation.

Core loop at each time t:
  * free nodes are ordered by decreasing w_it (ties: lower index first);
  * proposers are drawn from the rates r_it of the free nodes, by pivotal
    sampling in that order or by independent coins;
  * if t arrives, the first proposer in the order is matched;
  * every other proposer is discarded independently with probability p_t.

The typed variant draws the arrival type first, samples proposers from that
type's rates and matches the top proposer, without discarding.

All Monte Carlo work goes through one vectorized batch routine; run_core and
friends are the single-replication case with per-step diagnostics recorded.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .instance import BernoulliInstance, GeneralInstance
from .lp import (GeneralLpSolution, LpSolution, check_feasibility, check_feasibility_general,
                 solve_lp, solve_lp_general)
from .pivotal import ps_exact_distribution, ps_sample_batch

EDGE_EPS, EDGE_DELTA = 0.11, 0.18
FEAS_TOL = 1e-7
CHUNK = 4096
EXACT_MAX_N, EXACT_MAX_T, EXACT_MAX_BRANCHES = 4, 4, 10_000


class EngineError(ValueError):
    """Infeasible inputs, bad algorithm names or exceeded enumeration guards."""


# ------------------------------------------------------------------ rescale

def step_theta(eps: float, delta: float) -> float:
    return 0.0 if eps + delta == 0 else delta / (delta + eps)


def step_cdf(z, eps: float, delta: float):
    """Integral over [0, z] of f = 1-eps on [0, theta] and 1+delta on (theta, 1]."""
    theta = step_theta(eps, delta)
    z = np.asarray(z, dtype=float)
    return (1.0 - eps) * np.minimum(z, theta) + (1.0 + delta) * np.maximum(z - theta, 0.0)


@dataclass(frozen=True)
class RescaledSolution:
    """x_hat[i, t] = integral of f over [y_it, y_it + x_it]; exposes the x/y/r interface of its base."""

    base: LpSolution | GeneralLpSolution
    epsilon: float
    delta: float
    scaled: LpSolution | GeneralLpSolution

    @property
    def theta(self) -> float:
        return step_theta(self.epsilon, self.delta)

    @property
    def theta_hat(self) -> float:
        return self.theta * (1.0 - self.epsilon)

    @property
    def instance(self):
        return self.base.instance

    @property
    def x_hat(self) -> np.ndarray:
        return self.scaled.x

    @property
    def x(self) -> np.ndarray:
        return self.scaled.x

    @property
    def y(self) -> np.ndarray:
        return self.scaled.y

    @property
    def r(self) -> np.ndarray:
        return self.scaled.r

    @property
    def objective(self) -> float:
        return self.base.objective


def rescale(solution: LpSolution | GeneralLpSolution, eps: float, delta: float) -> RescaledSolution:
    if not (0.0 <= eps <= 1.0 and 0.0 <= delta <= 1.0):
        raise EngineError("eps and delta must lie in [0, 1]")
    x = solution.x
    if isinstance(solution, GeneralLpSolution):
        y0 = solution.y[:, solution.instance.type_time]
    else:
        y0 = solution.y
    x_hat = step_cdf(y0 + x, eps, delta) - step_cdf(y0, eps, delta)
    x_hat = np.where(x > 0, np.maximum(x_hat, 0.0), 0.0)
    x_hat.setflags(write=False)
    W = solution.instance.weight_matrix
    obj = float(np.sum(W * x_hat))
    scaled = type(solution)(solution.instance, x_hat, obj, False)
    return RescaledSolution(solution, float(eps), float(delta), scaled)


# ------------------------------------------------------------- run results

@dataclass
class StepRecord:
    t: int
    free: tuple[int, ...]
    proposals: tuple[int, ...]
    arrived: bool
    top: int | None
    discards: tuple[int, ...]
    arrival_type: int | None = None


@dataclass
class RunResult:
    matching: list[tuple[int, int]]
    weight: float
    steps: list[StepRecord] = field(default_factory=list)

    def is_matching(self) -> bool:
        nodes = [i for i, _ in self.matching]
        times = [t for _, t in self.matching]
        return len(set(nodes)) == len(nodes) and len(set(times)) == len(times)


def _priority(W: np.ndarray) -> list[np.ndarray]:
    """Per column, node indices by decreasing weight, lower index first on ties."""
    n = W.shape[0]
    idx = np.arange(n)
    return [np.lexsort((idx, -W[:, k])) for k in range(W.shape[1])]


def _checked_rates(r: np.ndarray) -> np.ndarray:
    if np.any(~np.isfinite(r)) or np.any(r > 1.0 + FEAS_TOL) or np.any(r < -FEAS_TOL):
        raise EngineError("proposal rates outside [0, 1]; solution is infeasible")
    return np.clip(r, 0.0, 1.0)


def _rates_of(instance: BernoulliInstance, solution) -> np.ndarray:
    x = solution.x if hasattr(solution, "x") else np.asarray(solution, dtype=float)
    rep = check_feasibility(x, instance, FEAS_TOL)
    bad = [v for v in rep.violations if v.constraint in ("nonnegativity", "offline availability")]
    if bad:
        raise EngineError("infeasible solution: " + "; ".join(map(str, bad[:3])))
    r = solution.r if hasattr(solution, "r") else LpSolution(instance, x, 0.0).r
    return _checked_rates(r)


def _general_rates_of(instance: GeneralInstance, solution) -> np.ndarray:
    x = solution.x if hasattr(solution, "x") else np.asarray(solution, dtype=float)
    rep = check_feasibility_general(x, instance, FEAS_TOL)
    bad = [v for v in rep.violations if v.constraint in ("nonnegativity", "offline availability")]
    if bad:
        raise EngineError("infeasible solution: " + "; ".join(map(str, bad[:3])))
    r = solution.r if hasattr(solution, "r") else GeneralLpSolution(instance, x, 0.0).r
    return _checked_rates(r)


@dataclass
class _Batch:
    matched: np.ndarray        # (R, T) matched offline node or -1
    free_counts: np.ndarray    # (n, T+1) number of replications with i free before step t
    steps: list | None = None  # per-step records of replication 0


def _propose(V: np.ndarray, order: np.ndarray, sampler: str, rng) -> np.ndarray:
    if sampler == "pivotal":
        sel_ord = ps_sample_batch(V[:, order], rng)
    else:
        sel_ord = rng.random(V[:, order].shape) < V[:, order]
    return sel_ord


def _core_batch(r, p, W, orders, sampler, R, rng, record=False) -> _Batch:
    n, T = r.shape
    free = np.ones((R, n), dtype=bool)
    matched = np.full((R, T), -1, dtype=np.int64)
    free_counts = np.zeros((n, T + 1), dtype=np.int64)
    rows = np.arange(R)
    steps = [] if record else None
    for t in range(T):
        free_counts[:, t] = free.sum(axis=0)
        order = orders[t]
        V = np.where(free, r[:, t][None, :], 0.0)
        sel_ord = _propose(V, order, sampler, rng)
        has = sel_ord.any(axis=1)
        top = order[np.argmax(sel_ord, axis=1)]
        arrive = rng.random(R) < p[t]
        coins = rng.random((R, n)) < p[t]
        sel = np.zeros((R, n), dtype=bool)
        sel[:, order] = sel_ord
        is_top = np.zeros((R, n), dtype=bool)
        is_top[rows[has], top[has]] = True
        hit = has & arrive
        discard = sel & ~is_top & coins
        if record:
            steps.append(StepRecord(t, tuple(np.flatnonzero(free[0])), tuple(int(i) for i in order if sel[0, i]),
                                    bool(arrive[0]), int(top[0]) if has[0] else None,
                                    tuple(np.flatnonzero(discard[0]))))
        matched[hit, t] = top[hit]
        free[rows[hit], top[hit]] = False
        free &= ~discard
    free_counts[:, T] = free.sum(axis=0)
    return _Batch(matched, free_counts, steps)


def _general_batch(r, inst: GeneralInstance, orders, R, rng, record=False) -> _Batch:
    n, T = inst.n, inst.T
    free = np.ones((R, n), dtype=bool)
    matched = np.full((R, T), -1, dtype=np.int64)
    mtype = np.full((R, T), -1, dtype=np.int64)
    free_counts = np.zeros((n, T + 1), dtype=np.int64)
    steps = [] if record else None
    pk = inst.type_prob
    for t in range(T):
        free_counts[:, t] = free.sum(axis=0)
        ks = inst.types_at(t)
        u = rng.random(R)
        # type k_l realizes when u falls in its slice of [0, sum p); beyond that, nothing arrives
        edges = np.cumsum([pk[k] for k in ks]) if ks else np.zeros(0)
        pos = np.searchsorted(edges, u, side="right")
        arrived_type = np.full(R, -1, dtype=np.int64)
        for l, k in enumerate(ks):
            arrived_type[pos == l] = k
        rec = None
        free_now = tuple(int(i) for i in np.flatnonzero(free[0]))
        for k in ks:
            rows = np.flatnonzero(arrived_type == k)
            if rows.size == 0:
                continue
            order = orders[k]
            V = np.where(free[rows], r[:, k][None, :], 0.0)
            sel_ord = ps_sample_batch(V[:, order], rng)
            has = sel_ord.any(axis=1)
            top = order[np.argmax(sel_ord, axis=1)]
            hr = rows[has]
            matched[hr, t] = top[has]
            mtype[hr, t] = k
            free[hr, top[has]] = False
            if record and rows[0] == 0:
                rec = StepRecord(t, free_now, tuple(int(i) for i, s in zip(order, sel_ord[0]) if s), True,
                                 int(top[0]) if has[0] else None, (), k)
        if record:
            steps.append(rec or StepRecord(t, free_now, (), False, None, (), None))
    free_counts[:, T] = free.sum(axis=0)
    b = _Batch(matched, free_counts, steps)
    b.mtype = mtype
    return b


def _result_from_batch(b: _Batch, W: np.ndarray, general=False) -> RunResult:
    matching, weight = [], 0.0
    for t, i in enumerate(b.matched[0]):
        if i >= 0:
            matching.append((int(i), t))
            weight += W[i, b.mtype[0, t]] if general else W[i, t]
    return RunResult(matching, float(weight), b.steps or [])


def run_core(instance: BernoulliInstance, solution, rng: np.random.Generator, sampler: str = "pivotal") -> RunResult:
    if sampler not in ("pivotal", "independent"):
        raise EngineError(f"unknown sampler {sampler!r}")
    r = _rates_of(instance, solution)
    W = instance.weight_matrix
    b = _core_batch(r, instance.p_array, W, _priority(W), sampler, 1, rng, record=True)
    if b.steps:
        for s in b.steps:
            s.free = tuple(int(i) for i in s.free)
            s.discards = tuple(int(i) for i in s.discards)
    return _result_from_batch(b, W)


def run_edge_weighted(instance: BernoulliInstance, rng, eps: float = EDGE_EPS, delta: float = EDGE_DELTA) -> RunResult:
    return run_core(instance, rescale(solve_lp(instance), eps, delta), rng, "pivotal")


def run_vertex_weighted(instance: BernoulliInstance, rng) -> RunResult:
    if not instance.vertex_weighted:
        raise EngineError("vertex-weighted algorithm needs a vertex-weighted instance")
    return run_core(instance, solve_lp(instance), rng, "pivotal")


def run_general(instance: GeneralInstance, solution, rng) -> RunResult:
    r = _general_rates_of(instance, solution)
    W = instance.weight_matrix
    b = _general_batch(r, instance, _priority(W), 1, rng, record=True)
    res = _result_from_batch(b, W, general=True)
    return res


# --------------------------------------------------------------- simulation

@dataclass
class Plan:
    """Everything a batch run needs: rates, weights, priorities and the LP value."""

    algorithm: str
    instance: BernoulliInstance | GeneralInstance
    r: np.ndarray
    W: np.ndarray
    orders: list
    sampler: str
    lp_value: float
    general: bool = False


def parse_algorithm(text: str) -> tuple[str, tuple[float, float] | None]:
    name, _, params = text.partition(":")
    if name not in ("core", "core-independent", "edge-weighted", "vertex-weighted", "general"):
        raise EngineError(f"unknown algorithm {text!r}")
    if params:
        if name not in ("edge-weighted", "general"):
            raise EngineError(f"algorithm {name!r} takes no parameters")
        try:
            eps, delta = (float(v) for v in params.split(","))
        except ValueError as exc:
            raise EngineError(f"bad parameters in {text!r}; expected eps,delta") from exc
        return name, (eps, delta)
    if name in ("edge-weighted", "general"):
        return name, (EDGE_EPS, EDGE_DELTA)
    return name, None


def prepare(instance, algorithm: str, solution=None) -> Plan:
    name, scale = parse_algorithm(algorithm)
    if name == "general":
        if isinstance(instance, BernoulliInstance):
            instance = GeneralInstance.from_bernoulli(instance)
        sol = solution or solve_lp_general(instance)
        used = rescale(sol, *scale) if scale != (0.0, 0.0) else sol
        r = _general_rates_of(instance, used)
        W = instance.weight_matrix
        return Plan(algorithm, instance, r, W, _priority(W), "pivotal", sol.objective, True)
    if not isinstance(instance, BernoulliInstance):
        raise EngineError(f"algorithm {name!r} needs a Bernoulli instance")
    if name == "vertex-weighted" and not instance.vertex_weighted:
        raise EngineError("vertex-weighted algorithm needs a vertex-weighted instance")
    sol = solution or solve_lp(instance)
    used = rescale(sol, *scale) if scale is not None else sol
    r = _rates_of(instance, used)
    W = instance.weight_matrix
    sampler = "independent" if name == "core-independent" else "pivotal"
    return Plan(algorithm, instance, r, W, _priority(W), sampler, sol.objective)


@dataclass
class SimReport:
    algorithm: str
    replications: int
    seed: int
    mean: float
    stderr: float
    match_freq: np.ndarray     # (n, T) or (n, K) for typed instances
    free_prob: np.ndarray      # (n, T+1) fraction of replications with i free before each step
    lp_value: float
    values: np.ndarray = field(repr=False, default=None)

    def step_match_freq(self, t: int, instance=None) -> float:
        """Fraction of replications in which online step t was matched."""
        if self.match_freq.shape[1] == self.free_prob.shape[1] - 1:
            return float(self.match_freq[:, t].sum())
        cols = [k for k, a in enumerate(instance.types) if a.t == t]
        return float(self.match_freq[:, cols].sum())


def _run_chunk(plan: Plan, seed: int, chunk: int, size: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    if plan.general:
        b = _general_batch(plan.r, plan.instance, plan.orders, size, rng)
        cols = b.mtype
    else:
        b = _core_batch(plan.r, plan.instance.p_array, plan.W, plan.orders, plan.sampler, size, rng)
        cols = np.broadcast_to(np.arange(b.matched.shape[1]), b.matched.shape)
    hit = b.matched >= 0
    counts = np.zeros(plan.W.shape, dtype=np.int64)
    np.add.at(counts, (b.matched[hit], cols[hit]), 1)
    values = np.where(hit, plan.W[np.maximum(b.matched, 0), np.maximum(cols, 0)], 0.0).sum(axis=1)
    return values, counts, b.free_counts


def simulate(instance, algorithm: str, replications: int, seed: int, workers: int = 1,
             solution=None, chunk_size: int = CHUNK) -> SimReport:
    """Monte Carlo estimate; identical output for any worker count.

    Replications are split into fixed-size chunks, chunk c drawing from the
    stream SeedSequence(seed, spawn_key=(c,)); results are reduced in chunk order.
    """
    if replications < 1:
        raise EngineError("replications must be at least 1")
    plan = prepare(instance, algorithm, solution)
    sizes = [min(chunk_size, replications - s) for s in range(0, replications, chunk_size)]
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(plan, seed, *a), enumerate(sizes)))
    else:
        parts = [_run_chunk(plan, seed, c, s) for c, s in enumerate(sizes)]
    values = np.concatenate([v for v, _, _ in parts])
    counts = sum(c for _, c, _ in parts)
    free = sum(f for _, _, f in parts)
    R = replications
    stderr = float(values.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0
    return SimReport(algorithm, R, seed, float(values.mean()), stderr, counts / R, free / R,
                     plan.lp_value, values)


# ---------------------------------------------------------- exact evaluation

@dataclass
class ExactReport:
    n: int
    T: int
    expected_weight: float
    match_prob: np.ndarray                  # (n, T), or (n, K) for typed instances
    free_law: list[dict[int, float]]        # free-set bitmask -> probability, before step t (t = 0..T)
    min1: list[dict[float, float]] = field(default_factory=list)            # E[min(1, R_{t,w})]
    match_at_least: list[dict[float, float]] = field(default_factory=list)  # Pr[matched at t with weight >= w]

    def free_marginals(self) -> np.ndarray:
        out = np.zeros((self.n, self.T + 1))
        for t, law in enumerate(self.free_law):
            for mask, q in law.items():
                for i in range(self.n):
                    if mask >> i & 1:
                        out[i, t] += q
        return out

    def ncd_excess(self, y: np.ndarray, occupied_only: bool = False) -> float:
        """Max over t and I of Pr[all I free] - prod(1-y) and Pr[all I occupied] - prod(y)."""
        worst = -np.inf
        for t, law in enumerate(self.free_law):
            masks = np.array(list(law.keys()), dtype=np.int64)
            probs = np.array(list(law.values()))
            for size in range(1, self.n + 1):
                for I in combinations(range(self.n), size):
                    im = sum(1 << i for i in I)
                    occ = probs[(masks & im) == 0].sum() - np.prod(y[list(I), t])
                    worst = max(worst, occ)
                    if not occupied_only:
                        fr = probs[(masks & im) == im].sum() - np.prod(1.0 - y[list(I), t])
                        worst = max(worst, fr)
        return float(worst)


def _proposal_law(v_ord: np.ndarray, sampler: str, cache: dict) -> list[tuple[tuple[int, ...], float]]:
    """Proposer sets (as positions in the priority order) with their probabilities."""
    key = (sampler, tuple(v_ord))
    if key in cache:
        return cache[key]
    if sampler == "pivotal":
        dist = ps_exact_distribution(v_ord)
        law = [(tuple(sorted(s)), q) for s, q in dist.outcomes if q > 0]
    else:
        law = [((), 1.0)]
        for k, vk in enumerate(v_ord):
            nxt = []
            for s, q in law:
                if vk < 1.0:
                    nxt.append((s, q * (1.0 - vk)))
                if vk > 0.0:
                    nxt.append((s + (k,), q * vk))
            law = nxt
    cache[key] = law
    return law


def _thresholds(W_col: np.ndarray) -> list[float]:
    return sorted(set(float(w) for w in W_col) | {0.0})


def exact_evaluate(instance: BernoulliInstance, solution, sampler: str = "pivotal",
                   max_n: int = EXACT_MAX_N, max_T: int = EXACT_MAX_T,
                   max_branches: int = EXACT_MAX_BRANCHES) -> ExactReport:
    """Exact law of the core algorithm by enumeration of every random choice."""
    if sampler not in ("pivotal", "independent"):
        raise EngineError(f"unknown sampler {sampler!r}")
    n, T = instance.n, instance.T
    if n > max_n or T > max_T:
        raise EngineError(f"exact evaluation limited to n <= {max_n}, T <= {max_T}")
    r = _rates_of(instance, solution)
    W, p = instance.weight_matrix, instance.p_array
    orders = _priority(W)
    law = {(1 << n) - 1: 1.0}
    free_law = [dict(law)]
    match_prob = np.zeros((n, T))
    min1, at_least = [], []
    cache: dict = {}
    for t in range(T):
        order = orders[t]
        ths = _thresholds(W[:, t])
        m1 = {w: 0.0 for w in ths}
        al = {w: 0.0 for w in ths}
        nxt: dict[int, float] = {}
        branches = 0
        for mask, pm in law.items():
            free = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
            v = np.where(free, r[:, t], 0.0)
            for w in ths:
                m1[w] += pm * min(1.0, float(v[W[:, t] >= w].sum()))
            for pos_set, qs in _proposal_law(v[order], sampler, cache):
                props = [int(order[k]) for k in pos_set]
                branches += 1 << len(props)
                if branches > max_branches:
                    raise EngineError(f"more than {max_branches} branches at step {t + 1}")
                # each proposer leaves independently w.p. p_t: the top by matching, the rest by discard
                for size in range(len(props) + 1):
                    for gone in combinations(props, size):
                        q = pm * qs * p[t] ** size * (1.0 - p[t]) ** (len(props) - size)
                        if q == 0.0:
                            continue
                        new = mask
                        for i in gone:
                            new &= ~(1 << i)
                        nxt[new] = nxt.get(new, 0.0) + q
                        if props and props[0] in gone:
                            top = props[0]
                            match_prob[top, t] += q
                            for w in ths:
                                if W[top, t] >= w:
                                    al[w] += q
        law = nxt
        free_law.append(dict(law))
        min1.append(m1)
        at_least.append(al)
    return ExactReport(n, T, float(np.sum(match_prob * W)), match_prob, free_law, min1, at_least)


def exact_evaluate_general(instance: GeneralInstance, solution, max_n: int = EXACT_MAX_N,
                           max_T: int = EXACT_MAX_T, max_branches: int = EXACT_MAX_BRANCHES) -> ExactReport:
    """Exact law of the typed algorithm (no discarding)."""
    n, T = instance.n, instance.T
    if n > max_n or T > max_T:
        raise EngineError(f"exact evaluation limited to n <= {max_n}, T <= {max_T}")
    r = _general_rates_of(instance, solution)
    W, pk = instance.weight_matrix, instance.type_prob
    orders = _priority(W)
    law = {(1 << n) - 1: 1.0}
    free_law = [dict(law)]
    match_prob = np.zeros((n, instance.K))
    cache: dict = {}
    for t in range(T):
        ks = instance.types_at(t)
        stay = 1.0 - sum(pk[k] for k in ks)
        nxt: dict[int, float] = {}
        branches = 0
        for mask, pm in law.items():
            if stay > 0:
                nxt[mask] = nxt.get(mask, 0.0) + pm * stay
            free = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
            for k in ks:
                order = orders[k]
                v = np.where(free, r[:, k], 0.0)
                for pos_set, qs in _proposal_law(v[order], "pivotal", cache):
                    branches += 1
                    if branches > max_branches:
                        raise EngineError(f"more than {max_branches} branches at step {t + 1}")
                    q = pm * pk[k] * qs
                    new = mask
                    if pos_set:
                        top = int(order[pos_set[0]])
                        match_prob[top, k] += q
                        new &= ~(1 << top)
                    nxt[new] = nxt.get(new, 0.0) + q
        law = nxt
        free_law.append(dict(law))
    return ExactReport(n, T, float(np.sum(match_prob * W)), match_prob, free_law)
