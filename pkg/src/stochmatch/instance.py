"""Matching instances: data model, generators and JSON serialization.

Offline nodes and online time steps are 0-based inside the library.  The JSON
format uses 1-based indices and is converted on read/write.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised for malformed documents or instances that violate an invariant."""


@dataclass(frozen=True)
class BernoulliInstance:
    """Online node t arrives independently with probability p[t].

    Edges are stored sparsely as (i, t, w) triples sorted by (t, i); a missing
    pair means the nodes are not adjacent.
    """

    n: int
    T: int
    p: tuple[float, ...]
    edges: tuple[tuple[int, int, float], ...] = ()
    vertex_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        merged = {}
        for i, t, w in self.edges:
            merged[(int(i), int(t))] = float(w)
        ordered = tuple(sorted(((i, t, w) for (i, t), w in merged.items()), key=lambda e: (e[1], e[0])))
        object.__setattr__(self, "edges", ordered)
        if self.vertex_weights is not None:
            object.__setattr__(self, "vertex_weights", tuple(float(v) for v in self.vertex_weights))

    @classmethod
    def from_weights(cls, n: int, T: int, p: Sequence[float], weights: Mapping[tuple[int, int], float],
                     vertex_weights: Sequence[float] | None = None) -> "BernoulliInstance":
        return cls(n, T, tuple(p), tuple((i, t, w) for (i, t), w in weights.items()),
                   None if vertex_weights is None else tuple(vertex_weights))

    @property
    def weights(self) -> dict[tuple[int, int], float]:
        return {(i, t): w for i, t, w in self.edges}

    @property
    def vertex_weighted(self) -> bool:
        return self.vertex_weights is not None

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.T))
        for i, t, w in self.edges:
            W[i, t] = w
        W.setflags(write=False)
        return W

    @cached_property
    def edge_mask(self) -> np.ndarray:
        M = np.zeros((self.n, self.T), dtype=bool)
        for i, t, _ in self.edges:
            M[i, t] = True
        M.setflags(write=False)
        return M

    @property
    def p_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)


@dataclass(frozen=True)
class ArrivalType:
    """One possible realization of online node t: type j with probability p."""

    t: int
    j: int
    p: float
    edges: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        merged = {int(i): float(w) for i, w in self.edges}
        object.__setattr__(self, "edges", tuple(sorted(merged.items())))


@dataclass(frozen=True)
class GeneralInstance:
    """Online node t realizes at most one of its types; the leftover mass is an empty arrival."""

    n: int
    T: int
    types: tuple[ArrivalType, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(sorted(self.types, key=lambda a: (a.t, a.j))))

    @property
    def K(self) -> int:
        return len(self.types)

    @cached_property
    def type_time(self) -> np.ndarray:
        return np.array([a.t for a in self.types], dtype=int)

    @cached_property
    def type_prob(self) -> np.ndarray:
        return np.array([a.p for a in self.types], dtype=float)

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        """Weights as an (n, K) array with one column per type."""
        W = np.zeros((self.n, self.K))
        for k, a in enumerate(self.types):
            for i, w in a.edges:
                W[i, k] = w
        W.setflags(write=False)
        return W

    @cached_property
    def edge_mask(self) -> np.ndarray:
        M = np.zeros((self.n, self.K), dtype=bool)
        for k, a in enumerate(self.types):
            for i, _ in a.edges:
                M[i, k] = True
        M.setflags(write=False)
        return M

    def types_at(self, t: int) -> list[int]:
        return [k for k, a in enumerate(self.types) if a.t == t]

    @classmethod
    def from_bernoulli(cls, inst: BernoulliInstance) -> "GeneralInstance":
        types = []
        for t in range(inst.T):
            nbrs = tuple((i, w) for i, tt, w in inst.edges if tt == t)
            types.append(ArrivalType(t, 0, inst.p[t], nbrs))
        return cls(inst.n, inst.T, tuple(types))


@dataclass(frozen=True)
class Stochastic3SatFormula:
    """CNF over variables 1..num_vars; literal +v is x_v and -v is its negation.

    Odd variables are set by the algorithm, even variables uniformly at random.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    k: int = 3

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(int(l) for l in c) for c in self.clauses))

    def validate(self) -> list[str]:
        problems = []
        occurrences = [0] * (self.num_vars + 1)
        for ci, clause in enumerate(self.clauses):
            if not 1 <= len(clause) <= 3:
                problems.append(f"clause {ci + 1} has {len(clause)} literals")
            for lit in clause:
                v = abs(lit)
                if lit == 0 or v > self.num_vars:
                    problems.append(f"clause {ci + 1} has out-of-range literal {lit}")
                    continue
                occurrences[v] += 1
                if lit < 0 and v % 2 == 0:
                    problems.append(f"even variable x{v} appears negated in clause {ci + 1}")
        for v in range(1, self.num_vars + 1):
            if occurrences[v] > self.k:
                problems.append(f"variable x{v} appears in {occurrences[v]} clauses (k={self.k})")
        return problems


def validate(instance: BernoulliInstance | GeneralInstance, tol: float = 1e-12) -> list[str]:
    """Return the violated invariants; an empty list means the instance is valid."""
    problems = []
    if instance.n < 0 or instance.T < 0:
        problems.append("negative dimension")
    if isinstance(instance, BernoulliInstance):
        if len(instance.p) != instance.T:
            problems.append(f"p has length {len(instance.p)}, expected T={instance.T}")
        for t, pt in enumerate(instance.p):
            if not (0.0 <= pt <= 1.0) or math.isnan(pt):
                problems.append(f"arrival probability out of range at t={t + 1}: {pt}")
        for i, t, w in instance.edges:
            if not (0 <= i < instance.n and 0 <= t < instance.T):
                problems.append(f"edge index out of range: ({i + 1},{t + 1})")
            if not w >= 0:
                problems.append(f"negative weight on edge ({i + 1},{t + 1}): {w}")
        vw = instance.vertex_weights
        if vw is not None:
            if len(vw) != instance.n:
                problems.append(f"vertex_weights has length {len(vw)}, expected n={instance.n}")
            else:
                for i, w in enumerate(vw):
                    if not w >= 0:
                        problems.append(f"negative vertex weight at i={i + 1}")
                for i, t, w in instance.edges:
                    if 0 <= i < len(vw) and abs(w - vw[i]) > tol:
                        problems.append(f"edge ({i + 1},{t + 1}) weight {w} differs from vertex weight {vw[i]}")
    else:
        mass = [0.0] * max(instance.T, 0)
        seen = set()
        for a in instance.types:
            if not 0 <= a.t < instance.T:
                problems.append(f"type time out of range: t={a.t + 1}")
                continue
            if (a.t, a.j) in seen:
                problems.append(f"duplicate type j={a.j + 1} at t={a.t + 1}")
            seen.add((a.t, a.j))
            if not (0.0 <= a.p <= 1.0):
                problems.append(f"type probability out of range at t={a.t + 1}, j={a.j + 1}: {a.p}")
            mass[a.t] += a.p
            for i, w in a.edges:
                if not 0 <= i < instance.n:
                    problems.append(f"edge index out of range: i={i + 1} at t={a.t + 1}, j={a.j + 1}")
                if not w >= 0:
                    problems.append(f"negative weight at i={i + 1}, t={a.t + 1}, j={a.j + 1}")
        for t, m in enumerate(mass):
            if m > 1.0 + tol:
                problems.append(f"type probabilities at t={t + 1} sum to {m} > 1")
    return problems


# ---------------------------------------------------------------- generators

def gen_rescale_example(n: int, W: float = 1000.0) -> BernoulliInstance:
    """n diagonal unit edges arriving w.p. 1-1/n, then one sure node adjacent to all with weight W."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    p = [1.0 - 1.0 / n] * n + [1.0]
    edges = [(i, i, 1.0) for i in range(n)] + [(i, n, float(W)) for i in range(n)]
    return BernoulliInstance(n, n + 1, tuple(p), tuple(edges))


def gen_uniform_star(n: int) -> BernoulliInstance:
    """One online node, arriving surely, with unit edges to all n offline nodes."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    return BernoulliInstance(n, 1, (1.0,), tuple((i, 0, 1.0) for i in range(n)), tuple([1.0] * n))


def gen_random(n: int, T: int, density: float = 0.5, weight_range: tuple[float, float] = (0.0, 1.0),
               vertex_weighted: bool = False, seed: int = 0) -> BernoulliInstance:
    """Random instance: each edge present w.p. density, p_t uniform on (0, 1]."""
    if n < 1 or T < 1:
        raise InstanceError("n and T must be at least 1")
    if not 0.0 <= density <= 1.0:
        raise InstanceError("density must lie in [0, 1]")
    lo, hi = weight_range
    if not 0.0 <= lo <= hi:
        raise InstanceError("weight_range must satisfy 0 <= lo <= hi")
    rng = np.random.default_rng(seed)
    p = 1.0 - rng.random(T)
    present = rng.random((n, T)) < density
    if vertex_weighted:
        vw = rng.uniform(lo, hi, size=n)
        edges = [(i, t, float(vw[i])) for t in range(T) for i in range(n) if present[i, t]]
        return BernoulliInstance(n, T, tuple(p), tuple(edges), tuple(float(v) for v in vw))
    w = rng.uniform(lo, hi, size=(n, T))
    edges = [(i, t, float(w[i, t])) for t in range(T) for i in range(n) if present[i, t]]
    return BernoulliInstance(n, T, tuple(p), tuple(edges))


def offline_labels_3sat(formula: Stochastic3SatFormula) -> list[tuple[str, int]]:
    """Labels ("T", v) / ("F", v) of the offline nodes of the reduction, in index order."""
    labels = []
    for v in range(1, formula.num_vars + 1):
        if v % 2 == 1:
            labels.append(("T", v))
        labels.append(("F", v))
    return labels


def build_from_3sat(formula: Stochastic3SatFormula, p: float) -> BernoulliInstance:
    """Unweighted matching instance encoding a stochastic 3-SAT formula.

    Variable node v (time v) arrives surely when v is odd (neighbors T^v, F^v)
    and w.p. 1/2 when v is even (neighbor F^v).  Clause nodes follow in input
    order, each arriving w.p. p; literal x_v links to F^v, literal not-x_v to T^v.
    """
    problems = formula.validate()
    for msg in problems:
        if "negated" in msg:
            raise InstanceError(msg)
    if problems:
        raise InstanceError("; ".join(problems))
    if not 0.0 <= p <= 1.0:
        raise InstanceError("p must lie in [0, 1]")
    index = {lab: i for i, lab in enumerate(offline_labels_3sat(formula))}
    nv = formula.num_vars
    probs, edges = [], []
    for v in range(1, nv + 1):
        t = v - 1
        if v % 2 == 1:
            probs.append(1.0)
            edges += [(index[("T", v)], t, 1.0), (index[("F", v)], t, 1.0)]
        else:
            probs.append(0.5)
            edges.append((index[("F", v)], t, 1.0))
    for ci, clause in enumerate(formula.clauses):
        t = nv + ci
        probs.append(float(p))
        for lit in clause:
            side = "F" if lit > 0 else "T"
            edges.append((index[(side, abs(lit))], t, 1.0))
    n_off = len(index)
    return BernoulliInstance(n_off, len(probs), tuple(probs), tuple(edges), tuple([1.0] * n_off))


# ------------------------------------------------------------- serialization

_BERNOULLI_KEYS = {"kind", "n", "T", "p", "edges", "vertex_weights"}
_GENERAL_KEYS = {"kind", "n", "T", "types"}


def to_dict(instance: BernoulliInstance | GeneralInstance) -> dict:
    if isinstance(instance, BernoulliInstance):
        doc = {"kind": "bernoulli", "n": instance.n, "T": instance.T, "p": list(instance.p),
               "edges": [{"i": i + 1, "t": t + 1, "w": w} for i, t, w in instance.edges]}
        if instance.vertex_weights is not None:
            doc["vertex_weights"] = list(instance.vertex_weights)
        return doc
    return {"kind": "general", "n": instance.n, "T": instance.T,
            "types": [{"t": a.t + 1, "j": a.j + 1, "p": a.p,
                       "edges": [{"i": i + 1, "w": w} for i, w in a.edges]} for a in instance.types]}


def write_json(instance: BernoulliInstance | GeneralInstance, indent: int | None = 1) -> str:
    return json.dumps(to_dict(instance), indent=indent)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise InstanceError(f"missing field '{key}' in {where}")
    return doc[key]


def _check_keys(doc, allowed: set, where: str):
    if not isinstance(doc, dict):
        raise InstanceError(f"{where} must be an object")
    extra = set(doc) - allowed
    if extra:
        raise InstanceError(f"unknown field(s) {sorted(extra)} in {where}")


def _int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise InstanceError(f"field '{name}' must be an integer")
    return v


def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InstanceError(f"field '{name}' must be a number")
    return float(v)


def from_dict(doc: dict) -> BernoulliInstance | GeneralInstance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be an object")
    kind = _require(doc, "kind", "instance")
    if kind == "bernoulli":
        _check_keys(doc, _BERNOULLI_KEYS, "instance")
        n = _int(_require(doc, "n", "instance"), "n")
        T = _int(_require(doc, "T", "instance"), "T")
        p = [_num(v, "p") for v in _require(doc, "p", "instance")]
        edges = []
        for e in _require(doc, "edges", "instance"):
            _check_keys(e, {"i", "t", "w"}, "edge")
            edges.append((_int(_require(e, "i", "edge"), "i") - 1, _int(_require(e, "t", "edge"), "t") - 1,
                          _num(_require(e, "w", "edge"), "w")))
        vw = doc.get("vertex_weights")
        inst = BernoulliInstance(n, T, tuple(p), tuple(edges),
                                 None if vw is None else tuple(_num(v, "vertex_weights") for v in vw))
    elif kind == "general":
        _check_keys(doc, _GENERAL_KEYS, "instance")
        n = _int(_require(doc, "n", "instance"), "n")
        T = _int(_require(doc, "T", "instance"), "T")
        types = []
        for a in _require(doc, "types", "instance"):
            _check_keys(a, {"t", "j", "p", "edges"}, "type")
            nbrs = []
            for e in _require(a, "edges", "type"):
                _check_keys(e, {"i", "w"}, "type edge")
                nbrs.append((_int(_require(e, "i", "type edge"), "i") - 1, _num(_require(e, "w", "type edge"), "w")))
            types.append(ArrivalType(_int(_require(a, "t", "type"), "t") - 1, _int(_require(a, "j", "type"), "j") - 1,
                                     _num(_require(a, "p", "type"), "p"), tuple(nbrs)))
        inst = GeneralInstance(n, T, tuple(types))
    else:
        raise InstanceError(f"unknown instance kind {kind!r}")
    problems = validate(inst)
    if problems:
        raise InstanceError("invalid instance: " + "; ".join(problems))
    return inst


def read_json(text: str) -> BernoulliInstance | GeneralInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON: {exc}") from exc
    return from_dict(doc)


def formula_from_dict(doc: dict) -> Stochastic3SatFormula:
    """Formula document: {"num_vars": int, "clauses": [[signed literal, ...], ...], "k": int?}."""
    _check_keys(doc, {"num_vars", "clauses", "k"}, "formula")
    f = Stochastic3SatFormula(_int(_require(doc, "num_vars", "formula"), "num_vars"),
                              tuple(tuple(_int(l, "literal") for l in c) for c in _require(doc, "clauses", "formula")),
                              _int(doc.get("k", 3), "k"))
    problems = f.validate()
    if problems:
        raise InstanceError("invalid formula: " + "; ".join(problems))
    return f
