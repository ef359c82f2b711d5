"""Lipschitz grid certificates and numeric checks of the analysis inequalities.

A certificate evaluates f on a grid of spacing h and passes iff

    grid minimum >= tau + L * h,

which implies f >= tau everywhere when f is L-Lipschitz, since every point of
the domain lies within h of a grid point.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .bounds import conv_raw, f_var, g_theta, k_func, vertex_B
from .lp import BINARY_TOL, LpSolution, check_feasibility, lp_statistics

K_LIPSCHITZ = (3.0, "Lipschitz bound on k from the curve analysis")
LINEAR_LIPSCHITZ = (3.0, "Lipschitz bound on the envelope gap")
VERTEX_LIPSCHITZ = (1.0, "Lipschitz bound on B over y >= 1/4")


@dataclass
class CertificateReport:
    target: str
    domain: str
    h: float
    L: float
    L_source: str
    tau: float
    grid_min: float
    argmin: tuple
    n_points: int
    wall_time: float
    extra: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.L * self.h

    @property
    def passed(self) -> bool:
        ok = bool(np.isfinite(self.grid_min)) and self.grid_min >= self.tau + self.margin
        return ok and all(self.extra.get("side_conditions", {}).values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        d["passed"] = self.passed
        d["argmin"] = [float(v) for v in self.argmin]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=float)

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.target}: {verdict} min={self.grid_min:.7f} at {tuple(round(v, 6) for v in self.argmin)} "
                f"needs >= {self.tau} + {self.L:g}*{self.h:g} = {self.tau + self.margin:.7f} "
                f"({self.n_points} points, {self.wall_time:.2f}s)")


def _chunks(n: int, size: int):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _reduce_min(results):
    """results: list of (min, argmin-tuple, nonfinite-count); first minimum in chunk order wins."""
    best, where, bad = math.inf, (), 0
    for m, a, b in results:
        bad += b
        if m < best:
            best, where = m, a
    return best, where, bad


def certify_grid_1d(f: Callable, a: float, b: float, h: float, L: float, tau: float,
                    target: str = "f", L_source: str = "", workers: int = 1,
                    chunk: int = 1 << 16) -> CertificateReport:
    if h <= 0 or L < 0 or b < a:
        raise ValueError("need h > 0, L >= 0 and a <= b")
    start = time.perf_counter()
    n = int(round((b - a) / h)) + 1
    z = np.minimum(a + h * np.arange(n), b)

    def work(bounds):
        lo, hi = bounds
        v = np.asarray(f(z[lo:hi]), dtype=float)
        fin = np.isfinite(v)
        if not fin.all():
            return -math.inf, (float(z[lo:hi][~fin][0]),), int((~fin).sum())
        k = int(np.argmin(v))
        return float(v[k]), (float(z[lo + k]),), 0

    parts = _run(work, _chunks(n, chunk), workers)
    best, where, bad = _reduce_min(parts)
    extra = {"nonfinite": bad} if bad else {}
    return CertificateReport(target, f"[{a}, {b}]", h, L, L_source, tau, best, where, n,
                             time.perf_counter() - start, extra)


def _run(work, items, workers):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, items))
    return [work(it) for it in items]


def certify_k(eps: float = 0.11, delta: float = 0.18, h: float = 1e-4, tau: float = 0.678,
              csv_path: str | None = None, workers: int = 1) -> CertificateReport:
    """Certify k_{eps,delta}(z) >= tau on [0, 1]; optionally write the (z, k) curve."""
    rep = certify_grid_1d(lambda z: k_func(eps, delta, z), 0.0, 1.0, h, K_LIPSCHITZ[0], tau,
                          target=f"k[eps={eps},delta={delta}]", L_source=K_LIPSCHITZ[1], workers=workers)
    if csv_path:
        write_k_curve(csv_path, eps, delta, h)
    return rep


def write_k_curve(path: str, eps: float = 0.11, delta: float = 0.18, h: float = 1e-4):
    n = int(round(1.0 / h)) + 1
    z = np.minimum(h * np.arange(n), 1.0)
    k = k_func(eps, delta, z)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "k"])
        for zi, ki in zip(z, k):
            w.writerow([f"{zi:.6g}", f"{ki:.12g}"])


def _grid_2d(f, xs: np.ndarray, y_of_row: Callable, workers: int, rows_per_chunk: int):
    """Minimum of f over rows x = xs[r] with column values y_of_row(r)."""

    def work(bounds):
        lo, hi = bounds
        best, where, bad, count = math.inf, (), 0, 0
        X, Y = [], []
        for r in range(lo, hi):
            y = y_of_row(r)
            X.append(np.full(y.shape, xs[r]))
            Y.append(y)
        if not X:
            return best, where, bad, 0
        X = np.concatenate(X)
        Y = np.concatenate(Y)
        if X.size == 0:
            return best, where, bad, 0
        v = np.asarray(f(X, Y), dtype=float)
        fin = np.isfinite(v)
        if not fin.all():
            k = int(np.flatnonzero(~fin)[0])
            return -math.inf, (float(X[k]), float(Y[k])), int((~fin).sum()), X.size
        k = int(np.argmin(v))
        return float(v[k]), (float(X[k]), float(Y[k])), 0, X.size

    parts = _run(work, _chunks(len(xs), rows_per_chunk), workers)
    best, where, bad = _reduce_min([(m, a, b) for m, a, b, _ in parts])
    return best, where, bad, sum(c for *_, c in parts)


def vertex_branch_floor(y):
    """Closed-form floor 1 - sqrt(1/8 + y - y^2/2)/2 of the first branch of B for x in [0, 1/2]."""
    y = np.asarray(y, dtype=float)
    return 1.0 - 0.5 * np.sqrt(0.125 + y - y ** 2 / 2)


def certify_vertex_bound(h: float = 1e-4, tau: float = 0.685, workers: int = 1) -> CertificateReport:
    """Certify B(x, y) >= tau on [0, 1/2] x [1/4, 1/2]; the strip y <= 1/4 is covered analytically."""
    start = time.perf_counter()
    nx = int(round(0.5 / h)) + 1
    ny = int(round(0.25 / h)) + 1
    xs = np.minimum(h * np.arange(nx), 0.5)
    ys = np.minimum(0.25 + h * np.arange(ny), 0.5)
    best, where, bad, count = _grid_2d(vertex_B, xs, lambda r: ys, workers, max(1, (1 << 20) // ny))
    # analytic strip: first branch >= floor(y) >= 0.7 for y <= 1/4, at spot points
    ys_spot = np.linspace(0.0, 0.25, 10)
    xs_spot = np.linspace(0.0, 0.5, 10)
    X, Y = np.meshgrid(xs_spot, ys_spot)
    floor = vertex_branch_floor(Y)
    side = {"strip_floor_ge_0.7": bool(np.all(floor >= 0.7)),
            "B_ge_floor_in_strip": bool(np.all(vertex_B(X, Y) >= floor - 1e-15))}
    extra = {"side_conditions": side, "strip_min_floor": float(floor.min())}
    if bad:
        extra["nonfinite"] = bad
    L, src = VERTEX_LIPSCHITZ
    return CertificateReport("vertex_B", "x in [0,0.5], y in [0.25,0.5]", h, L, src, tau, best, where,
                             count, time.perf_counter() - start, extra)


def linear_gap(x, y, constants=(0.614, 0.122, 0.197), theta: float = 0.5):
    a, b, c = constants
    return conv_raw(theta, x, y) - (a + b * np.asarray(x) + c * np.asarray(y))


def certify_linear_lb(h: float = 1e-3, constants=(0.614, 0.122, 0.197), workers: int = 1,
                      tau: float = 0.0) -> CertificateReport:
    """Certify conv_raw(1/2, x, y) - (a + b x + c y) >= tau on 0 <= x < 1, 0 < y <= (1-x)^2."""
    start = time.perf_counter()
    N = int(round(1.0 / h))
    if abs(N * h - 1.0) > 1e-9:
        raise ValueError("certify_linear_lb needs 1/h to be an integer")
    xs = np.arange(N) / N

    def y_of_row(r):
        # y = m/N with m >= 1 and m*N <= (N - r)^2, decided in integers
        m_max = ((N - r) ** 2) // N
        return np.arange(1, m_max + 1) / N

    best, where, bad, count = _grid_2d(lambda x, y: linear_gap(x, y, constants), xs, y_of_row, workers,
                                       max(1, 50))
    extra = {"constants": list(constants)}
    if bad:
        extra["nonfinite"] = bad
    L, src = LINEAR_LIPSCHITZ
    return CertificateReport(f"linear_lb{tuple(constants)}", "0 <= x < 1, 0 < y <= (1-x)^2", h, L, src, tau,
                             best, where, count, time.perf_counter() - start, extra)


# -------------------------------------------------------- structural checks

@dataclass
class Check:
    name: str
    slack: float
    ok: bool
    detail: str = ""


@dataclass
class StructuralReport:
    checks: list[Check]
    f_var_alpha: float
    alpha: float

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def violations(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]


def check_structural(solution: LpSolution, theta: float, tol: float = 1e-9) -> StructuralReport:
    """Lower bounds on beta_gt and beta_le, the implied degree bound and the near-binary count."""
    st = lp_statistics(solution, theta)
    checks = []
    s = st.beta_gt - st.S_gt ** 2 / 2
    checks.append(Check("beta_gt >= S_gt^2/2", s, s >= -tol))
    s = st.beta_le - st.S_le * (1 - theta + st.S_le / 2)
    checks.append(Check("beta_le >= S_le(1-theta+S_le/2)", s, s >= -tol))
    inst = solution.instance
    x, y = solution.x, solution.y
    cap = 1.0 - np.cumprod(1.0 - inst.p_array)
    s = float(np.min(cap[None, :] - (y + x))) if x.size else 0.0
    checks.append(Check("y + x <= 1 - prod(1-p)", s, s >= -tol))
    frac = solution.fractional_count(BINARY_TOL)
    checks.append(Check("fractional r count <= T", float(inst.T - frac), frac <= inst.T,
                        f"{frac} fractional of T={inst.T}"))
    fva = float(f_var(st.alpha))
    floor = 1 - 1 / (2 * math.sqrt(2))
    checks.append(Check("alpha <= 1/2 (f_var floor)", 0.5 - st.alpha, st.alpha <= 0.5 + tol,
                        f"f_var(alpha)={fva:.6f}, floor {floor:.6f}"))
    return StructuralReport(checks, fva, st.alpha)


@dataclass
class AnalysisReport:
    trials: int
    seed: int
    checked: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _holder_gap(z: np.ndarray, k: int) -> float:
    """Relative gap of sum z^k >= C^{k-1}/S^{k-2} (negative = violated)."""
    S, C = z.sum(), (z ** 2).sum()
    if S == 0:
        return 0.0
    lhs = (z ** k).sum()
    rhs = C ** (k - 1) / S ** (k - 2)
    return (lhs - rhs) / max(1.0, abs(rhs))


def _product_gap(z: np.ndarray) -> float:
    """Gap of prod(1-z) <= exp((S^2/C) ln(1 - C/S))."""
    S, C = z.sum(), (z ** 2).sum()
    lhs = float(np.prod(1.0 - z))
    if S == 0:
        return 1.0 - lhs
    ratio = C / S
    rhs = 0.0 if ratio >= 1.0 else math.exp(S * S / C * math.log1p(-ratio))
    return rhs - lhs


def _ratio_curve(theta, A, B, C, x):
    return (1.0 - g_theta(theta, C * x) * A ** x) / (B * x)


def validate_analysis_inequalities(seed: int = 42, trials: int = 10_000, tol: float = 1e-9) -> AnalysisReport:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    rep = AnalysisReport(trials, seed, {"holder": 0, "product": 0, "ratio_monotone": 0, "log_sandwich": 0})

    def fail(name, witness, excess):
        rep.violations.append({"check": name, "witness": witness, "excess": float(excess)})

    for trial in range(trials):
        n = int(rng.integers(1, 13))
        z = rng.random(n)
        # sprinkle exact 0/1 entries to exercise the boundary cases
        if trial % 10 == 0:
            z[rng.random(n) < 0.3] = 1.0
        if trial % 10 == 1:
            z[rng.random(n) < 0.3] = 0.0
        for k in (2, 3, 4):
            g = _holder_gap(z, k)
            rep.checked["holder"] += 1
            if g < -tol:
                fail("holder", {"z": z.tolist(), "k": k}, -g)
        g = _product_gap(z)
        rep.checked["product"] += 1
        if g < -tol:
            fail("product", {"z": z.tolist()}, -g)

        theta = float(rng.random()) * 0.999
        A = float(rng.random())
        B = float(rng.uniform(0.01, 10.0))
        C = float(rng.uniform(0.0, 5.0))
        xs = np.sort(rng.uniform(1e-6, 5.0, size=64))
        fx = _ratio_curve(theta, A, B, C, xs)
        rise = np.diff(fx) - tol * np.maximum(1.0, np.abs(fx[:-1]))
        rep.checked["ratio_monotone"] += 1
        if np.any(rise > 0):
            k = int(np.argmax(rise))
            fail("ratio_monotone", {"theta": theta, "A": A, "B": B, "C": C, "x": [xs[k], xs[k + 1]]}, rise[k])

        x = float(rng.random())
        mid = (x - 1.0) * math.log1p(-x)
        rep.checked["log_sandwich"] += 1
        if x * (1 - x) > mid + tol or mid > x + tol:
            fail("log_sandwich", {"x": x}, max(x * (1 - x) - mid, mid - x))
    return rep
