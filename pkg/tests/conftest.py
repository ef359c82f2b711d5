import numpy as np
import pytest

from stochmatch.instance import BernoulliInstance

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Register one pass/fail line for the acceptance summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def tiny_instance(n, T, seed, weights=(1.0, 2.0, 3.0), density=0.8, vertex_weighted=False):
    """Small instance with weights from a short list, so equal-weight ties occur."""
    rng = np.random.default_rng(seed)
    p = rng.choice([0.25, 0.5, 0.75, 1.0, float(rng.uniform(0.05, 1))], size=T)
    vw = rng.choice(weights, size=n)
    edges = []
    for t in range(T):
        for i in range(n):
            if rng.random() < density:
                edges.append((i, t, float(vw[i] if vertex_weighted else rng.choice(weights))))
    return BernoulliInstance(n, T, tuple(p), tuple(edges), tuple(vw) if vertex_weighted else None)


def tiny_corpus(count=30):
    """Deterministic corpus of instances with n, T <= 3."""
    out = []
    seed = 0
    while len(out) < count:
        n, T = 1 + seed % 3, 1 + (seed // 3) % 3
        out.append(tiny_instance(n, T, seed, vertex_weighted=(seed % 4 == 3)))
        seed += 1
    return out


def benchmark_corpus(count=50):
    """Random instances with n, T <= 8: every 10th has one offline node, odd seeds are vertex-weighted."""
    from stochmatch.instance import gen_random

    out = []
    for k in range(count):
        rng = np.random.default_rng(k)
        n = 1 if k % 10 == 0 else int(rng.integers(1, 9))
        T = int(rng.integers(1, 9))
        out.append(gen_random(n, T, 0.7, (0.5, 3.0), vertex_weighted=(k % 2 == 1), seed=1000 + k))
    return out
