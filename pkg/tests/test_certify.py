import csv
import json
import math

import numpy as np
import pytest

from stochmatch.bounds import k_func
from stochmatch.certify import (CertificateReport, _holder_gap, _product_gap, certify_grid_1d, certify_k,
                                certify_linear_lb, certify_vertex_bound, check_structural, linear_gap,
                                validate_analysis_inequalities, vertex_branch_floor)
from stochmatch.instance import BernoulliInstance, gen_random
from stochmatch.lp import LpSolution, solve_lp


def assert_invariant(rep: CertificateReport):
    base = rep.grid_min >= rep.tau + rep.L * rep.h
    assert rep.passed == (base and all(rep.extra.get("side_conditions", {}).values()))


class TestGrid1d:
    def test_trivial_pass(self):
        rep = certify_grid_1d(lambda z: z, 0.0, 1.0, 0.1, 1.0, -0.2)
        assert rep.passed and rep.grid_min == 0.0 and rep.n_points == 11
        assert_invariant(rep)

    def test_margin_discipline(self):
        rep = certify_grid_1d(lambda z: z, 0.0, 1.0, 0.1, 1.0, 0.0)
        assert not rep.passed
        assert_invariant(rep)

    def test_nonfinite_fails(self):
        rep = certify_grid_1d(lambda z: np.where(np.isclose(z, 0.5), np.nan, z), 0.0, 1.0, 0.1, 1.0, -100.0)
        assert not rep.passed and rep.extra["nonfinite"] >= 1

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            certify_grid_1d(lambda z: z, 0.0, 1.0, 0.0, 1.0, 0.0)

    def test_chunked_parallel_equals_serial(self):
        f = lambda z: np.cos(7 * z) + z ** 2
        a = certify_grid_1d(f, 0.0, 2.0, 1e-4, 1.0, -2.0)
        b = certify_grid_1d(f, 0.0, 2.0, 1e-4, 1.0, -2.0, workers=4, chunk=777)
        assert a.grid_min == b.grid_min and a.argmin == b.argmin

    def test_json(self):
        rep = certify_grid_1d(lambda z: z, 0.0, 1.0, 0.1, 1.0, -0.2)
        d = json.loads(rep.to_json())
        assert d["passed"] is True and d["margin"] == pytest.approx(0.1)


class TestK:
    def test_default_passes(self):
        rep = certify_k()
        assert rep.passed and rep.L == 3.0 and rep.n_points == 10_001
        assert 0.0 < rep.argmin[0] < 1.0
        assert_invariant(rep)

    @pytest.mark.parametrize("tau", [0.698, 0.70])
    def test_raised_threshold_fails(self, tau):
        assert not certify_k(tau=tau).passed

    def test_other_parameters_run(self):
        rep = certify_k(0.5, 0.5, h=1e-3)
        assert np.isfinite(rep.grid_min)
        assert_invariant(rep)

    def test_curve_csv(self, tmp_path):
        path = tmp_path / "k.csv"
        certify_k(h=1e-2, csv_path=str(path))
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["z", "k"] and len(rows) == 102
        z, k = map(float, rows[50])
        assert k == pytest.approx(k_func(0.11, 0.18, z), abs=1e-12)


class TestVertex:
    def test_default_passes(self):
        rep = certify_vertex_bound()
        assert rep.passed and rep.L == 1.0
        assert rep.grid_min >= 0.685 + 1e-4
        assert all(rep.extra["side_conditions"].values())
        assert_invariant(rep)

    def test_raised_threshold_fails(self):
        assert not certify_vertex_bound(h=1e-3, tau=0.705).passed

    def test_coarse_mode(self):
        rep = certify_vertex_bound(h=1e-2)
        assert_invariant(rep)

    def test_strip_floor(self):
        assert np.all(vertex_branch_floor(np.linspace(0, 0.25, 10)) >= 0.7)


class TestLinear:
    def test_operative_constants_fine_grid(self):
        rep = certify_linear_lb(h=1e-4)
        assert rep.passed and rep.grid_min >= 3e-4
        assert_invariant(rep)

    def test_loose_constants_fail(self):
        assert not certify_linear_lb(h=1e-2, constants=(0.9, 0.0, 0.0)).passed

    def test_boundary_points_included(self):
        # x = 0.4 with N = 10: (N - 4)^2 // N = 3, so y = 0.3 <= 0.36 is the top of that column
        assert np.isfinite(linear_gap(0.0, 1.0))
        rep = certify_linear_lb(h=0.1, tau=-10.0)
        assert rep.n_points == sum(((10 - k) ** 2) // 10 for k in range(10))

    def test_requires_integer_reciprocal(self):
        with pytest.raises(ValueError):
            certify_linear_lb(h=0.3)

    def test_parallel_equals_serial(self):
        a = certify_linear_lb(h=2e-3)
        b = certify_linear_lb(h=2e-3, workers=3)
        assert a.grid_min == b.grid_min and a.argmin == b.argmin


class TestStructural:
    def test_single_edge_equality(self):
        inst = BernoulliInstance(1, 1, (0.7,), ((0, 0, 1.0),))
        rep = check_structural(LpSolution(inst, np.array([[0.7]]), 0.7), 0.5)
        assert rep.ok
        low = next(c for c in rep.checks if c.name.startswith("beta_le"))
        assert low.slack == pytest.approx(0.0, abs=1e-12)

    def test_zero_solution(self):
        inst = BernoulliInstance(2, 2, (0.5, 0.5), ((0, 0, 1.0),))
        assert check_structural(LpSolution(inst, np.zeros((2, 2)), 0.0), 0.5).ok

    @pytest.mark.parametrize("seed", range(50))
    def test_random_corpus(self, seed):
        sol = solve_lp(gen_random(1 + seed % 6, 1 + (seed * 7) % 8, 0.7, seed=seed))
        for theta in (0.0, 0.25, 0.5, 0.75):
            rep = check_structural(sol, theta)
            others = [c for c in rep.violations() if not c.name.startswith("beta_le")]
            assert not others, others

    def test_low_side_bound_fails_for_split_mass(self):
        # one node, two unit-rate edges of mass 0.15: beta_le = 0.925 but S_le (1 - 1/2 + S_le/2) = 1
        inst = BernoulliInstance(1, 2, (0.15, 0.15 / 0.85), ((0, 0, 1.0), (0, 1, 1.0)))
        sol = LpSolution(inst, np.array([[0.15, 0.15]]), 0.3)
        np.testing.assert_allclose(sol.r, [[1.0, 1.0]])
        rep = check_structural(sol, 0.5)
        assert [c.name for c in rep.violations()] == ["beta_le >= S_le(1-theta+S_le/2)"]
        assert rep.violations()[0].slack == pytest.approx(-0.075)

    def test_detects_violation(self):
        inst = BernoulliInstance(1, 1, (0.5,), ((0, 0, 1.0),))
        rep = check_structural(LpSolution(inst, np.array([[0.9]]), 0.9), 0.5)
        assert not rep.ok


class TestAnalysis:
    def test_holder_equality(self):
        assert _holder_gap(np.array([0.5, 0.5]), 2) == pytest.approx(0.0, abs=1e-15)

    def test_product_boundary(self):
        assert _product_gap(np.array([1.0])) == 0.0

    def test_random_run(self):
        rep = validate_analysis_inequalities(seed=42, trials=10_000)
        assert rep.ok, rep.violations[:3]
        assert rep.checked["holder"] == 30_000

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            validate_analysis_inequalities(trials=0)

    def test_log_sandwich_grid(self):
        x = np.linspace(0, 0.999, 1000)
        mid = (x - 1) * np.log1p(-x)
        assert np.all(x * (1 - x) <= mid + 1e-12) and np.all(mid <= x + 1e-12)
