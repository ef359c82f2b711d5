import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmatch.instance import ArrivalType, BernoulliInstance, GeneralInstance, gen_random, gen_rescale_example, gen_uniform_star
from stochmatch.lp import (LpSolution, build_lp, check_feasibility, check_feasibility_general, highs_solver,
                           lp_statistics, solve_lp, solve_lp_general)
from stochmatch.simplex import SolverError, simplex_max


def brute_force_vertices(c, A, b):
    """Best objective over all basic solutions of A x <= b, x >= 0 (tiny LPs only)."""
    m, n = A.shape
    full = np.hstack([A, np.eye(m)])
    best = 0.0
    for basis in itertools.combinations(range(n + m), m):
        B = full[:, basis]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -1e-12):
            x = np.zeros(n + m)
            x[list(basis)] = xb
            best = max(best, float(c @ x[:n]))
    return best


class TestSimplex:
    def test_textbook(self):
        res = simplex_max([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
        np.testing.assert_allclose(res.x, [2, 6])
        assert res.objective == pytest.approx(36)

    def test_degenerate_terminates(self):
        # classic cycling example under the largest-coefficient rule
        c = [0.75, -150, 0.02, -6]
        A = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
        res = simplex_max(c, A, [0, 0, 1])
        assert res.objective == pytest.approx(0.05)

    def test_unbounded(self):
        with pytest.raises(SolverError):
            simplex_max([1, 0], [[0, 1]], [1])

    def test_negative_rhs(self):
        with pytest.raises(SolverError):
            simplex_max([1], [[1]], [-1])


class TestSolveLp:
    def test_single_edge(self):
        sol = solve_lp(BernoulliInstance(1, 1, (1.0,), ((0, 0, 5.0),)))
        assert sol.x[0, 0] == pytest.approx(1.0)
        assert sol.objective == pytest.approx(5.0)

    def test_rescale_example_unique_optimum(self):
        sol = solve_lp(gen_rescale_example(4))
        np.testing.assert_allclose(np.diag(sol.x[:, :4]), 0.75, atol=1e-12)
        np.testing.assert_allclose(sol.x[:, 4], 0.25, atol=1e-12)
        assert sol.objective == pytest.approx(1003.0)

    @pytest.mark.parametrize("n", [4, 10])
    def test_star_optimum(self, n):
        sol = solve_lp(gen_uniform_star(n))
        assert sol.objective == pytest.approx(1.0)
        assert sol.x[:, 0].sum() == pytest.approx(1.0)

    def test_star_uniform_solution_is_optimal(self):
        inst = gen_uniform_star(10)
        x = np.full((10, 1), 0.1)
        assert check_feasibility(x, inst).ok
        assert float(np.sum(x * inst.weight_matrix)) == pytest.approx(solve_lp(inst).objective)

    def test_against_vertex_enumeration(self):
        inst = BernoulliInstance(2, 2, (0.6, 0.8), ((0, 0, 1.0), (1, 0, 2.0), (0, 1, 3.0)))
        c, A, b, _ = build_lp(inst)
        assert solve_lp(inst).objective == pytest.approx(brute_force_vertices(c, A, b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_highs(self, seed):
        inst = gen_random(1 + seed % 7, 1 + (seed * 3) % 7, 0.6, seed=seed)
        ours = solve_lp(inst)
        ref = solve_lp(inst, highs_solver)
        assert ours.objective == pytest.approx(ref.objective, abs=1e-9)
        assert check_feasibility(ours.x, inst, 1e-9).ok

    @pytest.mark.parametrize("seed", range(25))
    def test_near_binary_basic_solutions(self, seed):
        inst = gen_random(1 + seed % 8, 1 + (seed * 5) % 8, 0.7, seed=100 + seed)
        sol = solve_lp(inst)
        assert sol.fractional_count() <= inst.T

    def test_no_edges(self):
        sol = solve_lp(BernoulliInstance(2, 2, (0.5, 0.5), ()))
        assert sol.objective == 0.0 and not sol.x.any()

    def test_solution_json(self):
        sol = solve_lp(BernoulliInstance(1, 1, (1.0,), ((0, 0, 5.0),)))
        assert sol.to_dict() == {"x": [{"i": 1, "t": 1, "v": 1.0}], "objective": 5.0}


class TestDerived:
    def test_y_and_r(self):
        inst = BernoulliInstance(1, 3, (0.5, 0.5, 1.0), ((0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)))
        x = np.array([[0.5, 0.25, 0.25]])
        sol = LpSolution(inst, x, 1.0)
        np.testing.assert_allclose(sol.y, [[0.0, 0.5, 0.75]])
        np.testing.assert_allclose(sol.r, [[1.0, 1.0, 1.0]])

    def test_zero_mass_rate_is_zero(self):
        inst = BernoulliInstance(1, 2, (0.0, 1.0), ((0, 0, 1.0), (0, 1, 1.0)))
        sol = LpSolution(inst, np.array([[0.0, 1.0]]), 1.0)
        np.testing.assert_array_equal(sol.r, [[0.0, 1.0]])


class TestFeasibility:
    def test_violation_listed(self):
        inst = BernoulliInstance(1, 1, (0.5,), ((0, 0, 1.0),))
        rep = check_feasibility(np.array([[0.6]]), inst)
        kinds = {v.constraint for v in rep.violations}
        assert {"arrival capacity", "offline availability"} <= kinds

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 10_000))
    def test_implied_degree_bound(self, n, T, seed):
        inst = gen_random(n, T, 0.8, seed=seed)
        rng = np.random.default_rng(seed)
        # random feasible point: scale a random proposal into the availability constraint step by step
        p = inst.p_array
        x = np.zeros((n, T))
        y = np.zeros(n)
        for t in range(T):
            raw = rng.random(n) * inst.edge_mask[:, t]
            x[:, t] = np.minimum(raw * p[t] * (1 - y), p[t] * (1 - y))
            if x[:, t].sum() > p[t]:
                x[:, t] *= p[t] / x[:, t].sum()
            y += x[:, t]
        rep = check_feasibility(x, inst, 1e-12)
        assert rep.ok, rep.violations
        cap = 1 - np.cumprod(1 - p)
        assert np.all(np.cumsum(x, axis=1) <= cap + 1e-12)


class TestGeneral:
    def test_single_type_embedding(self):
        inst = gen_random(3, 4, 0.8, seed=9)
        g = GeneralInstance.from_bernoulli(inst)
        a, b = solve_lp(inst), solve_lp_general(g)
        assert b.objective == pytest.approx(a.objective, abs=1e-9)
        np.testing.assert_allclose(b.x, a.x, atol=1e-9)

    def test_two_types_one_node(self):
        g = GeneralInstance(1, 1, (ArrivalType(0, 0, 0.5, ((0, 1.0),)), ArrivalType(0, 1, 0.5, ((0, 1.0),))))
        sol = solve_lp_general(g)
        assert sol.objective == pytest.approx(1.0)
        np.testing.assert_allclose(sol.x, [[0.5, 0.5]])
        assert check_feasibility_general(sol.x, g).ok

    def test_no_types(self):
        assert solve_lp_general(GeneralInstance(2, 2, ())).objective == 0.0

    def test_matches_highs(self):
        rng = np.random.default_rng(5)
        types = []
        for t in range(3):
            ps = rng.dirichlet(np.ones(3)) * 0.9
            for j in range(3):
                types.append(ArrivalType(t, j, ps[j], tuple((i, float(rng.random())) for i in range(3) if rng.random() < 0.7)))
        g = GeneralInstance(3, 3, tuple(types))
        assert solve_lp_general(g).objective == pytest.approx(solve_lp_general(g, highs_solver).objective, abs=1e-9)


class TestStatistics:
    def test_single_edge(self):
        inst = BernoulliInstance(1, 1, (0.7,), ((0, 0, 1.0),))
        st_ = lp_statistics(LpSolution(inst, np.array([[0.7]]), 0.7), 0.5)
        assert (st_.alpha, st_.S_le, st_.beta_le, st_.S_gt, st_.beta_gt) == pytest.approx((0, 1, 1, 0, 0))
        # tight case of the low-side bound
        assert st_.beta_le == pytest.approx(st_.S_le * (1 - 0.5 + st_.S_le / 2))

    def test_zero_mass(self):
        inst = BernoulliInstance(1, 1, (0.7,), ())
        st_ = lp_statistics(LpSolution(inst, np.zeros((1, 1)), 0.0), 0.5)
        assert st_.zero_mass and st_.alpha == 0

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 1.0])
    def test_identity(self, seed, theta):
        sol = solve_lp(gen_random(4, 6, 0.7, seed=seed))
        s = lp_statistics(sol, theta)
        assert s.alpha + s.beta_le + s.beta_gt == pytest.approx(s.S_le + s.S_gt, abs=1e-12)
        assert min(s.alpha, s.beta_le, s.beta_gt, s.S_le, s.S_gt) >= 0
