import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmatch.instance import (ArrivalType, BernoulliInstance, GeneralInstance, InstanceError,
                                 Stochastic3SatFormula, build_from_3sat, gen_random, gen_rescale_example,
                                 gen_uniform_star, offline_labels_3sat, read_json, validate, write_json)


class TestValidate:
    def test_well_formed(self):
        inst = BernoulliInstance(2, 2, (0.5, 1.0), ((0, 0, 1.0), (1, 1, 2.0)))
        assert validate(inst) == []

    def test_probability_out_of_range(self):
        inst = BernoulliInstance(2, 2, (1.5, 1.0), ((0, 0, 1.0),))
        msgs = validate(inst)
        assert len(msgs) == 1 and "arrival probability out of range" in msgs[0]

    def test_vertex_weight_mismatch(self):
        inst = BernoulliInstance(2, 1, (1.0,), ((0, 0, 1.0), (1, 0, 3.0)), (1.0, 2.0))
        msgs = validate(inst)
        assert len(msgs) == 1 and "differs from vertex weight" in msgs[0]

    def test_negative_weight_and_index(self):
        inst = BernoulliInstance(1, 1, (1.0,), ((0, 0, -1.0), (3, 0, 1.0)))
        msgs = validate(inst)
        assert any("negative weight" in m for m in msgs)
        assert any("out of range" in m for m in msgs)

    def test_general_mass_above_one(self):
        inst = GeneralInstance(1, 1, (ArrivalType(0, 0, 0.6), ArrivalType(0, 1, 0.6)))
        assert any("sum to" in m for m in validate(inst))


class TestGenerators:
    def test_rescale_example_n2(self):
        inst = gen_rescale_example(2)
        assert inst.p == (0.5, 0.5, 1.0)
        assert inst.weights == {(0, 0): 1.0, (1, 1): 1.0, (0, 2): 1000.0, (1, 2): 1000.0}

    def test_rescale_example_n1(self):
        assert gen_rescale_example(1).p == (0.0, 1.0)

    def test_rescale_example_n10(self):
        inst = gen_rescale_example(10)
        assert len(inst.edges) == 20
        np.testing.assert_allclose(inst.p[:10], 0.9)
        assert inst.p[10] == 1.0

    def test_rescale_rejects_zero(self):
        with pytest.raises(InstanceError):
            gen_rescale_example(0)

    @pytest.mark.parametrize("n", [1, 3, 10])
    def test_uniform_star(self, n):
        inst = gen_uniform_star(n)
        assert inst.T == 1 and inst.p == (1.0,)
        assert inst.weights == {(i, 0): 1.0 for i in range(n)}

    def test_random_density_zero(self):
        assert gen_random(4, 4, density=0.0, seed=3).edges == ()

    def test_random_density_one(self):
        a = gen_random(2, 2, density=1.0, seed=7)
        assert len(a.edges) == 4
        assert a == gen_random(2, 2, density=1.0, seed=7)

    def test_random_deterministic_serialization(self):
        assert write_json(gen_random(6, 6, 0.5, seed=1)) == write_json(gen_random(6, 6, 0.5, seed=1))

    def test_random_p_in_unit_interval(self):
        inst = gen_random(3, 50, seed=2)
        assert all(0 < p <= 1 for p in inst.p)

    def test_random_vertex_weighted_is_valid(self):
        inst = gen_random(5, 5, 0.7, (1.0, 3.0), vertex_weighted=True, seed=4)
        assert inst.vertex_weighted and validate(inst) == []

    @pytest.mark.parametrize("kwargs", [dict(n=0, T=1), dict(n=1, T=1, density=1.5),
                                        dict(n=1, T=1, weight_range=(2.0, 1.0))])
    def test_random_rejects_empty_ranges(self, kwargs):
        with pytest.raises(InstanceError):
            gen_random(**kwargs)


class TestReduction:
    def test_clause_neighbors(self):
        n = 5
        f = Stochastic3SatFormula(n, ((-1, 3, 5),))
        inst = build_from_3sat(f, 0.05)
        labels = offline_labels_3sat(f)
        clause_t = n
        nbrs = {labels[i] for i, t, _ in inst.edges if t == clause_t}
        assert nbrs == {("T", 1), ("F", 3), ("F", 5)}

    def test_single_odd_variable(self):
        inst = build_from_3sat(Stochastic3SatFormula(1, ()), 0.05)
        assert inst.n == 2 and inst.T == 1 and inst.p == (1.0,)

    def test_structure(self):
        f = Stochastic3SatFormula(4, ((1, 2), (-3, 4), (2,)))
        inst = build_from_3sat(f, 0.1)
        assert inst.n == 2 * 2 + 2
        assert inst.p == (1.0, 0.5, 1.0, 0.5, 0.1, 0.1, 0.1)
        assert all(w == 1.0 for _, _, w in inst.edges)
        deg = np.bincount([t for _, t, _ in inst.edges], minlength=inst.T)
        assert list(deg[:4]) == [2, 1, 2, 1]
        assert all(d <= 3 for d in deg[4:])

    def test_negated_even_variable_rejected(self):
        with pytest.raises(InstanceError, match="negated"):
            build_from_3sat(Stochastic3SatFormula(2, ((-2,),)), 0.05)

    def test_occurrence_bound(self):
        f = Stochastic3SatFormula(1, ((1,), (1,), (-1,)), k=2)
        assert any("appears in 3 clauses" in m for m in f.validate())


class TestJson:
    def test_round_trip_examples(self):
        for inst in (gen_rescale_example(3), gen_uniform_star(4), gen_random(3, 4, 0.5, seed=0),
                     gen_random(3, 3, 0.9, vertex_weighted=True, seed=1)):
            assert read_json(write_json(inst)) == inst

    def test_round_trip_general(self):
        g = GeneralInstance(2, 2, (ArrivalType(0, 0, 0.3, ((0, 1.0),)), ArrivalType(0, 1, 0.5, ((1, 2.0),)),
                                   ArrivalType(1, 0, 1.0, ((0, 4.0), (1, 1.0)))))
        assert read_json(write_json(g)) == g

    def test_one_based_indices(self):
        doc = json.loads(write_json(BernoulliInstance(1, 1, (1.0,), ((0, 0, 2.0),))))
        assert doc["edges"] == [{"i": 1, "t": 1, "w": 2.0}]

    def test_missing_field(self):
        doc = {"kind": "bernoulli", "n": 1, "T": 1, "edges": []}
        with pytest.raises(InstanceError, match="'p'"):
            read_json(json.dumps(doc))

    def test_unknown_field(self):
        doc = {"kind": "bernoulli", "n": 1, "T": 1, "p": [1], "edges": [], "colour": 3}
        with pytest.raises(InstanceError, match="unknown field"):
            read_json(json.dumps(doc))

    def test_general_mass_rejected_on_read(self):
        doc = {"kind": "general", "n": 1, "T": 1,
               "types": [{"t": 1, "j": 1, "p": 0.6, "edges": []}, {"t": 1, "j": 2, "p": 0.6, "edges": []}]}
        with pytest.raises(InstanceError, match="sum to"):
            read_json(json.dumps(doc))

    def test_malformed(self):
        with pytest.raises(InstanceError, match="malformed"):
            read_json("{nope")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 1), st.integers(0, 10_000), st.booleans())
    def test_round_trip_property(self, n, T, density, seed, vw):
        inst = gen_random(n, T, density, (0.0, 5.0), vw, seed)
        assert read_json(write_json(inst)) == inst
