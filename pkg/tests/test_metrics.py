import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convgraph.errors import EmptyInput, EmptyReferenceSet, InsufficientSamples, WidthMismatch
from convgraph.metrics import PredictionRecord, evaluate, f1, soft_f1, welch_ttest

from oracles import f1_reference, welch_reference

bitvec = st.lists(st.integers(0, 1), min_size=6, max_size=6)

# act label order in fixture F1
CONFIRM_DT = "011100000"
CONFIRM_T = "010100000"


class TestF1:
    def test_identity(self):
        assert f1("0110", "0110") == 1.0

    def test_partial(self):
        # gold {confirm, confirm.date, confirm.time}, predicted {confirm, confirm.time}
        assert f1(CONFIRM_DT, CONFIRM_T) == pytest.approx(0.8, abs=1e-15)

    def test_disjoint(self):
        assert f1("1100", "0011") == 0.0

    def test_empty_conventions(self):
        assert f1("0000", "0000") == 1.0
        assert f1("0100", "0000") == 0.0
        assert f1("0000", "0100") == 0.0

    def test_width(self):
        with pytest.raises(WidthMismatch):
            f1("01", "011")

    @settings(max_examples=300)
    @given(bitvec, bitvec)
    def test_matches_reference_and_symmetric(self, a, b):
        assert f1(a, b) == pytest.approx(f1_reference(a, b), abs=1e-12)
        assert f1(a, b) == f1(b, a)


class TestSoftF1:
    def test_partial_reference_match(self):
        # labels: request, request.date, request.time
        Y = ["111", "101", "110"]
        assert soft_f1("101", Y) == 1.0

    def test_singleton(self):
        assert soft_f1(CONFIRM_T, [CONFIRM_DT]) == f1(CONFIRM_DT, CONFIRM_T)

    def test_empty(self):
        with pytest.raises(EmptyReferenceSet):
            soft_f1("01", [])

    def test_divergence_node(self, f1_graph, golden):
        Y = [a for a, _ in f1_graph.valid_actions(golden["divergence_node"])]
        assert soft_f1(CONFIRM_T, Y) == 1.0
        assert f1(CONFIRM_DT, CONFIRM_T) == pytest.approx(0.8)

    @settings(max_examples=200)
    @given(bitvec, st.lists(bitvec, min_size=1, max_size=5), bitvec, st.randoms())
    def test_invariances(self, y_hat, Y, extra, rnd):
        base = soft_f1(y_hat, Y)
        shuffled = list(Y)
        rnd.shuffle(shuffled)
        assert soft_f1(y_hat, shuffled) == base
        assert soft_f1(y_hat, Y + Y) == base
        assert soft_f1(y_hat, Y + [extra]) >= base
        assert base >= f1(Y[0], y_hat)


class TestEvaluate:
    def test_perfect(self, f1_graph, golden):
        node = golden["divergence_node"]
        recs = [PredictionRecord(node, CONFIRM_DT, CONFIRM_DT)] * 3
        report = evaluate(recs, f1_graph)
        assert (report.hard_f1, report.soft_f1, report.n_records) == (1.0, 1.0, 3)

    def test_f1_harness(self, f1_graph, golden):
        node = golden["divergence_node"]
        gold = [CONFIRM_DT, CONFIRM_T, CONFIRM_DT, CONFIRM_T]
        recs = [PredictionRecord(node, CONFIRM_DT, g) for g in gold]
        report = evaluate(recs, f1_graph)
        # per-record hard: 1, 0.8, 1, 0.8
        assert report.hard_f1 == pytest.approx(0.9, abs=1e-12)
        assert report.soft_f1 == 1.0
        assert report.unresolved == 0

    def test_unresolved_falls_back_to_gold(self, f1_graph):
        recs = [PredictionRecord("USER:11111111111", CONFIRM_T, CONFIRM_DT)]
        report = evaluate(recs, f1_graph)
        assert report.unresolved == 1
        assert report.soft_f1 == report.hard_f1 == pytest.approx(0.8)

    def test_empty(self, f1_graph):
        with pytest.raises(EmptyInput):
            evaluate([], f1_graph)

    def test_pure(self, f1_graph, golden):
        node = golden["divergence_node"]
        recs = [PredictionRecord(node, "000000011", CONFIRM_DT), PredictionRecord(node, CONFIRM_T, CONFIRM_T)]
        assert evaluate(recs, f1_graph) == evaluate(list(reversed(recs)), f1_graph)


class TestWelch:
    def test_identical(self):
        res = welch_ttest([1, 2, 3], [1, 2, 3])
        assert res.t == 0.0 and res.p == pytest.approx(1.0, abs=1e-12)

    def test_reference_case(self):
        # frozen from the arbitrary-precision oracle: welch_reference([1..5], [2..6])
        res = welch_ttest([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert res.t == pytest.approx(-1.0, abs=1e-12)
        assert res.df == pytest.approx(8.0, abs=1e-12)
        assert res.p == pytest.approx(0.3465935070873343, abs=1e-9)
        assert not res.significant

    def test_unequal_variances(self):
        a = [0.61, 0.63, 0.65, 0.6, 0.66]
        b = [0.7, 0.74, 0.69, 0.77, 0.72, 0.75]
        res = welch_ttest(a, b)
        t, df, p = welch_reference(a, b)
        assert res.t == pytest.approx(t, abs=1e-9)
        assert res.df == pytest.approx(df, abs=1e-9)
        assert res.p == pytest.approx(p, abs=1e-9)
        assert res.significant

    def test_separated_clusters(self):
        assert welch_ttest([0.0, 0.1, -0.1], [100.0, 100.1, 99.9]).significant

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = rng.normal(0, 1, 6), rng.normal(0.5, 2, 8)
            ab, ba = welch_ttest(a, b), welch_ttest(b, a)
            assert ab.t == -ba.t and ab.p == ba.p

    def test_errors(self):
        with pytest.raises(InsufficientSamples):
            welch_ttest([1.0], [1.0, 2.0])
        assert welch_ttest([2, 2, 2], [2, 2]).p == 1.0
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            res = welch_ttest([1, 1, 1], [2, 2, 2])
        assert res.p == 0.0 and math.isinf(res.t)
