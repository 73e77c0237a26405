import math

import numpy as np
import pytest

from convgraph.dialogue import build_vocabulary
from convgraph.errors import ConfigMismatch, EmptyReferenceSet, ShapeMismatch, WidthMismatch
from convgraph.graph import build_graph
from convgraph.instances import Instance, InstanceSet, extract_instances
from convgraph.policy import (
    Loss,
    PolicyModel,
    TrainConfig,
    bce_loss,
    dataset_loss,
    forward,
    grad_check,
    predict,
    sbce_loss,
    train,
    _batch_loss_and_grads,
    _sorted_refs,
)
from convgraph.synthetic import conflict_corpus

from oracles import bce_reference


def zero_model(n=1, width=3, n_act=2, hidden=4):
    m = PolicyModel.init(n, width, n_act, hidden, seed=0)
    for p in m.params().values():
        p[...] = 0.0
    return m


def unit_model():
    return PolicyModel(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1), n=1)


class TestForward:
    def test_zero_model(self):
        assert forward(zero_model(), ["101"]).tolist() == [0.5, 0.5]

    def test_unit_model(self):
        # sigmoid(1) = 1 / (1 + e^-1)
        assert forward(unit_model(), ["1"])[0] == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)
        assert forward(unit_model(), ["0"])[0] == 0.5

    def test_shape(self):
        with pytest.raises(ShapeMismatch):
            forward(zero_model(), ["10"])

    def test_predict_threshold(self):
        m = zero_model()
        assert predict(m, ["101"], 0.5).tolist() == [0, 0]
        assert predict(m, ["101"], 0.49).tolist() == [1, 1]
        assert predict(unit_model(), ["1"], 0.5).tolist() == [1]


class TestLosses:
    def test_bce_hand_values(self):
        assert bce_loss([1, 0, 1], [0.5, 0.5, 0.5]) == pytest.approx(3 * math.log(2), abs=1e-12)
        assert bce_loss([1], [0.1]) == pytest.approx(-math.log(0.1), abs=1e-12)

    def test_bce_perfect(self):
        assert 0 <= bce_loss([1, 0, 1], [1.0, 0.0, 1.0]) <= 3 * 1e-11

    def test_bce_width(self):
        with pytest.raises(WidthMismatch):
            bce_loss([1, 0], [0.5])

    def test_bce_never_nan(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            y = rng.integers(0, 2, 5)
            p = rng.choice([0.0, 1.0, 0.3], 5)
            assert math.isfinite(bce_loss(y, p))

    def test_bce_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            y = rng.integers(0, 2, 7)
            p = rng.uniform(0, 1, 7)
            assert bce_loss(y, p) == pytest.approx(bce_reference(y, p), rel=1e-12)

    def test_sbce_example(self):
        # BCE vs (1,0,0) = -3 ln 0.9 ; vs (1,1,0) = -2 ln 0.9 - ln 0.1
        loss, chosen = sbce_loss([0.9, 0.1, 0.1], ["110", "100"])
        assert loss == pytest.approx(-3 * math.log(0.9), abs=1e-12)
        assert loss == pytest.approx(0.3160815, abs=1e-6)
        assert chosen == 1
        assert bce_loss([1, 1, 0], [0.9, 0.1, 0.1]) == pytest.approx(2.5133061, abs=1e-6)

    def test_sbce_singleton_and_ties(self):
        p = [0.3, 0.6]
        assert sbce_loss(p, ["10"])[0] == bce_loss([1, 0], p)
        # p = (0.5, 0.5) is equidistant from (1,0) and (0,1): lowest bitstring wins
        assert sbce_loss([0.5, 0.5], ["10", "01"]) == (pytest.approx(2 * math.log(2)), 1)
        with pytest.raises(EmptyReferenceSet):
            sbce_loss(p, [])


class TestGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_bce(self, seed):
        rng = np.random.default_rng(seed)
        m = PolicyModel.init(2, 4, 3, 5, seed=seed)
        x = rng.integers(0, 2, 8)
        assert grad_check(m, x, [rng.integers(0, 2, 3)], "bce") < 1e-5

    def test_sbce_singleton_equals_bce(self):
        m = PolicyModel.init(2, 4, 3, 5, seed=3)
        X = np.array([[1, 0, 1, 1, 0, 0, 1, 0]], dtype=float)
        refs = [_sorted_refs(["101"])]
        _, g1, _ = _batch_loss_and_grads(m, X, refs)
        _, g2, _ = _batch_loss_and_grads(m, X, [_sorted_refs(["101"])])
        for k in g1:
            assert np.array_equal(g1[k], g2[k])

    def test_sbce_equals_bce_vs_chosen(self):
        m = PolicyModel.init(2, 4, 3, 5, seed=4)
        X = np.array([[1, 0, 1, 1, 0, 0, 1, 0]], dtype=float)
        refs = ["101", "010", "111"]
        p = forward(m, X[0])
        _, chosen = sbce_loss(p, refs)
        _, g_soft, _ = _batch_loss_and_grads(m, X, [_sorted_refs(refs)])
        _, g_hard, _ = _batch_loss_and_grads(m, X, [_sorted_refs([refs[chosen]])])
        for k in g_soft:
            assert np.array_equal(g_soft[k], g_hard[k])
        assert grad_check(m, X[0], refs, "sbce") < 1e-5

    def test_epsilon_range(self):
        with pytest.raises(ConfigMismatch):
            grad_check(zero_model(), ["101"], ["10"], "bce", epsilon=0.1)


def one_instance_set():
    return InstanceSet([Instance(("1011",), "101")], 1)


class TestTrain:
    def test_single_instance_converges(self):
        s = one_instance_set()
        cfg = TrainConfig(batch_size=1, learning_rate=0.5, max_epochs=500, patience=500, hidden=8)
        model, log = train(s, None, None, cfg)
        losses = [e["train_loss"] for e in log.epochs]
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert dataset_loss(model, s) < 1e-3

    def test_deterministic(self, f1_corpus, f1_vocab, f1_graph):
        s = extract_instances(f1_corpus, f1_vocab, 4)
        cfg = TrainConfig(loss="sbce", hidden=16, max_epochs=20, seed=5)
        m1, log1 = train(s, s, f1_graph, cfg)
        m2, log2 = train(s, s, f1_graph, cfg)
        assert log1.dumps() == log2.dumps()
        assert m1.dumps() == m2.dumps()

    def test_early_stopping(self, f1_corpus, f1_vocab):
        s = extract_instances(f1_corpus, f1_vocab, 4)
        model, log = train(s, s, None, TrainConfig(hidden=8, patience=2, max_epochs=200))
        assert log.stopped_early
        assert len(log.epochs) < 200
        best = max(e["dev_hard_f1"] for e in log.epochs)
        assert log.best_dev_hard_f1 == best
        assert log.epochs[log.best_epoch - 1]["dev_hard_f1"] == best

    def test_conflicting_labels(self):
        corpus = conflict_corpus()
        vocab = build_vocabulary(corpus)
        g = build_graph(corpus, vocab)
        s = extract_instances(corpus, vocab, 4)
        common = dict(hidden=32, learning_rate=0.5, max_epochs=400, patience=400)
        soft, _ = train(s, s, g, TrainConfig(loss="sbce", **common))
        hard, hard_log = train(s, s, g, TrainConfig(loss="bce", **common))
        assert dataset_loss(soft, s, g, "sbce") < 0.01
        bound = 2 * math.log(2)
        assert dataset_loss(hard, s) > bound
        assert all(e["train_loss"] > bound for e in hard_log.epochs)

    def test_config_validation(self):
        with pytest.raises(ConfigMismatch):
            TrainConfig(patience=0)
        with pytest.raises(ConfigMismatch):
            TrainConfig(threshold=1.0)
        with pytest.raises(ConfigMismatch):
            train(one_instance_set(), None, None, TrainConfig(loss=Loss.SBCE))


def test_model_round_trip(tmp_path):
    m = PolicyModel.init(3, 5, 4, 7, seed=9)
    path = tmp_path / "m.json"
    m.save(path)
    again = PolicyModel.load(path)
    assert again == m
    x = np.random.default_rng(0).integers(0, 2, 15)
    assert np.array_equal(forward(again, x), forward(m, x))
    assert again.dumps() == path.read_text()
