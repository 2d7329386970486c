import math

import numpy as np
import pytest

from dcvdn.classifier import (ClassifierModel, LstmParams, evaluate, forward,
                              load_model, loss_and_grads, lstm_forward,
                              metrics_from_predictions, save_model,
                              stratified_split, train)
from dcvdn.dccae import FusedRepresentation
from dcvdn.errors import EmptyInput, InvalidInput
from dcvdn.numkit import SeededRng, grad_check


def random_lstm(seed, d=3, h=4):
    return LstmParams.create(d, h, SeededRng(seed))


class TestLstmForward:
    def test_all_zero(self):
        params = LstmParams(w=np.zeros((8, 3)), r=np.zeros((8, 2)),
                            b=np.zeros(8), forget_bias=0.0)
        h = lstm_forward(params, np.zeros((4, 3)))
        assert np.array_equal(h, np.zeros(2))

    def test_single_step_matches_scalar_math(self):
        # K=1, d=1, hidden=2 worked through with plain floats
        w = np.array([[0.1], [0.2], [0.3], [0.4], [0.5], [0.6], [0.7], [0.8]])
        r = np.zeros((8, 2))
        b = np.array([0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08])
        params = LstmParams(w=w, r=r, b=b, forget_bias=0.1)
        x = 0.5
        got = lstm_forward(params, np.array([[x]]))

        def sig(v):
            return 1.0 / (1.0 + math.exp(-v))

        expected = []
        for unit in range(2):
            i = sig(w[unit, 0] * x + b[unit])
            o = sig(w[4 + unit, 0] * x + b[4 + unit])
            g = math.tanh(w[6 + unit, 0] * x + b[6 + unit])
            # zero initial cell: forget gate multiplies nothing
            c = i * g
            expected.append(o * math.tanh(c))
        assert np.abs(got - np.array(expected)).max() < 1e-12

    def test_hidden_state_bounded(self):
        rng = SeededRng(3)
        params = random_lstm(1, d=5, h=6)
        seq = rng.normal(scale=3.0, size=(10, 5))
        h = lstm_forward(params, seq)
        assert np.isfinite(h).all()
        assert np.abs(h).max() < 1.0

    def test_identical_rows_finite(self):
        params = random_lstm(2, d=4, h=3)
        seq = np.tile([1.0, -2.0, 0.5, 3.0], (8, 1))
        h = lstm_forward(params, seq)
        assert np.isfinite(h).all()
        assert np.abs(h).max() <= 1.0

    def test_empty_sequence_rejected(self):
        with pytest.raises(InvalidInput):
            lstm_forward(random_lstm(0), np.zeros((0, 3)))


def make_fused(rng, video_id, k=5, dim=6, label=None):
    return FusedRepresentation(
        video_id=video_id,
        textual_out=rng.normal(size=(k, dim)),
        visual_out=rng.normal(size=(k, dim)),
        label=label)


class TestForward:
    def test_zero_final_layer_uniform(self):
        model = ClassifierModel.create(6, 6, SeededRng(1), hidden=4)
        model.fc2_w[...] = 0.0
        model.fc2_b[...] = 0.0
        rng = np.random.default_rng(2)
        pred = forward(model, make_fused(rng, "v0"))
        assert np.allclose(pred.probs, 1.0 / 7)

    def test_probs_normalized_on_seeded_inputs(self):
        model = ClassifierModel.create(6, 6, SeededRng(2), hidden=4)
        rng = np.random.default_rng(3)
        for i in range(100):
            pred = forward(model, make_fused(rng, f"v{i}"))
            assert (pred.probs >= 0).all()
            assert abs(pred.probs.sum() - 1.0) < 1e-9

    def test_argmax_invariant_to_uniform_logit_shift(self):
        model = ClassifierModel.create(6, 6, SeededRng(3), hidden=4)
        rng = np.random.default_rng(4)
        fused = [make_fused(rng, f"v{i}") for i in range(20)]
        before = [forward(model, f).label for f in fused]
        model.fc2_b += 123.45
        after = [forward(model, f).label for f in fused]
        assert before == after


class TestGradients:
    def test_full_backprop_matches_finite_differences(self):
        # toy size: K=3, d=5, hidden=4, 6 samples
        model = ClassifierModel.create(5, 5, SeededRng(5), hidden=4)
        rng = np.random.default_rng(6)
        xv = rng.normal(size=(6, 3, 5))
        xt = rng.normal(size=(6, 3, 5))
        y = np.array([0, 1, 2, 3, 4, 5])
        params = model.params()
        for block_idx in range(len(params)):
            def f(p, i=block_idx):
                saved = params[i].copy()
                params[i][...] = p
                loss, grads = loss_and_grads(model, xv, xt, y)
                params[i][...] = saved
                return loss, grads[i]

            err = grad_check(f, params[block_idx], eps=1e-5)
            assert err < 1e-4, f"block {block_idx}: {err}"


def planted_fused(seed, n_videos=70, k=5, dim=8, spread=0.4):
    """Fused sequences whose class identity is planted as a mean shift."""
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(7, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    fused, labels = [], []
    for i in range(n_videos):
        cls = i % 7
        fused.append(FusedRepresentation(
            video_id=f"v{i:03d}",
            textual_out=spread * rng.normal(size=(k, dim)) + directions[cls],
            visual_out=spread * rng.normal(size=(k, dim)) + directions[(cls * 3) % 7],
            label=cls))
        labels.append(cls)
    return fused, labels


class TestTrain:
    def test_planted_signal_high_train_accuracy(self):
        fused, labels = planted_fused(seed=7)
        model = ClassifierModel.create(8, 8, SeededRng(8), hidden=16)
        model, history = train(model, fused, labels, SeededRng(9), epochs=200,
                               patience=200)
        train_ids = set(history.split["train"])
        subset = [(f, l) for f, l in zip(fused, labels) if f.video_id in train_ids]
        metrics = evaluate(model, [f for f, _ in subset], [l for _, l in subset])
        assert metrics.accuracy >= 0.95

    def test_permuted_labels_no_signal(self):
        fused, labels = planted_fused(seed=10)
        perm = np.random.default_rng(11).permutation(len(labels))
        shuffled = [labels[i] for i in perm]
        model = ClassifierModel.create(8, 8, SeededRng(12), hidden=16)
        model, history = train(model, fused, shuffled, SeededRng(13), epochs=60)
        assert max(history.val_accuracy) <= 0.35

    def test_deterministic(self):
        fused, labels = planted_fused(seed=14, n_videos=21)
        runs = []
        for _ in range(2):
            model = ClassifierModel.create(8, 8, SeededRng(15), hidden=8)
            model, history = train(model, fused, labels, SeededRng(16), epochs=10,
                                   patience=20)
            runs.append((model.clone_params(), history.train_loss))
        assert runs[0][1] == runs[1][1]
        for a, b in zip(runs[0][0], runs[1][0]):
            assert np.array_equal(a, b)

    def test_early_stopping_and_best_checkpoint(self):
        # permuted labels: validation stops improving, so patience must fire
        fused, labels = planted_fused(seed=17, n_videos=35)
        perm = np.random.default_rng(20).permutation(len(labels))
        shuffled = [labels[i] for i in perm]
        model = ClassifierModel.create(8, 8, SeededRng(18), hidden=8)
        model, history = train(model, fused, shuffled, SeededRng(19), epochs=500,
                               patience=3)
        assert len(history.train_loss) < 500
        assert history.best_epoch >= 0
        best = history.val_accuracy[history.best_epoch]
        assert best == max(history.val_accuracy)
        ties = [i for i, a in enumerate(history.val_accuracy) if a == best]
        assert history.val_loss[history.best_epoch] == min(
            history.val_loss[i] for i in ties)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            train(ClassifierModel.create(4, 4, SeededRng(0), hidden=4), [], [],
                  SeededRng(1))


class TestStratifiedSplit:
    def test_balanced_70(self):
        labels = [i % 7 for i in range(70)]
        train_idx, val_idx, test_idx = stratified_split(labels, SeededRng(2))
        assert (len(train_idx), len(val_idx), len(test_idx)) == (56, 7, 7)
        assert {labels[i] for i in train_idx} == set(range(7))
        assert not (set(train_idx) & set(val_idx)) and not (set(val_idx) & set(test_idx))
        assert sorted(train_idx + val_idx + test_idx) == list(range(70))

    def test_minimum_size_14(self):
        labels = [i % 7 for i in range(14)]
        train_idx, val_idx, test_idx = stratified_split(labels, SeededRng(3))
        assert len(val_idx) >= 1 and len(test_idx) >= 1
        assert {labels[i] for i in train_idx} == set(range(7))

    def test_deterministic(self):
        labels = [i % 7 for i in range(70)]
        assert stratified_split(labels, SeededRng(4)) == stratified_split(
            labels, SeededRng(4))


class TestMetrics:
    def test_all_correct(self):
        m = metrics_from_predictions([0, 1, 2, 3, 4, 5, 6], [0, 1, 2, 3, 4, 5, 6])
        assert m.accuracy == 1.0
        assert m.precision == [1.0] * 7

    def test_hand_counted_two_class_example(self):
        # confusion [[1,1],[0,2]] over two active classes
        m = metrics_from_predictions(pred=[0, 1, 1, 1], truth=[0, 0, 1, 1])
        assert m.accuracy == 0.75
        assert m.precision[0] == 1.0
        assert abs(m.precision[1] - 2.0 / 3.0) < 1e-12
        assert m.confusion[0, 0] == 1 and m.confusion[0, 1] == 1
        assert m.confusion[1, 0] == 0 and m.confusion[1, 1] == 2

    def test_single_class_flags_undefined(self):
        m = metrics_from_predictions([3, 3, 3], [3, 3, 3])
        assert m.accuracy == 1.0
        assert m.precision_defined[3] is True
        assert all(not m.precision_defined[c] for c in range(7) if c != 3)
        assert all(m.precision[c] == 0.0 for c in range(7) if c != 3)

    def test_accuracy_equals_trace_over_sum(self):
        rng = np.random.default_rng(5)
        pred = rng.integers(0, 7, size=60).tolist()
        truth = rng.integers(0, 7, size=60).tolist()
        m = metrics_from_predictions(pred, truth)
        assert m.accuracy == np.trace(m.confusion) / m.confusion.sum()


class TestSaveLoad:
    def test_round_trip_bit_exact(self, tmp_path):
        model = ClassifierModel.create(6, 5, SeededRng(21), hidden=4)
        path = tmp_path / "classifier_model.bin"
        save_model(path, model)
        loaded = load_model(path)
        for a, b in zip(model.params(), loaded.params()):
            assert np.array_equal(a, b)
        assert loaded.lstm_v.forget_bias == model.lstm_v.forget_bias
