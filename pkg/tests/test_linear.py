import math

import numpy as np
import pytest

from poolforge.data import generate_blobs
from poolforge.linear import (
    ProbeTrainConfig,
    SoftmaxProbe,
    SvmOvrModel,
    _binary_svm_dual_cd,
    _xent_and_dlogits,
    predict_proba,
    svm_decision_values,
    train_encoder_supervised,
    train_probe,
    train_svm_ovr,
)
from poolforge.mlp import embed, init_layers
from poolforge.siamese import NetConfig
from poolforge.util import seeded_rng


def manual_probe(weights, bias):
    weights = np.asarray(weights, dtype=np.float64)
    return SoftmaxProbe(weights=weights, bias=np.asarray(bias, dtype=np.float64),
                        num_classes=weights.shape[0], dim=weights.shape[1])


class TestPredictProba:
    def test_zero_logits_are_uniform(self):
        probe = manual_probe(np.zeros((4, 3)), np.zeros(4))
        proba = predict_proba(probe, np.random.default_rng(0).normal(size=(6, 3)))
        assert np.allclose(proba, 0.25, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        weights = rng.normal(size=(3, 4))
        x = rng.normal(size=(5, 4))
        base = predict_proba(manual_probe(weights, np.zeros(3)), x)
        shifted = predict_proba(manual_probe(weights, np.full(3, 13.7)), x)
        assert np.allclose(base, shifted, atol=1e-12)

    def test_two_class_logit_gap(self):
        # independent direct evaluation of 1 / (1 + e^-2)
        probe = manual_probe([[2.0], [0.0]], [0.0, 0.0])
        proba = predict_proba(probe, [[1.0]])
        expect = 1.0 / (1.0 + math.exp(-2.0))
        assert proba[0, 0] == pytest.approx(expect, abs=1e-12)
        assert proba[0] == pytest.approx([0.8808, 0.1192], abs=1e-4)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            probe = manual_probe(rng.normal(scale=5, size=(5, 3)), rng.normal(size=5))
            proba = predict_proba(probe, rng.normal(scale=10, size=(8, 3)))
            assert (proba >= 0).all()
            assert np.abs(proba.sum(axis=1) - 1.0).max() <= 1e-9

    def test_dimension_mismatch(self):
        probe = manual_probe(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError, match="dim"):
            predict_proba(probe, np.zeros((4, 5)))


class TestTrainProbe:
    def test_single_sample_overfits(self):
        x = np.array([[0.3, -1.2, 0.7]])
        probe = train_probe(x, [1], ProbeTrainConfig(seed=3), num_classes=3)
        assert predict_proba(probe, x)[0, 1] > 0.9

    def test_separable_blobs_match_convex_oracle(self):
        from scipy.optimize import minimize

        train, _ = generate_blobs(2, 50, 2, sigma=0.05, seed=4)
        x = train.features.astype(np.float64)
        y = train.labels

        def neg_log_lik(theta):
            w = theta[:4].reshape(2, 2)
            b = theta[4:]
            logits = x @ w.T + b
            m = logits.max(axis=1, keepdims=True)
            lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
            return (lse - logits[np.arange(len(y)), y]).mean()

        res = minimize(neg_log_lik, np.zeros(6), method="L-BFGS-B")
        ow = res.x[:4].reshape(2, 2)
        ob = res.x[4:]
        oracle_acc = (np.argmax(x @ ow.T + ob, axis=1) == y).mean()
        assert oracle_acc >= 0.99

        probe = train_probe(x, y, ProbeTrainConfig(seed=0), num_classes=2)
        ours = (probe.predict(x) == y).mean()
        assert ours >= 0.99

    def test_zero_epochs_disallowed(self):
        with pytest.raises(ValueError):
            ProbeTrainConfig(epochs=0)

    def test_one_epoch_is_finite(self):
        rng = np.random.default_rng(5)
        probe = train_probe(rng.normal(size=(10, 4)), rng.integers(0, 3, 10),
                            ProbeTrainConfig(epochs=1, seed=1), num_classes=3)
        assert np.isfinite(probe.weights).all() and np.isfinite(probe.bias).all()
        assert np.isfinite(probe.epoch_losses).all()

    def test_loss_decreases(self):
        train, _ = generate_blobs(3, 30, 3, sigma=0.2, seed=6)
        probe = train_probe(train.features, train.labels,
                            ProbeTrainConfig(seed=2), num_classes=3)
        assert probe.epoch_losses[-1] <= probe.epoch_losses[0]
        assert np.isfinite(probe.epoch_losses).all()

    def test_zero_lr_keeps_initialization(self):
        rng = np.random.default_rng(7)
        x, y = rng.normal(size=(12, 5)), rng.integers(0, 3, 12)
        cfg = ProbeTrainConfig(base_lr=0.0, seed=9)
        probe = train_probe(x, y, cfg, num_classes=3)
        init = init_layers([5, 3], seeded_rng(9, "clf-init"))[0]
        assert np.array_equal(probe.weights, init.weights)
        assert np.array_equal(probe.bias, init.bias)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        x, y = rng.normal(size=(20, 4)), rng.integers(0, 4, 20)
        a = train_probe(x, y, ProbeTrainConfig(seed=5), num_classes=4)
        b = train_probe(x, y, ProbeTrainConfig(seed=5), num_classes=4)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            x = rng.normal(size=(7, 3))
            y = rng.integers(0, 4, 7)
            weights = rng.normal(size=(4, 3))
            bias = rng.normal(size=4)

            def loss_at(w_, b_):
                logits = x @ w_.T + b_
                m = logits.max(axis=1, keepdims=True)
                lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
                return (lse - logits[np.arange(7), y]).mean()

            _, dlogits = _xent_and_dlogits(x @ weights.T + bias, y)
            analytic_w = dlogits.T @ x
            analytic_b = dlogits.sum(axis=0)
            h = 1e-5
            for grad, point, setter in ((analytic_w, weights, True),
                                        (analytic_b, bias, False)):
                it = np.nditer(point, flags=["multi_index"])
                for _val in it:
                    idx = it.multi_index
                    orig = point[idx]
                    point[idx] = orig + h
                    up = loss_at(weights, bias)
                    point[idx] = orig - h
                    down = loss_at(weights, bias)
                    point[idx] = orig
                    fd = (up - down) / (2 * h)
                    a = grad[idx]
                    assert abs(a - fd) <= 1e-6 * max(1.0, abs(a), abs(fd))


class TestSvm:
    def test_two_point_analytic_solution(self):
        x = np.array([[-1.0], [1.0]])
        y = np.array([0, 1])
        model = train_svm_ovr(x, y, reg_c=5.0)
        assert model.weights[1, 0] == pytest.approx(1.0, abs=1e-3)
        assert model.biases[1] == pytest.approx(0.0, abs=1e-3)
        values = svm_decision_values(model, x)[:, 1]
        assert values == pytest.approx([-1.0, 1.0], abs=2e-3)

    def test_two_point_against_qp_oracle(self):
        import cvxopt

        cvxopt.solvers.options["show_progress"] = False
        x = np.array([[-1.0], [1.0]])
        target = np.array([-1.0, 1.0])
        x_aug = np.hstack([x, np.ones((2, 1))])
        q_mat = (target[:, None] * x_aug) @ (target[:, None] * x_aug).T
        reg_c = 5.0
        sol = cvxopt.solvers.qp(
            cvxopt.matrix(q_mat), cvxopt.matrix(-np.ones(2)),
            cvxopt.matrix(np.vstack([-np.eye(2), np.eye(2)])),
            cvxopt.matrix(np.concatenate([np.zeros(2), np.full(2, reg_c)])))
        alpha = np.array(sol["x"]).ravel()
        w_oracle = (alpha * target) @ x_aug
        model = train_svm_ovr(x, np.array([0, 1]), reg_c=reg_c)
        assert model.weights[1, 0] == pytest.approx(w_oracle[0], abs=1e-3)
        assert model.biases[1] == pytest.approx(w_oracle[1], abs=1e-3)

    def test_duplication_invariance(self):
        train, _ = generate_blobs(2, 20, 2, sigma=0.05, seed=11)
        x, y = train.features.astype(np.float64), train.labels
        base = train_svm_ovr(x, y, reg_c=5.0)
        doubled = train_svm_ovr(np.vstack([x, x]), np.concatenate([y, y]), reg_c=5.0)
        grid = np.random.default_rng(0).normal(size=(20, 2))
        assert np.allclose(svm_decision_values(base, grid),
                           svm_decision_values(doubled, grid), atol=1e-6)

    def test_three_class_blobs_own_class_margin(self):
        from sklearn.svm import LinearSVC

        train, _ = generate_blobs(3, 40, 2, sigma=0.05, seed=12)
        x, y = train.features.astype(np.float64), train.labels
        model = train_svm_ovr(x, y, reg_c=5.0)
        values = svm_decision_values(model, x)
        own = values[np.arange(len(y)), y]
        assert (own > 0).mean() >= 0.99
        # independent solver agrees on the separability structure
        oracle = LinearSVC(C=5.0, loss="hinge", tol=1e-8, max_iter=200_000).fit(x, y)
        oracle_own = oracle.decision_function(x)[np.arange(len(y)), y]
        assert (oracle_own > 0).mean() >= 0.99
        assert (oracle.predict(x) == np.argmax(values, axis=1)).mean() >= 0.99

    def test_margins_satisfied_on_separable_data(self):
        train, _ = generate_blobs(2, 30, 2, sigma=0.05, seed=13)
        x = train.features.astype(np.float64)
        y = np.where(train.labels == 1, 1.0, -1.0)
        x_aug = np.hstack([x, np.ones((len(y), 1))])
        w, info = _binary_svm_dual_cd(x_aug, y, 1000.0, seeded_rng(0, "t"))
        assert (y * (x_aug @ w) >= 1 - 1e-3).all()

    def test_dual_objective_nondecreasing(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(30, 3))
        y = np.where(rng.random(30) > 0.5, 1.0, -1.0)
        x_aug = np.hstack([x, np.ones((30, 1))])
        _, info = _binary_svm_dual_cd(x_aug, y, 5.0, seeded_rng(1, "t"))
        dual = np.asarray(info["dual"])
        assert (np.diff(dual) >= -1e-10).all()

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            train_svm_ovr(np.zeros((3, 2)), [1, 1, 1])

    def test_absent_class_scored_minus_inf(self):
        x = np.array([[-1.0], [1.0]])
        model = train_svm_ovr(x, [0, 1], reg_c=5.0, num_classes=4)
        values = svm_decision_values(model, x)
        assert np.isneginf(values[:, 2]).all() and np.isneginf(values[:, 3]).all()

    def test_deterministic(self):
        train, _ = generate_blobs(3, 15, 2, sigma=0.2, seed=15)
        a = train_svm_ovr(train.features, train.labels, reg_c=5.0)
        b = train_svm_ovr(train.features, train.labels, reg_c=5.0)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)


class TestDecisionValues:
    def test_point_on_hyperplane_scores_zero(self):
        model = SvmOvrModel(weights=np.array([[2.0, 0.0], [0.0, 1.0]]),
                            biases=np.array([-2.0, 0.0]), reg_c=5.0,
                            present=np.array([True, True]))
        values = svm_decision_values(model, [[1.0, 3.0]])
        assert values[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_direct_evaluation(self):
        model = SvmOvrModel(weights=np.array([[1.0]]), biases=np.array([0.0]),
                            reg_c=5.0, present=np.array([True]))
        assert svm_decision_values(model, [[0.3]])[0, 0] == pytest.approx(0.3)

    def test_linearity_with_zero_bias(self):
        rng = np.random.default_rng(16)
        model = SvmOvrModel(weights=rng.normal(size=(3, 4)), biases=np.zeros(3),
                            reg_c=5.0, present=np.ones(3, bool))
        x = rng.normal(size=(5, 4))
        assert np.allclose(svm_decision_values(model, 2 * x),
                           2 * svm_decision_values(model, x), atol=1e-12)


class TestScratchTrainer:
    def test_full_labels_beat_raw_probe_oracle(self):
        train, test = generate_blobs(3, 50, 4, sigma=0.05, seed=17)
        x = train.features.astype(np.float64)
        encoder, head = train_encoder_supervised(
            x, train.labels, train_config=ProbeTrainConfig(seed=0), num_classes=3)
        scratch_acc = (head.predict(embed(encoder, test.features.astype(np.float64)))
                       == test.labels).mean()
        raw_probe = train_probe(x, train.labels, ProbeTrainConfig(seed=0), num_classes=3)
        raw_acc = (raw_probe.predict(test.features.astype(np.float64))
                   == test.labels).mean()
        assert scratch_acc >= 0.95
        assert scratch_acc >= raw_acc

    def test_zero_hidden_layers_reduce_to_probe(self):
        rng = np.random.default_rng(18)
        x, y = rng.normal(size=(25, 6)), rng.integers(0, 3, 25)
        cfg = ProbeTrainConfig(epochs=20, seed=21)
        encoder, head = train_encoder_supervised(
            x, y, net_config=NetConfig(embed_dim=None), train_config=cfg,
            num_classes=3)
        probe = train_probe(x, y, cfg, num_classes=3)
        assert encoder == []
        assert np.array_equal(head.weights, probe.weights)
        assert np.array_equal(head.bias, probe.bias)

    def test_deterministic(self):
        rng = np.random.default_rng(19)
        x, y = rng.normal(size=(30, 5)), rng.integers(0, 3, 30)
        cfg = ProbeTrainConfig(epochs=10, seed=2)
        enc_a, head_a = train_encoder_supervised(x, y, train_config=cfg, num_classes=3)
        enc_b, head_b = train_encoder_supervised(x, y, train_config=cfg, num_classes=3)
        for la, lb in zip(enc_a, enc_b):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)
        assert np.array_equal(head_a.weights, head_b.weights)
