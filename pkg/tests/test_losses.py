import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smokeda import autodiff as ad
from smokeda import losses as lo
from smokeda.autodiff import Tensor


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)


class TestCrossEntropy:
    def test_uniform_distribution(self):
        loss = lo.softmax_cross_entropy(Tensor([[0.5, 0.5]]), [0])
        assert abs(float(loss.data) - np.log(2)) < 1e-12

    def test_perfect_prediction(self):
        loss = lo.softmax_cross_entropy(Tensor([[1.0 - 1e-9, 1e-9]]), [0])
        assert float(loss.data) < 1e-8

    def test_two_sample_mean(self):
        probs = Tensor([[0.5, 0.5], [0.25, 0.75]])
        loss = lo.softmax_cross_entropy(probs, [0, 0])
        expected = (np.log(2) + np.log(4)) / 2
        assert abs(float(loss.data) - expected) < 1e-9

    def test_zero_probability_clamped_and_logged(self, caplog):
        with caplog.at_level("WARNING"):
            loss = lo.softmax_cross_entropy(Tensor([[0.0, 1.0]]), [0])
        assert np.isfinite(float(loss.data))
        assert "clamped" in caplog.text

    def test_gradient_through_softmax(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(5, 2))
        labels = rng.integers(0, 2, 5)
        tz = Tensor(z, requires_grad=True)
        lo.softmax_cross_entropy(ad.op_softmax(tz), labels).backward()

        def f(v):
            e = np.exp(v - v.max(1, keepdims=True))
            p = e / e.sum(1, keepdims=True)
            return float(-np.log(p[np.arange(5), labels]).mean())

        assert rel_err(tz.grad, ad.finite_diff_grad(f, z.copy())) < 1e-4


class TestHingeDomain:
    def test_correct_confident_prediction(self):
        # predicted label 1 matches, margin 1 - 0.9
        loss = lo.hinge_domain_loss(Tensor([[0.1, 0.9]]), [1], p=1)
        assert abs(float(loss.data) - 0.1) < 1e-12

    def test_wrong_prediction(self):
        # predicted label 0 with prob 0.8, true domain 1: margin 1 + 0.8
        loss = lo.hinge_domain_loss(Tensor([[0.8, 0.2]]), [1], p=1)
        assert abs(float(loss.data) - 1.8) < 1e-12

    def test_zero_at_full_confidence(self):
        loss = lo.hinge_domain_loss(Tensor([[0.0, 1.0]]), [1], p=1)
        assert float(loss.data) == 0.0

    @pytest.mark.parametrize("p", [1, 2])
    def test_gradient_matches_finite_differences(self, p):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(6, 2))
        labels = rng.integers(0, 2, 6)
        tz = Tensor(z, requires_grad=True)
        lo.hinge_domain_loss(ad.op_softmax(tz), labels, p=p).backward()

        def f(v):
            e = np.exp(v - v.max(1, keepdims=True))
            q = e / e.sum(1, keepdims=True)
            pred = q.argmax(1)
            sign = np.where(pred == labels, 1.0, -1.0)
            m = np.maximum(0.0, 1.0 - sign * q[np.arange(6), pred])
            return float((m ** p).mean())

        assert rel_err(tz.grad, ad.finite_diff_grad(f, z.copy())) < 1e-4

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(scale=3, size=(4, 2))
        probs = ad.op_softmax(Tensor(z))
        labels = rng.integers(0, 2, 4)
        assert float(lo.hinge_domain_loss(probs, labels, p=1).data) >= 0.0


class TestCovariance:
    def test_two_point_variance(self):
        cov = lo.covariance(Tensor([[0.0], [2.0]]))
        assert np.allclose(cov.data, [[2.0]])

    def test_identical_rows_give_zero(self):
        cov = lo.covariance(Tensor(np.ones((4, 3))))
        assert np.allclose(cov.data, 0.0)

    def test_single_row_rejected(self):
        with pytest.raises(lo.InsufficientSamplesError):
            lo.covariance(Tensor(np.ones((1, 3))))

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(2)
        F = rng.normal(size=(5, 3))
        cov = lo.covariance(Tensor(F)).data
        n, d = F.shape
        mu = F.mean(axis=0)
        oracle = np.zeros((d, d))
        for a in range(d):
            for b in range(d):
                oracle[a, b] = sum(
                    (F[i, a] - mu[a]) * (F[i, b] - mu[b]) for i in range(n)
                ) / (n - 1)
        assert np.abs(cov - oracle).max() < 1e-12

    def test_symmetric_psd(self):
        rng = np.random.default_rng(3)
        cov = lo.covariance(Tensor(rng.normal(size=(6, 4)))).data
        assert np.abs(cov - cov.T).max() < 1e-12
        assert np.linalg.eigvalsh(cov).min() > -1e-10


class TestCoral:
    def test_identical_inputs_give_zero(self):
        F = np.random.default_rng(4).normal(size=(5, 3))
        assert float(lo.coral_loss(Tensor(F), Tensor(F)).data) == 0.0

    def test_hand_computed_one_dim(self):
        F_S = Tensor([[0.0], [2.0]])  # variance 2
        F_T = Tensor([[0.0], [0.001], [-0.001]])  # variance 1e-6
        val = float(lo.coral_loss(F_S, F_T).data)
        assert abs(val - 0.25 * (2.0 - 1e-6) ** 2) < 1e-9

    def test_translation_invariance(self):
        rng = np.random.default_rng(5)
        F_S = rng.normal(size=(6, 3))
        F_T = rng.normal(size=(7, 3))
        base = float(lo.coral_loss(Tensor(F_S), Tensor(F_T)).data)
        shift = rng.normal(size=(1, 3))
        moved = float(lo.coral_loss(Tensor(F_S + shift), Tensor(F_T + shift)).data)
        assert abs(base - moved) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        F_S = rng.normal(size=(8, 4))
        F_T = rng.normal(size=(5, 4))
        ab = float(lo.coral_loss(Tensor(F_S), Tensor(F_T)).data)
        ba = float(lo.coral_loss(Tensor(F_T), Tensor(F_S)).data)
        assert abs(ab - ba) < 1e-12

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            F_S = rng.normal(size=(8, 4))
            F_T = rng.normal(size=(8, 4))
            fast = float(lo.coral_loss(Tensor(F_S), Tensor(F_T)).data)
            assert abs(fast - lo.coral_loss_bruteforce(F_S, F_T)) < 1e-10

    def test_gradient_flows_to_both_sides(self):
        rng = np.random.default_rng(8)
        F_S = rng.normal(size=(6, 3))
        F_T = rng.normal(size=(5, 3))
        ts = Tensor(F_S, requires_grad=True)
        tt = Tensor(F_T, requires_grad=True)
        lo.coral_loss(ts, tt).backward()

        def f_s(v):
            return float(lo.coral_loss(Tensor(v), Tensor(F_T)).data)

        def f_t(v):
            return float(lo.coral_loss(Tensor(F_S), Tensor(v)).data)

        assert rel_err(ts.grad, ad.finite_diff_grad(f_s, F_S.copy())) < 1e-4
        assert rel_err(tt.grad, ad.finite_diff_grad(f_t, F_T.copy())) < 1e-4

    def test_insufficient_samples(self):
        with pytest.raises(lo.InsufficientSamplesError):
            lo.coral_loss(Tensor(np.ones((1, 3))), Tensor(np.ones((4, 3))))


class TestJointLoss:
    def test_weighted_sum(self):
        w = lo.LossWeights(alpha_label=0.8, beta_domain=0.2, gamma_coral=0.2)
        total = lo.joint_loss(Tensor(1.0), Tensor(0.5), Tensor(0.3), w)
        assert abs(float(total.data) - 0.96) < 1e-12

    def test_all_zero_weights(self):
        w = lo.LossWeights(alpha_label=0.0, beta_domain=0.0, gamma_coral=0.0)
        total = lo.joint_loss(Tensor(1.0), Tensor(1.0), Tensor(1.0), w)
        assert float(total.data) == 0.0

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            lo.LossWeights(p=3)
        with pytest.raises(ValueError):
            lo.LossWeights(alpha_label=float("nan"))

    def test_grl_reverses_domain_gradient_to_shared_features(self):
        # the gradient below the GRL equals phi times the gradient above it
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(4, 3))
        W = rng.normal(size=(3, 2))
        b = rng.normal(size=2)
        labels = [0, 1, 0, 1]
        phi = -0.7

        below = Tensor(feats, requires_grad=True)
        above = ad.op_grl(below, phi)
        probs = ad.op_softmax(ad.op_affine(above, Tensor(W), Tensor(b)))
        lo.hinge_domain_loss(probs, labels, p=1).backward()

        plain = Tensor(feats, requires_grad=True)
        probs2 = ad.op_softmax(ad.op_affine(plain, Tensor(W), Tensor(b)))
        lo.hinge_domain_loss(probs2, labels, p=1).backward()

        assert np.allclose(below.grad, phi * plain.grad, atol=1e-14)

        def f(v):
            e = np.exp(v @ W + b - (v @ W + b).max(1, keepdims=True))
            q = e / e.sum(1, keepdims=True)
            pred = q.argmax(1)
            sign = np.where(pred == np.asarray(labels), 1.0, -1.0)
            m = np.maximum(0.0, 1.0 - sign * q[np.arange(4), pred])
            return float(m.mean())

        fd = ad.finite_diff_grad(f, feats.copy())
        assert rel_err(plain.grad, fd) < 1e-4
