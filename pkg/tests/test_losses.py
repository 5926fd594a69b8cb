import numpy as np
import pytest

from vixseg import tensor as T
from vixseg.errors import ShapeError
from vixseg.losses import cce_loss, composite_loss, dice_loss, one_hot

from conftest import fd_check


def softmax_pred(rng, c, spatial):
    logits = rng.normal(size=(c,) + spatial)
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


class TestDice:
    def test_perfect_prediction_is_mu_order(self):
        gt = one_hot(np.array([[0, 1], [1, 0]]), 2, dtype=np.float64)
        loss = dice_loss(T.Tensor(gt), gt, mu=1e-5).item()
        assert 0.0 <= loss < 1e-5

    def test_hand_evaluation_uniform_pred(self, f64):
        # pred = 1/2 everywhere, gt assigns all 4 locations to class 1, mu=0:
        # d_1 = (2*2)/(2+4) = 2/3, d_0 = 0/(2+0) = 0, loss = 1 - (1/2)(2/3)
        pred = np.full((2, 4), 0.5)
        gt = np.zeros((2, 4))
        gt[1] = 1.0
        loss = dice_loss(T.Tensor(pred), gt, mu=0.0).item()
        assert abs(loss - 2.0 / 3.0) < 1e-12

    def test_gradient(self, f64):
        rng = np.random.default_rng(0)
        pred_logits = T.Parameter(rng.normal(size=(3, 4, 4)), "logits")
        gt = one_hot(rng.integers(0, 3, size=(4, 4)), 3, dtype=np.float64)

        def loss():
            return dice_loss(T.softmax_channel(pred_logits), gt)

        fd_check(loss, [pred_logits], h=1e-6, tol=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice_loss(T.Tensor(np.zeros((2, 3))), np.zeros((2, 4)))

    def test_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            pred = softmax_pred(rng, 3, (5, 5))
            gt = one_hot(rng.integers(0, 3, size=(5, 5)), 3, dtype=np.float64)
            loss = dice_loss(T.Tensor(pred), gt).item()
            assert 0.0 <= loss <= 1.0


class TestCce:
    def test_exact_prediction_is_zero(self):
        gt = one_hot(np.array([[0, 1]]), 2, dtype=np.float64)
        assert cce_loss(T.Tensor(gt), gt).item() == 0.0

    def test_uniform_prediction_is_log_c(self, f64):
        c = 4
        pred = np.full((c, 3, 3), 1.0 / c)
        gt = one_hot(np.random.default_rng(0).integers(0, c, size=(3, 3)), c,
                     dtype=np.float64)
        assert abs(cce_loss(T.Tensor(pred), gt).item() - np.log(c)) < 1e-12

    def test_double_loop_oracle(self, f64):
        rng = np.random.default_rng(2)
        pred = softmax_pred(rng, 3, (5, 5))
        gt = one_hot(rng.integers(0, 3, size=(5, 5)), 3, dtype=np.float64)
        got = cce_loss(T.Tensor(pred), gt).item()
        total = 0.0
        for i in range(5):
            for j in range(5):
                for c in range(3):
                    total += gt[c, i, j] * np.log(max(pred[c, i, j], 1e-12))
        want = -total / 25.0
        assert abs(got - want) <= 1e-10

    def test_gradient(self, f64):
        rng = np.random.default_rng(3)
        logits = T.Parameter(rng.normal(size=(3, 4, 4)), "logits")
        gt = one_hot(rng.integers(0, 3, size=(4, 4)), 3, dtype=np.float64)
        fd_check(lambda: cce_loss(T.softmax_channel(logits), gt), [logits])


class TestComposite:
    def test_sum_of_parts_exactly(self, f64):
        rng = np.random.default_rng(4)
        pred = softmax_pred(rng, 3, (4, 4))
        gt = one_hot(rng.integers(0, 3, size=(4, 4)), 3, dtype=np.float64)
        total = composite_loss(T.Tensor(pred), gt).item()
        parts = dice_loss(T.Tensor(pred), gt).item() + cce_loss(T.Tensor(pred), gt).item()
        assert total == parts

    def test_perfect_prediction_near_zero(self):
        gt = one_hot(np.array([[0, 1], [2, 0]]), 3, dtype=np.float64)
        assert composite_loss(T.Tensor(gt), gt).item() < 1e-5

    def test_gradient(self, f64):
        rng = np.random.default_rng(5)
        logits = T.Parameter(rng.normal(size=(3, 4, 4)), "logits")
        gt = one_hot(rng.integers(0, 3, size=(4, 4)), 3, dtype=np.float64)
        fd_check(lambda: composite_loss(T.softmax_channel(logits), gt),
                 [logits], h=1e-6, tol=1e-5)

    def test_monotone_descent_on_fixed_batch(self, f64):
        # 50 optimizer steps on one tiny fixed example decrease the loss at
        # every step
        from vixseg.optim import AdamW

        rng = np.random.default_rng(6)
        logits = T.Parameter(rng.normal(size=(2, 6, 6)), "logits")
        gt = one_hot(rng.integers(0, 2, size=(6, 6)), 2, dtype=np.float64)
        opt = AdamW([logits], lr=1e-2, weight_decay=0.0)
        values = []
        for _ in range(50):
            opt.zero_grad()
            with T.Tape() as tape:
                loss = composite_loss(T.softmax_channel(logits), gt)
                tape.backward(loss)
            values.append(loss.item())
            opt.step()
        assert all(b < a for a, b in zip(values, values[1:]))


class TestProperties:
    def test_permutation_invariance(self, f64):
        rng = np.random.default_rng(7)
        pred = softmax_pred(rng, 3, (4, 5))
        gt = one_hot(rng.integers(0, 3, size=(4, 5)), 3, dtype=np.float64)
        perm = rng.permutation(20)
        pred_p = pred.reshape(3, -1)[:, perm].reshape(3, 4, 5)
        gt_p = gt.reshape(3, -1)[:, perm].reshape(3, 4, 5)
        for fn in (dice_loss, cce_loss, composite_loss):
            a = fn(T.Tensor(pred), gt).item()
            b = fn(T.Tensor(pred_p), gt_p).item()
            assert abs(a - b) < 1e-12

    def test_one_hot_validation(self):
        with pytest.raises(ShapeError):
            one_hot(np.array([0, 3]), 3)
