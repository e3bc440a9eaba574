import numpy as np
import pytest

from dctrestore import autodiff as ad
from dctrestore.autodiff import AdamState, Parameter, Tensor
from dctrestore.errors import NonScalarLoss, ShapeMismatch, StateShapeMismatch

from conftest import fd_gradcheck


def t(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def const(rng, *shape):
    return Tensor(rng.standard_normal(shape))


class TestOperatorGradients:
    """Central finite differences against every operator's analytic backward."""

    def test_elementwise(self, rng):
        for shape in [(3,), (2, 5), (2, 3, 4)]:
            x = t(rng, *shape)
            y = t(rng, *shape)
            c = const(rng, *shape)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.add(x, y), c)), [x, y], rng)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.sub(x, y), c)), [x, y], rng)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.mul(x, y), c)), [x, y], rng)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.neg(x), c)), [x], rng)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.gelu(x), c)), [x], rng)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.abs_(x), c)), [x], rng)
            fd_gradcheck(
                lambda: ad.mean(ad.mul(ad.sqrt(ad.add(ad.mul(x, x), 0.3)), c)), [x], rng
            )

    def test_broadcast_add_mul(self, rng):
        x = t(rng, 4, 3, 5)
        b = t(rng, 5)
        c = const(rng, 4, 3, 5)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.add(x, b), c)), [x, b], rng)
        s = t(rng, 1, 3, 1)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.mul(x, s), c)), [x, s], rng)

    def test_matmul(self, rng):
        for ashape, bshape in [((4, 6), (6, 3)), ((2, 4, 6), (6, 3)), ((2, 4, 6), (2, 6, 3))]:
            a = t(rng, *ashape)
            b = t(rng, *bshape)
            out_shape = np.matmul(a.data, b.data).shape
            c = const(rng, *out_shape)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.matmul(a, b), c)), [a, b], rng)

    def test_shape_ops(self, rng):
        x = t(rng, 2, 3, 4)
        c1 = const(rng, 4, 6)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.reshape(x, (4, 6)), c1)), [x], rng)
        c2 = const(rng, 4, 2, 3)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.permute(x, (2, 0, 1)), c2)), [x], rng)
        y = t(rng, 2, 3, 4)
        c3 = const(rng, 2, 6, 4)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.concat([x, y], 1), c3)), [x, y], rng)
        c4 = const(rng, 2, 2, 4)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.slice_axis(x, 1, 1, 3), c4)), [x], rng)

    def test_softmax(self, rng):
        for shape, axis in [((5,), -1), ((3, 7), 1), ((2, 3, 4), 0)]:
            x = t(rng, *shape)
            c = const(rng, *shape)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.softmax(x, axis), c)), [x], rng)

    def test_layer_norm(self, rng):
        for shape, axis in [((2, 6, 3, 3), 1), ((4, 5), -1), ((3, 6, 2), 1)]:
            n = shape[axis]
            x = t(rng, *shape)
            g = Tensor(rng.uniform(0.5, 1.5, n), requires_grad=True)
            b = t(rng, n)
            c = const(rng, *shape)
            fd_gradcheck(lambda: ad.mean(ad.mul(ad.layer_norm(x, g, b, axis), c)), [x, g, b], rng)

    def test_conv2d(self, rng):
        x = t(rng, 2, 3, 5, 4)
        w = t(rng, 4, 3, 3, 3, scale=0.2)
        b = t(rng, 4, scale=0.2)
        c = const(rng, 2, 4, 5, 4)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.conv2d(x, w, b), c)), [x, w, b], rng)

    def test_conv2d_depthwise(self, rng):
        x = t(rng, 2, 3, 4, 4)
        w = t(rng, 3, 1, 3, 3, scale=0.2)
        b = t(rng, 3, scale=0.2)
        c = const(rng, 2, 3, 4, 4)
        fd_gradcheck(
            lambda: ad.mean(ad.mul(ad.conv2d(x, w, b, depthwise=True), c)), [x, w, b], rng
        )

    def test_transpose_conv2d(self, rng):
        x = t(rng, 2, 3, 3, 4)
        w = t(rng, 3, 5, 2, 2, scale=0.2)
        b = t(rng, 5, scale=0.2)
        c = const(rng, 2, 5, 6, 8)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.transpose_conv2d(x, w, b), c)), [x, w, b], rng)

    def test_windowing_and_shift(self, rng):
        x = t(rng, 2, 3, 4, 4)
        c = const(rng, 8, 4, 3)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.window_partition(x, 2), c)), [x], rng)
        wins = t(rng, 8, 4, 3)
        c2 = const(rng, 2, 3, 4, 4)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.window_reverse(wins, 2, 4, 4), c2)), [wins], rng)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.cyclic_shift(x, (1, -1)), c2)), [x], rng)

    def test_take_last(self, rng):
        x = t(rng, 3, 9)
        idx = np.array([0, 4, 4, 8, 2, 0])
        c = const(rng, 3, 6)
        fd_gradcheck(lambda: ad.mean(ad.mul(ad.take_last(x, idx), c)), [x], rng)

    def test_mean_and_sum(self, rng):
        x = t(rng, 3, 4)
        fd_gradcheck(lambda: ad.mean(x), [x], rng)
        fd_gradcheck(lambda: ad.sum_all(ad.mul(x, x)), [x], rng)


class TestOperatorSemantics:
    def test_softmax_uniform(self):
        out = ad.softmax(Tensor(np.zeros(7)), axis=-1)
        assert np.allclose(out.data, 1.0 / 7.0)

    def test_softmax_rows_sum_to_one(self, rng):
        out = ad.softmax(Tensor(rng.standard_normal((4, 9))), axis=-1)
        assert np.allclose(out.data.sum(axis=-1), 1.0)

    def test_window_partition_single_window_identity_grouping(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 2, 2)))
        wins = ad.window_partition(x, 2)
        assert wins.shape == (1, 4, 3)
        assert np.array_equal(wins.data[0, :, 0], x.data[0, 0].reshape(-1))

    def test_window_roundtrip_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 5, 6, 4)))
        back = ad.window_reverse(ad.window_partition(x, 2), 2, 6, 4)
        assert np.array_equal(back.data, x.data)

    def test_conv2d_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 6, 5)))
        w = np.zeros((3, 3, 3, 3))
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        out = ad.conv2d(x, Tensor(w))
        assert np.allclose(out.data, x.data)

    def test_transpose_conv_doubles_dims(self, rng):
        x = Tensor(rng.standard_normal((1, 4, 3, 7)))
        out = ad.transpose_conv2d(x, Tensor(rng.standard_normal((4, 2, 2, 2))))
        assert out.shape == (1, 2, 6, 14)

    def test_cyclic_shift_inverse(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 4, 4)))
        back = ad.cyclic_shift(ad.cyclic_shift(x, (1, 2)), (-1, -2))
        assert np.array_equal(back.data, x.data)

    def test_shape_mismatch_raised(self, rng):
        with pytest.raises(ShapeMismatch):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
        with pytest.raises(ShapeMismatch):
            ad.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 5, 3, 3))))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        ad.backward(ad.sum_all(x))
        assert np.allclose(x.grad, 1.0)

    def test_quadratic_gives_2x(self, rng):
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        ad.backward(ad.sum_all(ad.mul(x, x)))
        assert np.allclose(x.grad, 2.0 * x.data)

    def test_non_scalar_loss_rejected(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with pytest.raises(NonScalarLoss):
            ad.backward(ad.mul(x, x))

    def test_unreachable_grads_stay_zero(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        y = Tensor(rng.standard_normal(3), requires_grad=True)
        ad.backward(ad.mean(ad.mul(x, x)))
        assert y.grad is None
        assert np.all(y.grad_or_zero() == 0.0)

    def test_reused_node_accumulates(self, rng):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = ad.add(ad.mul(x, x), ad.mul(x, x))  # 2x^2, d/dx = 4x
        ad.backward(ad.sum_all(y))
        assert np.allclose(x.grad, 8.0)


class TestAdam:
    def test_first_step_hand_value(self):
        p = Parameter("w", Tensor(np.zeros(1), requires_grad=True))
        p.tensor.grad = np.ones(1)
        state = AdamState.zeros([p])
        ad.adam_step([p], state, lr=1e-3)
        # bias-corrected: delta = -lr * 1 / (sqrt(1) + eps)
        assert p.tensor.data[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_zero_gradient_no_move(self):
        p = Parameter("w", Tensor(np.full(3, 1.5), requires_grad=True))
        p.tensor.grad = np.zeros(3)
        state = AdamState.zeros([p])
        ad.adam_step([p], state, lr=1e-2)
        assert np.allclose(p.tensor.data, 1.5)

    def test_two_steps_match_scalar_reference(self):
        # independent scalar re-implementation of bias-corrected Adam
        beta1, beta2, eps, lr = 0.9, 0.99, 1e-8, 1e-3
        theta, m, v = 0.5, 0.0, 0.0
        grads = [0.3, -0.7]
        for step, g in enumerate(grads, start=1):
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            mhat = m / (1 - beta1**step)
            vhat = v / (1 - beta2**step)
            theta -= lr * mhat / (np.sqrt(vhat) + eps)

        p = Parameter("w", Tensor(np.array([0.5]), requires_grad=True))
        state = AdamState.zeros([p])
        for g in grads:
            p.tensor.grad = np.array([g])
            ad.adam_step([p], state, lr=lr)
        assert p.tensor.data[0] == pytest.approx(theta, rel=1e-12)

    def test_state_shape_mismatch(self):
        p = Parameter("w", Tensor(np.zeros(3), requires_grad=True))
        state = AdamState.zeros([p])
        state.m["w"] = np.zeros(4)
        with pytest.raises(StateShapeMismatch):
            ad.adam_step([p], state, lr=1e-3)


class TestClip:
    def _params(self, grads):
        params = []
        for i, g in enumerate(grads):
            p = Parameter(f"p{i}", Tensor(np.zeros_like(g), requires_grad=True))
            p.tensor.grad = g.copy()
            params.append(p)
        return params

    def test_below_threshold_unchanged(self):
        params = self._params([np.array([0.06, 0.08])])  # norm 0.1
        ad.clip_grad_global_norm(params, 0.2)
        assert np.allclose(params[0].tensor.grad, [0.06, 0.08])

    def test_scaled_to_max_norm(self, rng):
        g = rng.standard_normal(10)
        g *= 2.0 / np.linalg.norm(g)
        params = self._params([g])
        ad.clip_grad_global_norm(params, 0.2)
        assert np.linalg.norm(params[0].tensor.grad) == pytest.approx(0.2, abs=1e-12)

    def test_direction_preserved(self, rng):
        g = rng.standard_normal(16)
        params = self._params([g * 5.0])
        ad.clip_grad_global_norm(params, 0.2)
        clipped = params[0].tensor.grad
        cos = np.dot(clipped, g) / (np.linalg.norm(clipped) * np.linalg.norm(g))
        assert cos == pytest.approx(1.0, abs=1e-12)

    def test_global_norm_across_tensors(self):
        params = self._params([np.array([3.0]), np.array([4.0])])  # norm 5
        norm = ad.clip_grad_global_norm(params, 0.2)
        assert norm == pytest.approx(5.0)
        total = np.sqrt(sum(float((p.tensor.grad**2).sum()) for p in params))
        assert total == pytest.approx(0.2, abs=1e-12)
