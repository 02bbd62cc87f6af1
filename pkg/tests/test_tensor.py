import numpy as np
import pytest

from advdistill.tensor import (ShapeError, Tape, Tensor, backward, concat, conv2d,
                               index0, leaky_relu, linear, mul, permute, reduce_mean,
                               reduce_sum, relu, reshape, set_debug_checks)


def t(data, **kw):
    return Tensor(np.asarray(data, dtype=np.float32), **kw)


class TestConv2d:
    def test_hand_convolution_3x3(self):
        out = conv2d(t(np.ones((1, 1, 3, 3))), t(np.ones((1, 1, 2, 2))), t([0.0]))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 4.0))

    def test_identity_kernel_is_exact_identity(self):
        rng = np.random.default_rng(0)
        x = t(rng.normal(size=(2, 1, 5, 7)))
        out = conv2d(x, t(np.ones((1, 1, 1, 1))), t([0.0]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_hand_convolution_stride2(self):
        out = conv2d(t(np.ones((1, 1, 4, 4))), t(np.ones((1, 1, 2, 2))), t([0.0]),
                     stride=2)
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 4.0))

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError, match="channels"):
            conv2d(t(np.ones((1, 2, 4, 4))), t(np.ones((1, 3, 2, 2))), t([0.0]))

    def test_non_integer_output_raises(self):
        with pytest.raises(ValueError, match="non-integer"):
            conv2d(t(np.ones((1, 1, 5, 5))), t(np.ones((1, 1, 2, 2))), t([0.0]),
                   stride=2)

    def test_known_asymmetric_case(self):
        x = t(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        k = t([[[[1.0, 0.0], [0.0, -1.0]]]])
        out = conv2d(x, k, t([0.5]))
        # each output = x[i,j] - x[i+1,j+1] + 0.5 = -5 + 0.5
        np.testing.assert_allclose(out.data, np.full((1, 1, 3, 3), -4.5))


class TestPointwise:
    def test_leaky_relu_values(self):
        x = t([5.0, 0.0, -1.0])
        np.testing.assert_allclose(leaky_relu(x, 0.2).data, [5.0, 0.0, -0.2],
                                   rtol=0, atol=1e-7)

    def test_leaky_relu_slope_bounds(self):
        with pytest.raises(ValueError):
            leaky_relu(t([1.0]), 1.0)
        with pytest.raises(ValueError):
            leaky_relu(t([1.0]), -0.1)

    def test_relu(self):
        np.testing.assert_array_equal(relu(t([-2.0, 0.0, 3.0])).data, [0.0, 0.0, 3.0])


class TestLinear:
    def test_identity_weight(self):
        x = t([[1.0, 2.0], [3.0, 4.0]])
        out = linear(x, t(np.eye(2)), t([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_hand_case(self):
        out = linear(t([[1.0, 2.0]]), t([[1.0, 1.0]]), t([0.0]))
        np.testing.assert_array_equal(out.data, [[3.0]])

    def test_bias_passthrough(self):
        out = linear(t([[1.0, 2.0]]), t([[0.0, 0.0]]), t([7.0]))
        np.testing.assert_array_equal(out.data, [[7.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linear(t([[1.0, 2.0, 3.0]]), t([[1.0, 1.0]]), t([0.0]))


class TestReductions:
    def test_mean_hand(self):
        assert reduce_mean(t([1.0, 2.0, 3.0, 6.0])).item() == pytest.approx(3.0)

    def test_mean_constant(self):
        assert reduce_mean(t(np.full((3, 3), 2.5))).item() == pytest.approx(2.5)

    def test_mean_single(self):
        assert reduce_mean(t([4.25])).item() == 4.25

    def test_mean_empty_raises(self):
        with pytest.raises(ShapeError):
            reduce_mean(t(np.zeros((0,))))


class TestBackward:
    def test_mean_gradient(self):
        x = t([1.0, 2.0, 3.0, 4.0], requires_grad=True)
        with Tape() as tape:
            loss = reduce_mean(x)
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, np.full(4, 0.25))

    def test_sum_of_squares_gradient(self):
        x = t([1.0, -2.0], requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(mul(x, x))
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, [2.0, -4.0])

    def test_constant_loss_zero_gradient(self):
        x = t([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x * 0.0)
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_non_scalar_loss_raises(self):
        x = t([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, x)
        with pytest.raises(ShapeError):
            backward(y, tape)

    def test_loss_off_tape_raises(self):
        x = t([1.0], requires_grad=True)
        with Tape() as tape:
            reduce_mean(x)
        loose = reduce_mean(x)  # built outside the tape
        with pytest.raises(ValueError):
            backward(loose, tape)

    def test_diamond_graph_counts_each_path_once(self):
        x = t([1.0], requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x * 2.0 + x * 3.0)
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, [5.0])

    def test_backward_is_bit_deterministic(self):
        rng = np.random.default_rng(7)
        x_data = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
        w_data = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        grads = []
        for _ in range(2):
            x = t(x_data, requires_grad=True)
            w = t(w_data, requires_grad=True)
            b = t(np.zeros(4), requires_grad=True)
            with Tape() as tape:
                loss = reduce_mean(relu(conv2d(x, w, b, padding=1)))
            backward(loss, tape)
            grads.append((x.grad.copy(), w.grad.copy(), b.grad.copy()))
        for a, b_ in zip(grads[0], grads[1]):
            assert np.array_equal(a, b_)

    def test_tape_visits_every_node_once(self):
        x = t([2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 3.0
            z = y + y
            loss = reduce_sum(z)
        assert len(tape) == 3
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, [6.0])


class TestStructuralOps:
    def test_reshape_permute_roundtrip_grad(self):
        x = t(np.arange(24).reshape(2, 3, 4), requires_grad=True)
        with Tape() as tape:
            y = permute(x, (2, 0, 1))
            loss = reduce_sum(mul(reshape(y, (24,)), reshape(y, (24,))))
        backward(loss, tape)
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_concat_grad_routes_to_parts(self):
        a = t([1.0, 2.0], requires_grad=True)
        b = t([3.0], requires_grad=True)
        with Tape() as tape:
            joined = concat([a, b], axis=0)
            loss = reduce_sum(mul(joined, t([1.0, 10.0, 100.0])))
        backward(loss, tape)
        np.testing.assert_allclose(a.grad, [1.0, 10.0])
        np.testing.assert_allclose(b.grad, [100.0])

    def test_index0_grad_scatters(self):
        x = t(np.ones((3, 2)), requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(index0(x, 1))
        backward(loss, tape)
        np.testing.assert_array_equal(x.grad, [[0, 0], [1, 1], [0, 0]])


class TestDebugChecks:
    def test_nan_detection_when_enabled(self):
        set_debug_checks(True)
        try:
            bad = t([np.inf])
            with pytest.raises(FloatingPointError):
                mul(bad, bad)
        finally:
            set_debug_checks(False)

    def test_finite_forward_passes_under_debug(self):
        set_debug_checks(True)
        try:
            x = t(np.zeros((1, 3, 8, 8)))
            w = t(np.ones((2, 3, 3, 3)))
            out = conv2d(x, w, t(np.zeros(2)), padding=1)
            assert np.all(np.isfinite(out.data))
        finally:
            set_debug_checks(False)
