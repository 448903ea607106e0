"""Oracle tests for the convolution/dense layers, MAE loss, and Adam."""

import time

import numpy as np
import pytest

from rotortrack import neuralcore as nn


def naive_conv1d(x, w, b, stride, padding):
    """Direct triple-loop 1-D convolution; the reference the fast path must match."""
    batch, n_in, c_in = x.shape
    k, _, c_out = w.shape
    if padding == "same":
        left = (k - 1) // 2
        right = k - 1 - left
        xp = np.zeros((batch, n_in + k - 1, c_in), dtype=x.dtype)
        xp[:, left:left + n_in, :] = x
        n_out = -(-n_in // stride)
    else:
        xp = x
        n_out = (n_in - k) // stride + 1
    y = np.zeros((batch, n_out, c_out), dtype=x.dtype)
    for t in range(n_out):
        for j in range(k):
            for co in range(c_out):
                y[:, t, co] += xp[:, t * stride + j, :] @ w[j, :, co]
    return y + b


def naive_conv_transpose1d(x, w, b, stride, padding):
    """Scatter-based transposed convolution oracle."""
    batch, n_in, c_in = x.shape
    k, _, c_out = w.shape
    if padding == "same":
        n_out = n_in * stride
        pad_left = (k - 1) // 2
    else:
        n_out = (n_in - 1) * stride + k
        pad_left = 0
    y = np.zeros((batch, n_out, c_out), dtype=x.dtype)
    for t in range(n_in):
        for j in range(k):
            u = t * stride + j - pad_left
            if 0 <= u < n_out:
                for co in range(c_out):
                    y[:, u, co] += x[:, t, :] @ w[j, :, co]
    return y + b


def random_cases(n):
    rng = np.random.default_rng(20240191)
    for _ in range(n):
        k = int(rng.integers(1, 8))
        stride = int(rng.integers(1, 4))
        c_in = int(rng.integers(1, 5))
        c_out = int(rng.integers(1, 5))
        padding = "same" if rng.random() < 0.5 else "valid"
        n_in = int(rng.integers(max(k, 4), 40))
        batch = int(rng.integers(1, 4))
        yield k, stride, c_in, c_out, padding, n_in, batch, rng


class TestConv1DForward:
    def test_matches_naive_loop_on_20_random_cases(self):
        for k, stride, c_in, c_out, padding, n_in, batch, rng in random_cases(20):
            layer = nn.Conv1DLayer.init(rng, k, stride, c_in, c_out, padding)
            x = rng.normal(size=(batch, n_in, c_in))
            got = layer.forward(x)
            want = naive_conv1d(x, layer.w, layer.b, stride, padding)
            assert got.shape == want.shape
            assert np.max(np.abs(got - want)) < 1e-12

    def test_identity_kernel_passes_input_through(self):
        rng = np.random.default_rng(3)
        layer = nn.Conv1DLayer.init(rng, kernel_size=1, stride=1, c_in=3, c_out=3,
                                    padding="same")
        layer.w[0] = np.eye(3)
        layer.b[:] = 0.0
        x = rng.normal(size=(2, 9, 3))
        assert np.array_equal(layer.forward(x), x)

    def test_same_padding_output_length_is_ceil(self):
        rng = np.random.default_rng(4)
        layer = nn.Conv1DLayer.init(rng, 5, 2, 2, 3, "same")
        assert layer.forward(np.zeros((1, 25, 2))).shape == (1, 13, 3)

    def test_wrong_channel_count_raises(self):
        rng = np.random.default_rng(5)
        layer = nn.Conv1DLayer.init(rng, 3, 1, 2, 2, "same")
        with pytest.raises(nn.ShapeMismatch):
            layer.forward(np.zeros((1, 10, 3)))


class TestConvTranspose1DForward:
    def test_matches_naive_scatter_on_20_random_cases(self):
        for k, stride, c_in, c_out, padding, n_in, batch, rng in random_cases(20):
            layer = nn.ConvTranspose1DLayer.init(rng, k, stride, c_in, c_out, padding)
            x = rng.normal(size=(batch, n_in, c_in))
            got = layer.forward(x)
            want = naive_conv_transpose1d(x, layer.w, layer.b, stride, padding)
            assert got.shape == want.shape
            assert np.max(np.abs(got - want)) < 1e-12

    def test_same_padding_doubles_length_at_stride_2(self):
        rng = np.random.default_rng(6)
        layer = nn.ConvTranspose1DLayer.init(rng, 5, 2, 4, 2, "same")
        assert layer.forward(np.zeros((1, 25, 4))).shape == (1, 50, 2)


class TestAdjointIdentity:
    def test_conv_and_transpose_are_adjoint(self):
        # <conv(x), y> == <x, convT(y)> when convT uses the transposed weights
        for k, stride, c_in, c_out, padding, n_in, batch, rng in random_cases(20):
            conv = nn.Conv1DLayer.init(rng, k, stride, c_in, c_out, padding)
            conv.b[:] = 0.0
            x = rng.normal(size=(batch, n_in, c_in))
            y = conv.forward(x)
            cot = rng.normal(size=y.shape)
            tr = nn.ConvTranspose1DLayer.init(rng, k, stride, c_out, c_in, padding)
            tr.w = np.ascontiguousarray(np.swapaxes(conv.w, 1, 2))
            tr.b = np.zeros(c_in, dtype=conv.w.dtype)
            back = tr.forward(cot)
            n = min(back.shape[1], n_in)   # positions past n belong to padding
            lhs = float(np.sum(y * cot))
            rhs = float(np.sum(x[:, :n, :] * back[:, :n, :]))
            assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def finite_diff(f, arrays, h=1e-5):
    """Central differences of scalar f with respect to each array, in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f()
            flat[i] = keep - h
            dn = f()
            flat[i] = keep
            gflat[i] = (up - dn) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return np.max(np.abs(a - b)) / denom


class TestGradients:
    def test_layer_gradients_match_finite_differences(self):
        start = time.monotonic()
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            conv = nn.Conv1DLayer.init(rng, 3, 2, 2, 3, "same" if seed % 2 else "valid")
            trans = nn.ConvTranspose1DLayer.init(rng, 3, 2, 3, 2, "same" if seed % 2 else "valid")
            dense_in = 2 * trans.out_length(conv.out_length(8))
            dense = nn.DenseLayer.init(rng, dense_in, 3)
            x = rng.normal(size=(2, 8, 2))
            target = rng.normal(size=(2, 3))

            def loss():
                h1 = conv.forward(x)
                h2 = trans.forward(h1)
                flat = h2.reshape(h2.shape[0], -1)
                out = dense.forward(flat)
                return 0.5 * float(np.sum((out - target) ** 2))

            h1 = conv.forward(x)
            h2 = trans.forward(h1)
            flat = h2.reshape(h2.shape[0], -1)
            out = dense.forward(flat)
            g_out = out - target
            g_flat, g_dw, g_db = dense.backward(flat, g_out)
            g_h2 = g_flat.reshape(h2.shape)
            g_h1, g_tw, g_tb = trans.backward(h1, g_h2)
            g_x, g_cw, g_cb = conv.backward(x, g_h1)

            analytic = [g_x, g_cw, g_cb, g_tw, g_tb, g_dw, g_db]
            numeric = finite_diff(loss, [x, conv.w, conv.b, trans.w, trans.b,
                                         dense.w, dense.b])
            for a, n in zip(analytic, numeric):
                assert rel_err(a, n) < 1e-6
        assert time.monotonic() - start < 10.0

    def test_relu_subgradient_zero_at_zero(self):
        x = np.array([-1.0, 0.0, 2.0])
        y = nn.relu_forward(x)
        assert np.array_equal(y, [0.0, 0.0, 2.0])
        g = nn.relu_backward(x, np.ones_like(x))
        assert np.array_equal(g, [0.0, 0.0, 1.0])


class TestMae:
    def test_matches_elementwise_loop(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3, 5, 2))
        y = rng.normal(size=(3, 5, 2))
        total = 0.0
        for idx in np.ndindex(x.shape):
            total += abs(x[idx] - y[idx])
        assert nn.mae(x, y) == total / x.size

    def test_identical_inputs_give_zero(self):
        x = np.random.default_rng(12).normal(size=(4, 7))
        assert nn.mae(x, x) == 0.0

    def test_shape_mismatch_raises(self):
        with pytest.raises(nn.ShapeMismatch):
            nn.mae(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_gradient_is_sign_over_size(self):
        x = np.array([[1.0, -2.0]])
        y = np.array([[0.5, -1.0]])
        g = nn.mae_grad(y, x)             # d mae / d reconstruction
        assert np.array_equal(g, np.array([[1.0, -1.0]]) / 2.0)


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        p = [np.array([1.0, -1.0, 0.5])]
        g = [np.array([0.3, -0.2, 0.9])]
        st = nn.adam_init(p, lr=0.01)
        nn.adam_step(p, g, st)
        # with bias correction the first update is lr * g/|g| up to eps
        assert np.allclose(p[0], [1.0 - 0.01, -1.0 + 0.01, 0.5 - 0.01], atol=1e-6)

    def test_zero_gradient_keeps_parameters(self):
        p = [np.array([2.0, 3.0])]
        st = nn.adam_init(p, lr=0.1)
        nn.adam_step(p, [np.zeros(2)], st)
        assert np.array_equal(p[0], [2.0, 3.0])
        assert st.step == 1

    def test_two_steps_match_hand_computation(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = [np.array([1.0])]
        st = nn.adam_init(p, lr=lr, beta1=b1, beta2=b2, eps=eps)
        m = v = 0.0
        x = 1.0
        for t, grad in enumerate([0.5, -0.25], start=1):
            nn.adam_step(p, [np.array([grad])], st)
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            mh = m / (1 - b1 ** t)
            vh = v / (1 - b2 ** t)
            x -= lr * mh / (np.sqrt(vh) + eps)
        assert np.allclose(p[0], [x], atol=1e-14)

    def test_invalid_learning_rate_rejected(self):
        with pytest.raises(ValueError):
            nn.adam_init([np.zeros(1)], lr=-0.1)


class TestDtypeSwitch:
    def teardown_method(self):
        nn.set_dtype("float64")

    def test_layers_build_in_active_dtype(self):
        nn.set_dtype("float32")
        layer = nn.Conv1DLayer.init(np.random.default_rng(0), 3, 1, 2, 2, "same")
        assert layer.w.dtype == np.float32

    def test_unknown_dtype_rejected(self):
        with pytest.raises(ValueError):
            nn.set_dtype("float16")
