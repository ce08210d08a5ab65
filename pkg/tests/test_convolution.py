"""Both backends against a nested-loop oracle and hand-worked examples."""

import numpy as np
import pytest

from gnplab import convolution as cv


def oracle_conv1d(x, w, b):
    length, c_in = x.shape
    k, _, c_out = w.shape
    r = (k - 1) // 2
    out = np.zeros((length, c_out))
    for i in range(length):
        for o in range(c_out):
            acc = b[o]
            for u in range(k):
                src = i + u - r
                if 0 <= src < length:
                    for c in range(c_in):
                        acc += x[src, c] * w[u, c, o]
            out[i, o] = acc
    return out


def oracle_conv2d(x, w, b):
    h, ww, c_in = x.shape
    kh, kw, _, c_out = w.shape
    rh, rw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((h, ww, c_out))
    for i in range(h):
        for j in range(ww):
            for o in range(c_out):
                acc = b[o]
                for u in range(kh):
                    for v in range(kw):
                        si, sj = i + u - rh, j + v - rw
                        if 0 <= si < h and 0 <= sj < ww:
                            for c in range(c_in):
                                acc += x[si, sj, c] * w[u, v, c, o]
                out[i, j, o] = acc
    return out


def test_single_element_identity(conv_backend):
    out = cv.conv1d_forward(np.array([[2.0]]), np.array([[[3.0]]]), np.zeros(1))
    assert out.shape == (1, 1)
    assert out[0, 0] == 6.0


def test_impulse_reads_kernel_reversed(conv_backend):
    # an impulse at position 0 picks out [w1, w0, 0] under same-padding
    x = np.array([[1.0], [0.0], [0.0]])
    w = np.array([[[10.0]], [[20.0]], [[30.0]]])
    out = cv.conv1d_forward(x, w, np.zeros(1))
    assert np.array_equal(out.ravel(), [20.0, 10.0, 0.0])


@pytest.mark.parametrize("length,c_in,c_out,k", [(1, 1, 1, 1), (7, 2, 3, 3), (20, 4, 2, 5), (9, 1, 1, 7)])
def test_conv1d_forward_matches_oracle(conv_backend, rng, length, c_in, c_out, k):
    x = rng.standard_normal((length, c_in))
    w = rng.standard_normal((k, c_in, c_out))
    b = rng.standard_normal(c_out)
    np.testing.assert_allclose(cv.conv1d_forward(x, w, b), oracle_conv1d(x, w, b), atol=1e-12)


@pytest.mark.parametrize("h,c_in,c_out,k", [(1, 1, 1, 1), (6, 2, 3, 3), (11, 3, 2, 5)])
def test_conv2d_forward_matches_oracle(conv_backend, rng, h, c_in, c_out, k):
    x = rng.standard_normal((h, h, c_in))
    w = rng.standard_normal((k, k, c_in, c_out))
    b = rng.standard_normal(c_out)
    np.testing.assert_allclose(cv.conv2d_forward(x, w, b), oracle_conv2d(x, w, b), atol=1e-12)


def test_conv2d_rectangular_input(conv_backend, rng):
    x = rng.standard_normal((5, 9, 2))
    w = rng.standard_normal((3, 3, 2, 1))
    b = rng.standard_normal(1)
    np.testing.assert_allclose(cv.conv2d_forward(x, w, b), oracle_conv2d(x, w, b), atol=1e-12)


def _numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        hi = f()
        x[idx] = orig - eps
        lo = f()
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * eps)
    return g


def test_conv1d_gradients_match_numeric(conv_backend, rng):
    x = rng.standard_normal((8, 2))
    w = rng.standard_normal((3, 2, 2))
    b = np.zeros(2)
    gy = rng.standard_normal((8, 2))

    def scalar():
        return float(np.sum(gy * cv.conv1d_forward(x, w, b)))

    np.testing.assert_allclose(cv.conv1d_grad_input(gy, w), _numeric_grad(scalar, x), atol=1e-8)
    np.testing.assert_allclose(cv.conv1d_grad_weights(x, gy, 3), _numeric_grad(scalar, w), atol=1e-8)


def test_conv2d_gradients_match_numeric(conv_backend, rng):
    x = rng.standard_normal((5, 6, 2))
    w = rng.standard_normal((3, 3, 2, 2))
    b = np.zeros(2)
    gy = rng.standard_normal((5, 6, 2))

    def scalar():
        return float(np.sum(gy * cv.conv2d_forward(x, w, b)))

    np.testing.assert_allclose(cv.conv2d_grad_input(gy, w), _numeric_grad(scalar, x), atol=1e-8)
    np.testing.assert_allclose(cv.conv2d_grad_weights(x, gy, 3, 3), _numeric_grad(scalar, w), atol=1e-8)


def test_backends_agree_exactly_on_shared_cases(rng):
    if not cv.compiled_available():
        pytest.skip("compiled backend not built")
    x = rng.standard_normal((30, 30, 4))
    w = rng.standard_normal((5, 5, 4, 3))
    b = rng.standard_normal(3)
    cv.select_backend("numpy")
    a = cv.conv2d_forward(x, w, b)
    cv.select_backend("compiled")
    c = cv.conv2d_forward(x, w, b)
    np.testing.assert_allclose(a, c, rtol=0, atol=1e-12)


def test_even_kernel_rejected(conv_backend):
    with pytest.raises(ValueError, match="odd"):
        cv.conv1d_forward(np.zeros((4, 1)), np.zeros((2, 1, 1)), np.zeros(1))
    with pytest.raises(ValueError, match="odd"):
        cv.conv2d_forward(np.zeros((4, 4, 1)), np.zeros((2, 3, 1, 1)), np.zeros(1))


def test_channel_mismatch_error_names_both_shapes(conv_backend):
    with pytest.raises(ValueError) as err:
        cv.conv1d_forward(np.zeros((4, 2)), np.zeros((3, 5, 1)), np.zeros(1))
    assert "(4, 2)" in str(err.value) and "(3, 5, 1)" in str(err.value)


def test_forced_unknown_backend_rejected():
    with pytest.raises(ValueError, match="unknown backend"):
        cv.select_backend("cuda")
