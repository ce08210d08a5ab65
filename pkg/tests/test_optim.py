import numpy as np
import pytest

from gnplab import tensor as T
from gnplab.optim import AdamState, adam_step, check_gradients


def test_first_step_moves_by_learning_rate():
    # bias correction makes m_hat = g and v_hat = g^2, so the first update
    # is -lr * sign(g) up to eps
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.3, -4.0])}
    state = AdamState(learning_rate=0.1)
    new_params, new_state = adam_step(params, grads, state)
    np.testing.assert_allclose(new_params["w"], [0.9, -1.9], atol=1e-6)
    assert new_state.step == 1


def test_inputs_not_mutated():
    params = {"w": np.array([1.0])}
    grads = {"w": np.array([2.0])}
    state = AdamState()
    adam_step(params, grads, state)
    assert params["w"][0] == 1.0
    assert state.step == 0 and not state.m


def test_zero_gradient_is_a_no_op():
    params = {"w": np.array([5.0])}
    new_params, _ = adam_step(params, {"w": np.array([0.0])}, AdamState())
    np.testing.assert_array_equal(new_params["w"], params["w"])


def test_nan_gradient_rejected_by_name():
    with pytest.raises(ValueError, match="bad_param"):
        adam_step({"bad_param": np.ones(1)}, {"bad_param": np.array([np.nan])}, AdamState())


def test_deterministic_given_same_inputs():
    params = {"w": np.linspace(-1, 1, 5)}
    state = AdamState()
    rng = np.random.default_rng(3)
    g = {"w": rng.standard_normal(5)}
    a, _ = adam_step(params, g, state)
    b, _ = adam_step(params, g, state)
    np.testing.assert_array_equal(a["w"], b["w"])


def test_converges_on_quadratic():
    params = {"w": np.array([4.0, -3.0])}
    target = np.array([1.0, 2.0])
    state = AdamState(learning_rate=0.05)
    for _ in range(2000):
        g = {"w": 2.0 * (params["w"] - target)}
        params, state = adam_step(params, g, state)
    np.testing.assert_allclose(params["w"], target, atol=1e-4)


def test_check_gradients_on_quadratic_is_tiny():
    p = T.parameter(np.array([1.0, 2.0, 3.0]), "p")
    params = {"p": p}

    def loss_fn():
        return T.tsum(T.square(p))

    worst = check_gradients(loss_fn, params, probe_count=9, rng=np.random.default_rng(0))
    assert worst < 1e-8


def test_check_gradients_flags_a_wrong_backward():
    p = T.parameter(np.array([1.0, 2.0]), "p")

    def loss_fn():
        out = T.Tensor(np.sum(p.data**2), (p,), lambda gy: (gy * 3.0 * p.data,))
        return out

    worst = check_gradients(loss_fn, {"p": p}, probe_count=4, rng=np.random.default_rng(0))
    assert worst > 0.1


def test_check_gradients_empty_params():
    assert check_gradients(lambda: T.as_tensor(0.0), {}, 5, np.random.default_rng(0)) == 0.0
