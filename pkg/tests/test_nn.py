import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feds3a.errors import ConfigurationError, InputError, NumericError
from feds3a.nn import (
    ModelSpec,
    OptimizerState,
    ParamVector,
    forward,
    init_params,
    loss_and_grad,
    optimizer_step,
    pseudo_label_loss_and_grad,
    zeros,
)


def one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def finite_difference(params, spec, x, t, mask, h=1e-5):
    g = np.zeros(len(params))
    for i in range(len(params)):
        up = params.values.copy()
        dn = params.values.copy()
        up[i] += h
        dn[i] -= h
        lu, _ = loss_and_grad(params.with_values(up), spec, x, t, mask)
        ld, _ = loss_and_grad(params.with_values(dn), spec, x, t, mask)
        g[i] = (lu - ld) / (2 * h)
    return g


def test_param_vector_length_checked():
    spec = ModelSpec((2, 3, 2))
    assert spec.n_params == 2 * 3 + 3 + 3 * 2 + 2
    with pytest.raises(InputError):
        ParamVector(np.zeros(5), spec.shapes)
    with pytest.raises(NumericError):
        ParamVector(np.full(spec.n_params, np.nan), spec.shapes)


def test_zero_weights_give_uniform_probabilities(rng):
    spec = ModelSpec((4, 5, 3))
    p = forward(zeros(spec), spec, rng.normal(size=(7, 4)))
    np.testing.assert_allclose(p, 1 / 3, rtol=0, atol=1e-15)


def test_hand_computed_two_two_two_forward():
    # W1 = [[1, -1], [0.5, 2]], b1 = [0, -1]; W2 = [[1, 0], [-1, 1]], b2 = [0.5, 0]
    # x = [1, 2]: z1 = [2, 2], h = [2, 2]-[0,1] -> [2, 2]... computed below by hand:
    # z1 = x @ W1 + b1 = [1*1 + 2*0.5, 1*-1 + 2*2] + [0, -1] = [2, 2]
    # h = relu(z1) = [2, 2]
    # z2 = h @ W2 + b2 = [2*1 + 2*-1, 2*0 + 2*1] + [0.5, 0] = [0.5, 2]
    # softmax([0.5, 2]) = [1/(1+e^1.5), e^1.5/(1+e^1.5)] = [0.182426, 0.817574]
    spec = ModelSpec((2, 2, 2))
    values = np.array([1, -1, 0.5, 2, 0, -1, 1, 0, -1, 1, 0.5, 0], dtype=float)
    p = forward(ParamVector(values, spec.shapes), spec, np.array([[1.0, 2.0]]))
    np.testing.assert_allclose(p, [[0.18242552380635635, 0.8175744761936437]], rtol=1e-12)


def test_forward_is_deterministic_in_eval_mode(rng):
    spec = ModelSpec((3, 4, 2), dropout=0.5)
    params = init_params(spec, rng)
    x = rng.normal(size=(10, 3))
    assert np.array_equal(forward(params, spec, x), forward(params, spec, x))


def test_dropout_zero_train_equals_eval(rng):
    spec = ModelSpec((3, 4, 2), dropout=0.0)
    params = init_params(spec, rng)
    x = rng.normal(size=(10, 3))
    a = forward(params, spec, x, rng=np.random.default_rng(1))
    assert np.array_equal(a, forward(params, spec, x))


def test_dimension_mismatch_is_configuration_error(rng):
    spec = ModelSpec((3, 4, 2))
    with pytest.raises(ConfigurationError):
        forward(init_params(spec, rng), spec, np.zeros((2, 5)))


def test_non_finite_activation_names_layer():
    spec = ModelSpec((1, 1, 2))
    params = ParamVector(np.array([1e308, 0, 1e308, 1e308, 0, 0]), spec.shapes)
    with pytest.raises(NumericError, match="layer 1"):
        forward(params, spec, np.array([[1.0]]))


@given(st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec((4, 6, 5))
    params = init_params(spec, rng).with_values(rng.normal(scale=5, size=spec.n_params))
    p = forward(params, spec, rng.normal(scale=3, size=(8, 4)))
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_all_masked_no_l1_gives_zero(rng):
    spec = ModelSpec((3, 4, 2))
    params = init_params(spec, rng)
    loss, grad = loss_and_grad(params, spec, rng.normal(size=(5, 3)), one_hot([0, 1, 0, 1, 1], 2),
                               np.zeros(5))
    assert loss == 0.0
    assert not grad.values.any()


def test_pure_l1_subgradient_uses_sign_zero(rng):
    spec = ModelSpec((2, 2, 2), l1=0.01)
    values = rng.normal(size=spec.n_params)
    values[[0, 3, 7]] = 0.0
    params = ParamVector(values, spec.shapes)
    loss, grad = loss_and_grad(params, spec, np.zeros((3, 2)), one_hot([0, 1, 1], 2), np.zeros(3))
    np.testing.assert_array_equal(grad.values, 0.01 * np.sign(values))
    assert loss == pytest.approx(0.01 * np.abs(values).sum())


def test_targets_must_be_one_hot(rng):
    spec = ModelSpec((2, 2, 2))
    with pytest.raises(InputError):
        loss_and_grad(init_params(spec, rng), spec, np.zeros((1, 2)), np.array([[0.5, 0.5]]))


def test_single_sample_gradient_matches_finite_differences():
    spec = ModelSpec((2, 2))
    params = ParamVector(np.array([0.3, -0.2, 0.1, 0.4, 0.05, -0.05]), spec.shapes)
    x = np.array([[0.7, -1.2]])
    t = one_hot([1], 2)
    _, grad = loss_and_grad(params, spec, x, t)
    fd = finite_difference(params, spec, x, t, None)
    np.testing.assert_allclose(grad.values, fd, rtol=1e-4, atol=1e-7)


@given(st.integers(0, 2**31 - 1))
def test_gradient_matches_finite_differences_random_nets(seed):
    rng = np.random.default_rng(seed)
    depth = rng.integers(1, 4)
    widths = tuple(int(w) for w in rng.integers(1, 9, size=depth + 1))
    widths = widths[:-1] + (max(2, widths[-1]),)
    spec = ModelSpec(widths, l1=float(rng.choice([0.0, 1e-3])))
    params = init_params(spec, rng)
    n = int(rng.integers(1, 6))
    x = rng.normal(size=(n, widths[0]))
    t = one_hot(rng.integers(0, widths[-1], size=n), widths[-1])
    mask = (rng.random(n) < 0.7).astype(float)
    _, grad = loss_and_grad(params, spec, x, t, mask)
    fd = finite_difference(params, spec, x, t, mask)
    # ReLU kinks and |w| kinks make the difference quotient meaningless
    # within h of a breakpoint; skip those rare coordinates
    ok = np.abs(params.values) > 1e-4
    err = np.abs(grad.values - fd)
    assert np.all((err <= 1e-4 * np.abs(fd) + 1e-7) | ~ok)


def test_sgd_arithmetic():
    spec = ModelSpec((1, 1))  # 2 parameters: one weight, one bias
    state = OptimizerState("sgd", 0.1)
    new = optimizer_step(state, ParamVector(np.array([1.0, 1.0]), spec.shapes),
                         ParamVector(np.array([1.0, -1.0]), spec.shapes))
    np.testing.assert_allclose(new.values, [0.9, 1.1])
    assert state.step == 1


@given(st.floats(1e-3, 1.0), st.floats(0.1, 10.0), st.integers(0, 1000))
def test_sgd_step_is_linear_in_scaled_gradient(eta, c, seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec((2, 2))
    w = ParamVector(rng.normal(size=spec.n_params), spec.shapes)
    g = rng.normal(size=spec.n_params)
    a = optimizer_step(OptimizerState("sgd", eta), w, w.with_values(g / eta * c))
    np.testing.assert_allclose(a.values - w.values, -c * g, rtol=1e-12, atol=1e-12)


def test_adam_first_step_is_sign_step(rng):
    spec = ModelSpec((3, 2))
    w = init_params(spec, rng)
    g = rng.normal(size=spec.n_params)
    new = optimizer_step(OptimizerState("adam", 1e-3), w, w.with_values(g))
    np.testing.assert_allclose(new.values - w.values, -1e-3 * np.sign(g), rtol=1e-5)


def test_optimizer_rejects_non_finite_gradient(rng):
    spec = ModelSpec((3, 2))
    w = init_params(spec, rng)
    g = np.zeros(spec.n_params)
    g[0] = np.inf
    with pytest.raises(NumericError):
        optimizer_step(OptimizerState("sgd", 0.1), w, w.with_values(np.zeros_like(g))._trusted(g))


def test_sgd_on_convex_quadratic_decreases_monotonically(rng):
    # softmax regression on separable data is convex in the parameters
    spec = ModelSpec((2, 2))
    x = rng.normal(size=(50, 2))
    t = one_hot((x[:, 0] > 0).astype(int), 2)
    params = zeros(spec)
    state = OptimizerState("sgd", 0.5)
    losses = []
    for _ in range(100):
        loss, grad = loss_and_grad(params, spec, x, t)
        losses.append(loss)
        params = optimizer_step(state, params, grad)
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


def test_l1_orthant_step_keeps_weak_zero_coordinates(rng):
    spec = ModelSpec((2, 2))
    w = ParamVector(np.array([0.0, 1e-6, -0.5, 0.0, 0.0, 0.3]), spec.shapes)
    # |g| <= l1 at the zero coordinates 0 and 3 -> they must not move;
    # coordinate 4 has |g| > l1 and may leave zero
    g = w.with_values(np.array([5e-6, 1.0, -0.2, -9e-6, 0.5, 0.1]))
    new = optimizer_step(OptimizerState("adam", 1e-2, l1=1e-5), w, g)
    assert new.values[0] == 0.0 and new.values[3] == 0.0
    assert new.values[4] < 0.0
    # coordinate 1 would cross zero in one step; it is clipped to 0
    assert new.values[1] == 0.0


def test_pseudo_label_gradient_matches_explicit_targets(rng):
    spec = ModelSpec((3, 5, 3), l1=1e-4)
    params = init_params(spec, rng)
    x = rng.normal(size=(20, 3))
    loss, grad, labels, mask = pseudo_label_loss_and_grad(params, spec, x, 0.5)
    probs = forward(params, spec, x)
    np.testing.assert_array_equal(labels, probs.argmax(axis=1))
    np.testing.assert_array_equal(mask, (probs.max(axis=1) >= 0.5).astype(float))
    l2, g2 = loss_and_grad(params, spec, x, one_hot(labels, 3), mask)
    assert loss == l2
    np.testing.assert_array_equal(grad.values, g2.values)
