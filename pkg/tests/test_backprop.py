import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batchnet.backprop import (
    Gradient,
    backpropagate,
    batch_gradient,
    gradient_check,
    loss,
    loss_and_gradient,
    numeric_gradient,
    output_deltas,
    output_jacobian,
    random_check_case,
    relative_error,
    run_gradient_checks,
)
from batchnet.errors import DegenerateInputError, DimensionError, NonDifferentiableError
from batchnet.network import Network, forward, init_network, make_layer


def sig(u):
    return 1.0 / (1.0 + math.exp(-u))


def single_unit(w, b, kind="logsig"):
    return Network(len(w), (make_layer([w], [b], kind),))


def test_loss_single_record():
    net = single_unit([0.0], 0.0)
    value = loss(net, ([[1.0]], [[1.0]]))
    assert value.sse == pytest.approx(0.125, abs=1e-15)
    assert value.mse == pytest.approx(0.125, abs=1e-15)


def test_loss_mean_over_records():
    net = single_unit([0.0], 0.0, "linear")
    value = loss(net, ([[0.0], [0.0]], [[1.0], [0.0]]))
    assert value.sse == 0.5
    assert value.mse == 0.25


def test_output_delta_sigmoid():
    trace = forward(single_unit([0.0], 0.0), [1.0])
    assert output_deltas(trace, [1.0])[0] == pytest.approx(0.125, abs=1e-15)


def test_output_delta_linear():
    trace = forward(single_unit([1.0], 0.0, "linear"), [2.0])
    assert output_deltas(trace, [0.0])[0] == -2.0


def test_hard_limit_output_is_not_differentiable():
    net = single_unit([1.0], 0.0, "hardlim")
    with pytest.raises(NonDifferentiableError):
        batch_gradient(net, ([[1.0]], [[1.0]]))


def test_zero_error_gives_zero_gradient():
    net = init_network(3, [4], 2, seed=1)
    x = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    t = forward(net, x).output
    assert np.all(batch_gradient(net, (x, t)).flat() == 0.0)


def test_two_two_one_against_hand_chain_rule():
    # Units 3 and 4 are hidden, 5 is the output; all biases zero.
    w13, w23, w14, w24, w35, w45 = 0.3, -0.2, 0.5, 0.1, 0.7, -0.4
    x1, x2, t = 1.0, 0.5, 1.0
    a3 = sig(w13 * x1 + w23 * x2)
    a4 = sig(w14 * x1 + w24 * x2)
    y = sig(w35 * a3 + w45 * a4)
    d5 = (t - y) * y * (1 - y)
    d3 = a3 * (1 - a3) * w35 * d5
    d4 = a4 * (1 - a4) * w45 * d5
    expected_hidden = -np.array([[d3 * x1, d3 * x2], [d4 * x1, d4 * x2]])
    expected_out = -np.array([[d5 * a3, d5 * a4]])

    net = Network(2, (make_layer([[w13, w23], [w14, w24]], [0, 0]), make_layer([[w35, w45]], [0])))
    g = batch_gradient(net, ([x1, x2], [t]))
    assert np.max(np.abs(g.weights[0] - expected_hidden)) < 1e-12
    assert np.max(np.abs(g.weights[1] - expected_out)) < 1e-12
    assert np.max(np.abs(g.biases[0] + np.array([d3, d4]))) < 1e-12
    assert abs(g.biases[1][0] + d5) < 1e-12


def test_batch_of_one_equals_single_record():
    net = init_network(4, [3], 1, seed=2)
    x = np.array([0.1, 0.9, 0.3, 0.5])
    single = backpropagate(net, forward(net, x), [0.7])
    batch = batch_gradient(net, (x[None, :], [[0.7]]))
    assert np.array_equal(single.flat(), batch.flat())


def test_duplicated_batch_doubles_gradient():
    net = init_network(4, [3, 2], 1, seed=3)
    x = np.array([[0.1, 0.9, 0.3, 0.5], [0.2, 0.2, 0.8, 0.1]])
    t = np.array([[1.0], [0.0]])
    once = batch_gradient(net, (x, t)).flat()
    twice = batch_gradient(net, (np.vstack([x, x]), np.vstack([t, t]))).flat()
    assert np.max(np.abs(twice - 2 * once)) <= 1e-12 * max(1.0, np.max(np.abs(once)))


def test_gradient_is_additive_over_records():
    net = init_network(4, [5], 1, seed=4)
    x = np.random.default_rng(0).uniform(0, 1, (6, 4))
    t = np.array([[1.0], [0.0], [1.0], [1.0], [0.0], [1.0]])
    total = batch_gradient(net, (x, t)).flat()
    parts = batch_gradient(net, (x[:2], t[:2])) + batch_gradient(net, (x[2:], t[2:]))
    assert np.max(np.abs(total - parts.flat())) < 1e-12


def test_linear_unit_closed_form():
    net = single_unit([1.0], 0.0, "linear")
    batch = ([[1.0], [2.0]], [[3.0], [5.0]])
    g = batch_gradient(net, batch)
    assert g.weights[0][0, 0] == -8.0
    assert g.biases[0][0] == -5.0
    num = numeric_gradient(net, batch)
    assert num.weights[0][0, 0] == pytest.approx(-8.0, abs=1e-8)
    assert num.biases[0][0] == pytest.approx(-5.0, abs=1e-8)


def test_loss_and_gradient_agree_with_separate_calls():
    net = init_network(4, [3], 1, seed=6)
    x = np.random.default_rng(1).uniform(0, 1, (4, 4))
    t = np.array([[1.0], [0.0], [0.0], [1.0]])
    value, grad = loss_and_gradient(net, (x, t))
    assert value == loss(net, (x, t))
    assert np.array_equal(grad.flat(), batch_gradient(net, (x, t)).flat())


def test_jacobian_matches_gradient():
    net = init_network(3, [4], 2, seed=8)
    x = np.random.default_rng(2).uniform(-1, 1, (5, 3))
    t = np.random.default_rng(3).uniform(0, 1, (5, 2))
    jac = output_jacobian(net, x)
    err = (t - forward(net, x).output).reshape(-1)
    # dE/dtheta = -J^T e
    assert np.max(np.abs(-jac.T @ err - batch_gradient(net, (x, t)).flat())) < 1e-12


def test_empty_batch_is_rejected():
    net = init_network(4, [2], 1)
    with pytest.raises(DegenerateInputError):
        batch_gradient(net, (np.empty((0, 4)), np.empty((0, 1))))


def test_target_shape_is_checked():
    net = init_network(4, [2], 1)
    with pytest.raises(DimensionError):
        batch_gradient(net, (np.ones((3, 4)), np.ones((2, 1))))


def test_gradient_check_seed_zero():
    errors = run_gradient_checks(0, 100)
    assert max(errors) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_gradient_check_random_networks(seed):
    net, batch = random_check_case(np.random.default_rng(seed))
    assert gradient_check(net, batch) < 1e-6


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-12, 0.0) == pytest.approx(1e-4)


def test_small_descent_step_reduces_loss():
    net = init_network(4, [8, 8], 1, seed=42)
    x = np.random.default_rng(5).uniform(0, 1, (20, 4))
    t = (x[:, :1] > 0.5).astype(float)
    before = loss(net, (x, t)).sse
    stepped = net.with_params(net.params() - 1e-3 * batch_gradient(net, (x, t)).flat())
    assert loss(stepped, (x, t)).sse < before


def test_gradient_round_trip():
    net = init_network(4, [3], 2, seed=1)
    theta = np.arange(net.n_params, dtype=float)
    assert np.array_equal(Gradient.from_flat(net, theta).flat(), theta)
