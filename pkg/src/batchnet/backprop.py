"""Squared-error loss, backpropagated gradients and a finite-difference oracle.

Sign conventions: ``Err = target - output``. The output delta is
``Err * g'(output)`` and hidden deltas follow
``delta_j = g'(a_j) * sum_i W_ij delta_i``. The gradient of the loss is then
``dE/dW_ij = -delta_i * a_j``, so a descent step ``W - lr * dE/dW`` is the
same update as the textbook ``W + lr * Err * g' * x``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError
from .network import ForwardTrace, Network, forward
from .numerics import ActivationKind, activate_derivative


@dataclass(frozen=True)
class LossValue:
    sse: float
    mse: float


@dataclass
class Gradient:
    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, net: Network, theta) -> "Gradient":
        shaped = net.with_params(theta)
        return cls([l.weights for l in shaped.layers], [l.biases for l in shaped.layers])

    def __add__(self, other: "Gradient") -> "Gradient":
        return Gradient(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def as_batch(net: Network, batch):
    """Normalise ``(inputs, targets)`` into 2-D float arrays and check shapes."""
    try:
        inputs, targets = batch
    except (TypeError, ValueError):
        raise DimensionError("batch must be an (inputs, targets) pair") from None
    x = np.asarray(inputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.size == net.input_dim else x.reshape(-1, net.input_dim)
    if t.ndim == 1:
        t = t.reshape(-1, net.output_dim)
    if x.shape[0] == 0:
        raise DegenerateInputError("batch is empty")
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"inputs have shape {x.shape}, network expects {net.input_dim} features")
    if t.shape != (x.shape[0], net.output_dim):
        raise DimensionError(f"targets have shape {t.shape}, expected {(x.shape[0], net.output_dim)}")
    return x, t


def loss(net: Network, batch) -> LossValue:
    """Sum of ``0.5 * Err**2`` over records and outputs, plus its per-record mean."""
    x, t = as_batch(net, batch)
    err = t - forward(net, x).output
    sse = 0.5 * float(np.sum(err * err))
    return LossValue(sse=sse, mse=sse / x.shape[0])


def output_deltas(trace: ForwardTrace, target) -> np.ndarray:
    out = trace.output
    target = np.asarray(target, dtype=np.float64)
    if target.shape != out.shape:
        if target.size != out.size:
            raise DimensionError(f"target shape {target.shape} does not match output {out.shape}")
        target = target.reshape(out.shape)
    return (target - out) * activate_derivative(trace.kinds[-1], out)


def _hidden_deltas(net: Network, trace: ForwardTrace, delta_out):
    deltas = [None] * len(net.layers)
    deltas[-1] = delta_out
    for k in range(len(net.layers) - 1, 0, -1):
        back = deltas[k] @ net.layers[k].weights
        deltas[k - 1] = activate_derivative(trace.kinds[k - 1], trace.activations[k - 1]) * back
    return deltas


def _layer_inputs(trace: ForwardTrace):
    return [trace.x] + trace.activations[:-1]


def backpropagate(net: Network, trace: ForwardTrace, target) -> Gradient:
    """Gradient of the squared error for the record(s) in ``trace``.

    Works for a single-record trace or a batch trace; batch contributions are
    summed over rows.
    """
    if len(trace.activations) != len(net.layers) or trace.x.shape[-1] != net.input_dim:
        raise DimensionError("trace does not belong to this network")
    deltas = _hidden_deltas(net, trace, output_deltas(trace, target))
    gw, gb = [], []
    for delta, a_prev in zip(deltas, _layer_inputs(trace)):
        d2 = np.atleast_2d(delta)
        gw.append(-(d2.T @ np.atleast_2d(a_prev)))
        gb.append(-d2.sum(axis=0))
    return Gradient(gw, gb)


def batch_gradient(net: Network, batch) -> Gradient:
    x, t = as_batch(net, batch)
    return backpropagate(net, forward(net, x), t)


def loss_and_gradient(net: Network, batch):
    """``(LossValue, Gradient)`` from a single forward pass."""
    x, t = as_batch(net, batch)
    trace = forward(net, x)
    err = t - trace.output
    sse = 0.5 * float(np.sum(err * err))
    return LossValue(sse, sse / x.shape[0]), backpropagate(net, trace, t)


def output_jacobian(net: Network, inputs) -> np.ndarray:
    """Derivatives of every network output with respect to every parameter.

    Row ``r * output_dim + i`` holds d(output_i of record r)/d(theta), columns
    follow ``Network.params`` ordering.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    trace = forward(net, x)
    n, k = x.shape[0], net.output_dim
    jac = np.empty((n, k, net.n_params))
    out_slope = activate_derivative(trace.kinds[-1], trace.output)
    for i in range(k):
        seed = np.zeros((n, k))
        seed[:, i] = out_slope[:, i]
        deltas = _hidden_deltas(net, trace, seed)
        cols = []
        for delta, a_prev in zip(deltas, _layer_inputs(trace)):
            cols.append(np.einsum("nu,nf->nuf", delta, a_prev).reshape(n, -1))
            cols.append(delta)
        jac[:, i, :] = np.concatenate(cols, axis=1)
    return jac.reshape(n * k, net.n_params)


def _extended_sse(net: Network, theta, x, t) -> np.longdouble:
    """sse evaluated entirely in extended precision (``np.longdouble``)."""
    a = x
    pos = 0
    for layer in net.layers:
        units, fan_in = layer.weights.shape
        w = theta[pos:pos + units * fan_in].reshape(units, fan_in)
        pos += units * fan_in
        b = theta[pos:pos + units]
        pos += units
        u = a @ w.T + b
        if layer.activation is ActivationKind.LOG_SIGMOID:
            e = np.exp(-np.abs(u))
            a = np.where(u >= 0, 1 / (1 + e), e / (1 + e))
        elif layer.activation is ActivationKind.LINEAR:
            a = u
        else:
            a = np.where(u < 0, 0, 1).astype(np.longdouble)
    err = t - a
    return np.sum(err * err) / 2


def numeric_gradient(net: Network, batch, h: float = 1e-5) -> Gradient:
    """Central-difference gradient of the sse, one parameter at a time.

    Perturbation and loss evaluation run in ``np.longdouble`` so that
    cancellation in ``loss(w + h) - loss(w - h)`` does not swamp small
    gradient entries.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x, t = as_batch(net, batch)
    x = x.astype(np.longdouble)
    t = t.astype(np.longdouble)
    theta = net.params().astype(np.longdouble)
    step = np.longdouble(h)
    grad = np.empty(theta.size)
    for j in range(theta.size):
        saved = theta[j]
        theta[j] = saved + step
        up = _extended_sse(net, theta, x, t)
        theta[j] = saved - step
        down = _extended_sse(net, theta, x, t)
        theta[j] = saved
        grad[j] = float((up - down) / (2 * step))
    return Gradient.from_flat(net, grad)


def relative_error(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def gradient_check(net: Network, batch, h: float = 1e-5) -> float:
    """Max relative discrepancy between backprop and finite differences."""
    analytic = batch_gradient(net, batch).flat()
    numeric = numeric_gradient(net, batch, h).flat()
    return float(np.max(relative_error(analytic, numeric)))


def random_check_case(rng: np.random.Generator):
    """A small random network and batch for gradient checking.

    Layer widths, depth, activations (log-sigmoid or linear per layer) and
    batch size are all drawn from ``rng``.
    """
    from .network import Layer

    input_dim = int(rng.integers(1, 5))
    sizes = [input_dim] + [int(rng.integers(1, 6)) for _ in range(int(rng.integers(0, 3)))]
    sizes.append(int(rng.integers(1, 3)))
    kinds = (ActivationKind.LOG_SIGMOID, ActivationKind.LINEAR)
    layers = []
    for fan_in, units in zip(sizes[:-1], sizes[1:]):
        w = rng.uniform(-1.0, 1.0, size=(units, fan_in))
        b = rng.uniform(-1.0, 1.0, size=units)
        layers.append(Layer(w, b, kinds[int(rng.integers(0, 2))]))
    net = Network(input_dim, tuple(layers))
    n = int(rng.integers(1, 6))
    x = rng.uniform(-1.0, 1.0, size=(n, input_dim))
    t = rng.uniform(0.0, 1.0, size=(n, net.output_dim))
    return net, (x, t)


def run_gradient_checks(seed: int, trials: int, h: float = 1e-5) -> list:
    """Max relative error of each of ``trials`` random gradient checks."""
    rng = np.random.default_rng(seed)
    return [gradient_check(*random_check_case(rng), h=h) for _ in range(trials)]
