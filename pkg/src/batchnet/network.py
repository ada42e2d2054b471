"""Dense feed-forward networks: construction, forward pass and model files."""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, ParseError, ValidationError
from .numerics import ActivationKind, activate, as_matrix, as_vector

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (units, fan_in)
    biases: np.ndarray  # (units,)
    activation: ActivationKind = ActivationKind.LOG_SIGMOID

    def __post_init__(self):
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise DimensionError("layer weights must be 2-D and biases 1-D")
        if self.biases.shape[0] != self.weights.shape[0]:
            raise ValidationError(
                f"bias length {self.biases.shape[0]} != weight rows {self.weights.shape[0]}"
            )
        object.__setattr__(self, "activation", ActivationKind(self.activation))

    @property
    def units(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    input_dim: int
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ConfigurationError("a network needs at least one layer")
        width = self.input_dim
        for k, layer in enumerate(layers):
            if layer.fan_in != width:
                raise ValidationError(f"layer {k} expects {layer.fan_in} inputs, previous width is {width}")
            width = layer.units
        object.__setattr__(self, "layers", layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].units

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def params(self) -> np.ndarray:
        """All weights and biases as one flat vector.

        Order: layer by layer, row-major weights followed by biases.
        """
        parts = []
        for layer in self.layers:
            parts.append(layer.weights.ravel())
            parts.append(layer.biases)
        return np.concatenate(parts)

    def with_params(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameters, got {theta.shape}")
        layers = []
        pos = 0
        for layer in self.layers:
            nw = layer.weights.size
            w = theta[pos:pos + nw].reshape(layer.weights.shape).copy()
            pos += nw
            b = theta[pos:pos + layer.units].copy()
            pos += layer.units
            layers.append(Layer(w, b, layer.activation))
        return Network(self.input_dim, tuple(layers))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        if self.input_dim != other.input_dim or len(self.layers) != len(other.layers):
            return False
        return all(
            a.activation is b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.biases, b.biases)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one forward evaluation.

    ``sums[k]`` and ``activations[k]`` belong to layer ``k``; for a batch
    they carry one row per record.
    """

    x: np.ndarray
    sums: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    kinds: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def init_network(
    input_dim: int,
    hidden_sizes: Sequence[int],
    output_dim: int,
    activation: ActivationKind = ActivationKind.LOG_SIGMOID,
    seed: int = 0,
) -> Network:
    """Build a network with weights and biases drawn from U[-0.5, 0.5]."""
    sizes = [input_dim, *hidden_sizes, output_dim]
    if any(int(s) < 1 for s in sizes):
        raise ConfigurationError(f"all layer sizes must be >= 1, got {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, units in zip(sizes[:-1], sizes[1:]):
        w = rng.uniform(-0.5, 0.5, size=(units, fan_in))
        b = rng.uniform(-0.5, 0.5, size=units)
        layers.append(Layer(w, b, ActivationKind(activation)))
    return Network(int(input_dim), tuple(layers))


def forward(net: Network, x) -> ForwardTrace:
    """Run the network on one input vector or on a batch (one row per record)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise DimensionError(f"input has shape {x.shape}, network expects {net.input_dim} features")
    trace = ForwardTrace(x=x.copy())
    a = x
    for layer in net.layers:
        u = a @ layer.weights.T + layer.biases
        a = activate(layer.activation, u)
        trace.sums.append(u)
        trace.activations.append(a)
        trace.kinds.append(layer.activation)
    return trace


def simulate(net: Network, batch) -> np.ndarray:
    """Network outputs for every row of ``batch``, shape (n, output_dim)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.size == 0:
        return np.empty((0, net.output_dim))
    if batch.ndim != 2:
        raise DimensionError(f"batch must be 2-D, got shape {batch.shape}")
    return forward(net, batch).output


def network_to_dict(net: Network, normalizer: Optional[dict] = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "layers": [
            {
                "activation": layer.activation.value,
                "rows": layer.units,
                "cols": layer.fan_in,
                "weights": [float(v) for v in layer.weights.ravel()],
                "biases": [float(v) for v in layer.biases],
            }
            for layer in net.layers
        ],
    }
    if normalizer is not None:
        doc["normalizer"] = normalizer
    return doc


def save_model(net: Network, path, normalizer: Optional[dict] = None) -> None:
    """Write ``net`` as a JSON model file.

    ``normalizer`` is an optional ``{"min": [...], "max": [...]}`` mapping
    stored next to the layers so predictions can reuse training scaling.
    """
    text = json.dumps(network_to_dict(net, normalizer), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _field(doc, key, kind, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"{where}: missing field '{key}'")
    value = doc[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ParseError(f"{where}: field '{key}' must be an integer")
    if kind is list and not isinstance(value, list):
        raise ParseError(f"{where}: field '{key}' must be a list")
    if kind is str and not isinstance(value, str):
        raise ParseError(f"{where}: field '{key}' must be a string")
    return value


def _reals(values, where):
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError(f"{where}: non-numeric or non-finite entry {v!r}")
        out.append(float(v))
    return np.array(out, dtype=np.float64)


def network_from_dict(doc) -> Network:
    version = _field(doc, "format_version", int, "model")
    if version != FORMAT_VERSION:
        raise ParseError(f"model: unsupported format_version {version}")
    input_dim = _field(doc, "input_dim", int, "model")
    raw_layers = _field(doc, "layers", list, "model")
    layers = []
    for k, raw in enumerate(raw_layers):
        where = f"layers[{k}]"
        name = _field(raw, "activation", str, where)
        try:
            kind = ActivationKind(name)
        except ValueError:
            raise ParseError(f"{where}: unknown activation '{name}'") from None
        rows = _field(raw, "rows", int, where)
        cols = _field(raw, "cols", int, where)
        weights = _reals(_field(raw, "weights", list, where), f"{where}.weights")
        biases = _reals(_field(raw, "biases", list, where), f"{where}.biases")
        if weights.size != rows * cols:
            raise ValidationError(f"{where}: {weights.size} weights for a {rows}x{cols} matrix")
        if biases.size != rows:
            raise ValidationError(f"{where}: bias length {biases.size} != rows {rows}")
        layers.append(Layer(weights.reshape(rows, cols), biases, kind))
    try:
        return Network(input_dim, tuple(layers))
    except ConfigurationError as exc:
        raise ValidationError(str(exc)) from None


def load_model_bundle(path):
    """Read a model file; returns ``(network, normalizer_dict_or_None)``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from None
    net = network_from_dict(doc)
    normalizer = doc.get("normalizer")
    if normalizer is not None:
        lo = _reals(_field(normalizer, "min", list, "normalizer"), "normalizer.min")
        hi = _reals(_field(normalizer, "max", list, "normalizer"), "normalizer.max")
        if lo.size != net.input_dim or hi.size != net.input_dim:
            raise ValidationError("normalizer length does not match input_dim")
        normalizer = {"min": lo, "max": hi}
    return net, normalizer


def load_model(path) -> Network:
    return load_model_bundle(path)[0]


def make_layer(weights, biases, activation=ActivationKind.LOG_SIGMOID) -> Layer:
    """Layer from nested lists, with shape and finiteness checks."""
    w = as_matrix(weights, name="weights")
    b = as_vector(biases, name="biases")
    return Layer(w, b, ActivationKind(activation))
