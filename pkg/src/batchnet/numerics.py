"""Vector helpers and the three transfer functions.

Vectors and matrices are plain float64 numpy arrays. The helpers here only
validate shape and finiteness at the boundary where external data comes in.
"""
from enum import Enum

import numpy as np

from .errors import DimensionError, NonDifferentiableError, ValidationError


class ActivationKind(str, Enum):
    HARD_LIMIT = "hardlim"
    LINEAR = "linear"
    LOG_SIGMOID = "logsig"

    @property
    def differentiable(self) -> bool:
        return self is not ActivationKind.HARD_LIMIT


def as_vector(values, name="vector") -> np.ndarray:
    """Copy ``values`` into a finite 1-D float64 array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def as_matrix(values, rows=None, cols=None, name="matrix") -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} has {arr.shape[1]} cols, expected {cols}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def weighted_sum(w, x, b=0.0) -> float:
    """Return ``b + sum_j w_j * x_j``."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape or w.ndim != 1:
        raise DimensionError(f"weight length {w.shape} does not match input length {x.shape}")
    return float(b + np.dot(w, x))


def _logsig(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    # e^u/(1+e^u) keeps exp() from overflowing for very negative u
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(kind: ActivationKind, u):
    """Apply a transfer function elementwise.

    Scalars in, float out; arrays in, array out.
    """
    kind = ActivationKind(kind)
    arr = np.asarray(u, dtype=np.float64)
    if kind is ActivationKind.HARD_LIMIT:
        out = np.where(arr < 0, 0.0, 1.0)
    elif kind is ActivationKind.LINEAR:
        out = arr.copy()
    else:
        out = _logsig(np.atleast_1d(arr)).reshape(arr.shape)
    return float(out) if np.ndim(u) == 0 else out


def activate_derivative(kind: ActivationKind, y):
    """Derivative of the transfer function written in terms of its output ``y``.

    For the log-sigmoid this is ``y * (1 - y)``; the linear slope is 1. The
    hard limit has no usable derivative and raises.
    """
    kind = ActivationKind(kind)
    if not kind.differentiable:
        raise NonDifferentiableError("hard-limit activation has no usable derivative")
    arr = np.asarray(y, dtype=np.float64)
    if kind is ActivationKind.LINEAR:
        out = np.ones_like(arr)
    else:
        out = arr * (1.0 - arr)
    return float(out) if np.ndim(y) == 0 else out
