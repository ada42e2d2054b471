"""Batch training algorithms and the shared stopping-criteria loop.

Every algorithm works on a flat parameter vector and an objective that maps
parameters to ``(sse, gradient)``. For networks that objective is
:class:`NetworkObjective`; tests plug in plain quadratics the same way.
Levenberg-Marquardt additionally needs ``objective.residuals(theta)``
returning ``(target - output, d output / d theta)``.
"""
import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .backprop import as_batch, backpropagate, output_jacobian
from .errors import ConfigurationError, DegenerateInputError, DivergenceError, ParseError
from .network import Network, forward

log = logging.getLogger(__name__)

MIN_LEARNING_RATE = 1e-15
CURVE_HEADER = ("epoch", "mse", "gradient_norm", "effective_lr", "validation_mse")


class Algorithm(str, Enum):
    GD = "gd"
    GDA = "gda"
    GDX = "gdx"
    RPROP = "rprop"
    BFGS = "bfgs"
    LM = "lm"


class StopReason(str, Enum):
    GOAL_REACHED = "GoalReached"
    MIN_GRADIENT = "MinGradient"
    MAX_EPOCHS = "MaxEpochs"
    MAX_TIME = "MaxTime"
    VALIDATION_STOP = "ValidationStop"


@dataclass(frozen=True)
class RpropParams:
    delta0: float = 0.07
    delta_max: float = 50.0
    eta_plus: float = 1.2
    eta_minus: float = 0.5


@dataclass(frozen=True)
class LMParams:
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    mu_min: float = 1e-20
    max_retries: int = 30


@dataclass(frozen=True)
class BFGSParams:
    c1: float = 1e-4
    backtrack: float = 0.5
    max_steps: int = 40


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm = Algorithm.LM
    learning_rate: float = 0.07
    goal: float = 1e-3
    max_epochs: int = 10000
    min_gradient: float = 1e-6
    max_time: Optional[float] = None
    seed: int = 0
    momentum: float = 0.9
    lr_inc: float = 1.05
    lr_dec: float = 0.7
    max_perf_inc: float = 1.04
    rprop: RpropParams = field(default_factory=RpropParams)
    lm: LMParams = field(default_factory=LMParams)
    bfgs: BFGSParams = field(default_factory=BFGSParams)
    validation_patience: int = 6

    def __post_init__(self):
        try:
            object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        except ValueError:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}") from None
        problems = []
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if not 0 < self.lr_dec < 1 < self.lr_inc:
            problems.append("need 0 < lr_dec < 1 < lr_inc")
        if not self.rprop.eta_minus < 1 < self.rprop.eta_plus:
            problems.append("need eta_minus < 1 < eta_plus")
        if not self.goal >= 0:
            problems.append("goal must be >= 0")
        if not self.lm.mu0 > 0:
            problems.append("lm mu0 must be > 0")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must lie in [0, 1)")
        if self.max_epochs < 1:
            problems.append("max_epochs must be >= 1")
        if self.validation_patience < 0:
            problems.append("validation_patience must be >= 0")
        if self.max_time is not None and not self.max_time > 0:
            problems.append("max_time must be > 0 when given")
        if problems:
            raise ConfigurationError("; ".join(problems))

    def as_flat_dict(self) -> dict:
        """Every setting, nested parameter groups flattened with a prefix."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (RpropParams, LMParams, BFGSParams)):
                for sub in fields(value):
                    out[f"{f.name}_{sub.name}"] = getattr(value, sub.name)
            elif isinstance(value, Enum):
                out[f.name] = value.value
            else:
                out[f.name] = value
        return out


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mse: float
    gradient_norm: float
    effective_lr: float
    validation_mse: Optional[float] = None


class EpochLog(list):
    """Per-epoch training history; a list of :class:`EpochRecord`."""

    @property
    def mse(self) -> np.ndarray:
        return np.array([r.mse for r in self])

    @property
    def epochs(self) -> int:
        return self[-1].epoch if self else 0


class TrainResult(NamedTuple):
    network: Network
    log: EpochLog
    stop_reason: StopReason


class NetworkObjective:
    """Sum-of-squares objective of a fixed network shape on a fixed batch."""

    def __init__(self, net: Network, inputs, targets):
        self.template = net
        self.inputs, self.targets = as_batch(net, (inputs, targets))
        self.n_records = self.inputs.shape[0]

    def __call__(self, theta):
        net = self.template.with_params(theta)
        trace = forward(net, self.inputs)
        err = self.targets - trace.output
        sse = 0.5 * float(np.sum(err * err))
        if not math.isfinite(sse):
            return sse, np.full_like(theta, np.nan)
        return sse, backpropagate(net, trace, self.targets).flat()

    def sse(self, theta) -> float:
        out = forward(self.template.with_params(theta), self.inputs).output
        err = self.targets - out
        return 0.5 * float(np.sum(err * err))

    def residuals(self, theta):
        net = self.template.with_params(theta)
        err = (self.targets - forward(net, self.inputs).output).ravel()
        return err, output_jacobian(net, self.inputs)


@dataclass
class OptState:
    theta: np.ndarray
    sse: float
    grad: np.ndarray
    lr: float
    velocity: Optional[np.ndarray] = None
    update_values: Optional[np.ndarray] = None
    prev_grad: Optional[np.ndarray] = None
    inv_hessian: Optional[np.ndarray] = None
    fresh_hessian: bool = True
    mu: float = 0.0
    step_length: float = 0.0
    stalled: bool = False
    accepted: bool = True

    @property
    def effective_lr(self) -> float:
        return self.lr


def init_state(objective, theta, config: TrainConfig) -> OptState:
    theta = np.array(theta, dtype=np.float64)
    sse, grad = objective(theta)
    n = theta.size
    state = OptState(theta=theta, sse=sse, grad=grad, lr=config.learning_rate)
    state.velocity = np.zeros(n)
    state.update_values = np.full(n, config.rprop.delta0)
    state.prev_grad = np.zeros(n)
    state.inv_hessian = np.eye(n)
    state.mu = config.lm.mu0
    return state


def _sse_of(objective, theta) -> float:
    fast = getattr(objective, "sse", None)
    return fast(theta) if fast is not None else objective(theta)[0]


def step_gd(objective, state: OptState, config: TrainConfig) -> OptState:
    """Plain steepest descent: ``theta - lr * grad``."""
    theta = state.theta - config.learning_rate * state.grad
    sse, grad = objective(theta)
    return replace(state, theta=theta, sse=sse, grad=grad, lr=config.learning_rate)


def _adapt(objective, state, config, delta, velocity=None):
    """Accept or reject a tentative step and adjust the learning rate."""
    theta = state.theta + delta
    sse = _sse_of(objective, theta)
    if not math.isfinite(sse) or sse > config.max_perf_inc * state.sse:
        lr = state.lr * config.lr_dec
        if lr < MIN_LEARNING_RATE:
            raise DivergenceError(f"learning rate fell below {MIN_LEARNING_RATE:g}")
        new = replace(state, lr=lr, accepted=False)
        if velocity is not None:
            new.velocity = np.zeros_like(state.theta)
        return new
    lr = state.lr * config.lr_inc if sse < state.sse else state.lr
    sse, grad = objective(theta)
    new = replace(state, theta=theta, sse=sse, grad=grad, lr=lr, accepted=True)
    if velocity is not None:
        new.velocity = velocity
    return new


def step_gda(objective, state: OptState, config: TrainConfig) -> OptState:
    """Gradient descent with an adaptive learning rate.

    A step that raises the error by more than ``max_perf_inc`` is thrown away
    and the rate shrinks by ``lr_dec``; a step that lowers the error is kept
    and the rate grows by ``lr_inc``.
    """
    return _adapt(objective, state, config, -state.lr * state.grad)


def step_gdx(objective, state: OptState, config: TrainConfig) -> OptState:
    """Adaptive learning rate plus momentum.

    ``dW = mc * dW_prev + (1 - mc) * lr * (-grad)``; rejected steps also
    clear the momentum memory.
    """
    mc = config.momentum
    delta = mc * state.velocity + (1.0 - mc) * state.lr * (-state.grad)
    return _adapt(objective, state, config, delta, velocity=delta)


def step_rprop(objective, state: OptState, config: TrainConfig) -> OptState:
    """Resilient backpropagation (no weight backtracking).

    Only gradient signs matter. On a sign flip the update value shrinks and
    the stored gradient is zeroed, so that parameter sits still this epoch and
    its update value is left alone next epoch.
    """
    p = config.rprop
    g = state.grad
    agree = np.sign(g) * np.sign(state.prev_grad)
    values = np.where(
        agree > 0,
        np.minimum(state.update_values * p.eta_plus, p.delta_max),
        np.where(agree < 0, state.update_values * p.eta_minus, state.update_values),
    )
    g = np.where(agree < 0, 0.0, g)
    theta = state.theta - np.sign(g) * values
    sse, grad = objective(theta)
    return replace(
        state, theta=theta, sse=sse, grad=grad, update_values=values, prev_grad=g,
        lr=float(np.mean(values)),
    )


def step_bfgs(objective, state: OptState, config: TrainConfig) -> OptState:
    """Quasi-Newton step with the BFGS inverse-Hessian update.

    The step length comes from Armijo backtracking. When no acceptable step
    is found the epoch falls back to one gradient-descent step with the
    configured learning rate and the Hessian approximation is reset.
    """
    p = config.bfgs
    h = state.inv_hessian
    g = state.grad
    direction = -h @ g
    slope = float(g @ direction)
    fresh = state.fresh_hessian
    if not slope < 0:
        h = np.eye(g.size)
        direction = -g
        slope = float(g @ direction)
        fresh = True
    # with an identity Hessian the first trial step has unit length
    dnorm = float(np.linalg.norm(direction))
    t = min(1.0, 1.0 / dnorm) if fresh and dnorm > 0 else 1.0
    for _ in range(p.max_steps):
        trial = state.theta + t * direction
        sse = _sse_of(objective, trial)
        if math.isfinite(sse) and sse <= state.sse + p.c1 * t * slope:
            break
        t *= p.backtrack
    else:
        log.info("bfgs line search failed; taking a gradient-descent step")
        new = step_gd(objective, state, config)
        new.inv_hessian = np.eye(g.size)
        new.fresh_hessian = True
        new.step_length = config.learning_rate
        new.lr = config.learning_rate
        return new
    sse, grad = objective(trial)
    s = trial - state.theta
    y = grad - g
    sy = float(s @ y)
    if sy > 1e-10:
        rho = 1.0 / sy
        eye = np.eye(g.size)
        left = eye - rho * np.outer(s, y)
        h = left @ h @ left.T + rho * np.outer(s, s)
        h = 0.5 * (h + h.T)
        fresh = False
    else:
        h = np.eye(g.size)
        fresh = True
    return replace(state, theta=trial, sse=sse, grad=grad, inv_hessian=h, fresh_hessian=fresh,
                   step_length=t, lr=t)


def lm_increment(jac, err, mu) -> np.ndarray:
    """Solve ``(J^T J + mu I) delta = J^T e``."""
    a = jac.T @ jac
    a[np.diag_indices_from(a)] += mu
    return np.linalg.solve(a, jac.T @ err)


def step_lm(objective, state: OptState, config: TrainConfig) -> OptState:
    """Levenberg-Marquardt step with the explicit output Jacobian.

    The damping grows by ``mu_inc`` until the error drops (then shrinks by
    ``mu_dec``), at most ``max_retries`` times per epoch. Crossing ``mu_max``
    marks the run as stalled.
    """
    p = config.lm
    err, jac = objective.residuals(state.theta)
    mu = state.mu
    for _ in range(p.max_retries):
        try:
            delta = lm_increment(jac, err, mu)
        except np.linalg.LinAlgError:
            delta = None
        if delta is not None:
            trial = state.theta + delta
            sse = _sse_of(objective, trial)
            if math.isfinite(sse) and sse < state.sse:
                sse, grad = objective(trial)
                mu = max(mu * p.mu_dec, p.mu_min)
                return replace(state, theta=trial, sse=sse, grad=grad, mu=mu, lr=1.0 / mu,
                               accepted=True)
        mu *= p.mu_inc
        if mu > p.mu_max:
            log.info("levenberg-marquardt stall: damping exceeded %g", p.mu_max)
            return replace(state, mu=mu, lr=1.0 / mu, stalled=True, accepted=False)
    return replace(state, mu=mu, lr=1.0 / mu, accepted=False)


STEPS = {
    Algorithm.GD: step_gd,
    Algorithm.GDA: step_gda,
    Algorithm.GDX: step_gdx,
    Algorithm.RPROP: step_rprop,
    Algorithm.BFGS: step_bfgs,
    Algorithm.LM: step_lm,
}


def _validation_mse(net, val):
    if val is None:
        return None
    out = forward(net, val[0]).output
    err = val[1] - out
    return 0.5 * float(np.sum(err * err)) / val[0].shape[0]


def train(net: Network, train_set, validation_set=None, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Batch-train ``net`` until the first stopping criterion fires.

    ``train_set`` and ``validation_set`` are ``(inputs, targets)`` pairs.
    Criteria are checked after every epoch in the order goal, minimum
    gradient (or LM stall), validation patience, time limit, epoch limit.
    On a validation stop the weights with the best validation error are
    returned.
    """
    objective = NetworkObjective(net, *train_set)
    val = as_batch(net, validation_set) if validation_set is not None else None
    step = STEPS[config.algorithm]
    state = init_state(objective, net.params(), config)
    if not math.isfinite(state.sse):
        raise DivergenceError("initial loss is not finite", epoch=0)

    patience = config.validation_patience if val is not None else 0
    best_val = _validation_mse(net, val)
    best_theta = state.theta
    since_best = 0
    history = EpochLog()
    started = time.perf_counter()
    reason = None
    theta = state.theta
    n = objective.n_records

    for epoch in range(1, config.max_epochs + 1):
        try:
            # overflow is caught below as a non-finite loss
            with np.errstate(over="ignore", invalid="ignore"):
                state = step(objective, state, config)
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}: {exc}", epoch=epoch) from None
        if not math.isfinite(state.sse) or not np.all(np.isfinite(state.theta)):
            raise DivergenceError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
        theta = state.theta
        mse = state.sse / n
        gnorm = float(np.linalg.norm(state.grad))
        if gnorm == 0.0 and mse > 0.0:
            # an exactly-zero gradient with nonzero error means the sigmoids
            # have saturated to 0/1 in floating point
            raise DivergenceError(
                f"gradient vanished with mse {mse:.6g} at epoch {epoch}: units saturated",
                epoch=epoch,
            )
        val_mse = None
        if val is not None:
            val_mse = _validation_mse(objective.template.with_params(theta), val)
            if val_mse < best_val:
                best_val, best_theta, since_best = val_mse, theta, 0
            else:
                since_best += 1
        history.append(EpochRecord(epoch, mse, gnorm, float(state.lr), val_mse))

        if mse < config.goal:
            reason = StopReason.GOAL_REACHED
        elif gnorm < config.min_gradient or state.stalled:
            reason = StopReason.MIN_GRADIENT
        elif patience and since_best >= patience:
            reason = StopReason.VALIDATION_STOP
            theta = best_theta
        elif config.max_time is not None and time.perf_counter() - started >= config.max_time:
            reason = StopReason.MAX_TIME
        elif epoch == config.max_epochs:
            reason = StopReason.MAX_EPOCHS
        if reason is not None:
            break

    return TrainResult(net.with_params(theta), history, reason)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def emit_curve(history, path) -> None:
    """Write the epoch log as CSV, one row per epoch, full float precision."""
    if not history:
        raise DegenerateInputError("cannot write an empty epoch log")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for r in history:
            writer.writerow([r.epoch, _fmt(r.mse), _fmt(r.gradient_norm), _fmt(r.effective_lr),
                             _fmt(r.validation_mse)])


def read_curve(path) -> EpochLog:
    history = EpochLog()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CURVE_HEADER:
            raise ParseError(f"{path}: unexpected curve header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                history.append(EpochRecord(
                    int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                    float(row[4]) if row[4] else None,
                ))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: malformed curve row {lineno}") from None
    return history


def config_from_flat(values: dict) -> TrainConfig:
    """Inverse of :meth:`TrainConfig.as_flat_dict`; unknown keys raise."""
    groups = {"rprop": RpropParams, "lm": LMParams, "bfgs": BFGSParams}
    top = {f.name: f for f in fields(TrainConfig)}
    kwargs, nested = {}, {k: {} for k in groups}
    for key, value in values.items():
        prefix, _, rest = key.partition("_")
        if prefix in groups and rest in {f.name for f in fields(groups[prefix])}:
            nested[prefix][rest] = value
        elif key in top and key not in groups:
            kwargs[key] = value
        else:
            raise ConfigurationError(f"unknown training setting '{key}'")
    for name, cls in groups.items():
        if nested[name]:
            kwargs[name] = cls(**nested[name])
    return TrainConfig(**kwargs)
