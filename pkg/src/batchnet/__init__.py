"""Batch-trained multilayer perceptrons for tabular screening data."""
from .errors import (
    BatchNetError,
    ConfigurationError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    NonDifferentiableError,
    ParseError,
    StratificationError,
    ValidationError,
)
from .numerics import ActivationKind, activate, activate_derivative, weighted_sum
from .network import Layer, Network, forward, init_network, load_model, save_model, simulate
from .backprop import Gradient, LossValue, batch_gradient, backpropagate, loss, numeric_gradient
from .optimizers import Algorithm, EpochLog, StopReason, TrainConfig, emit_curve, train
from .data import Dataset, PatientRecord, generate_synthetic, load_csv, split_dataset
from .evaluation import classify, compare_algorithms, evaluate

__version__ = "0.1.0"
