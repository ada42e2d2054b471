"""Thresholded classification, confusion counts and algorithm comparison tables."""
import csv
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, apply_normalizer, fit_normalizer, split_dataset
from .errors import BatchNetError, DimensionError
from .network import Network, init_network, simulate
from .optimizers import TrainConfig, train

DEFAULT_THRESHOLD = 0.5
DEFAULT_HIDDEN = (8, 8)
TABLE_HEADER = ("algorithm", "epochs", "stop_reason", "precision", "accuracy", "fp", "wall_time_s")


def classify(outputs, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """1 where ``output >= threshold`` (ties go to the positive class), else 0."""
    return (np.asarray(outputs, dtype=np.float64) >= threshold).astype(np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_labels(cls, predicted, actual) -> "ConfusionMatrix":
        predicted = np.asarray(predicted).astype(bool)
        actual = np.asarray(actual).astype(bool)
        return cls(
            tp=int(np.sum(predicted & actual)),
            fp=int(np.sum(predicted & ~actual)),
            tn=int(np.sum(~predicted & ~actual)),
            fn=int(np.sum(~predicted & actual)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def precision(self) -> Optional[float]:
        flagged = self.tp + self.fp
        return self.tp / flagged if flagged else None

    @property
    def accuracy(self) -> Optional[float]:
        return (self.tp + self.tn) / self.total if self.total else None


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    threshold: float
    dataset: str = ""
    algorithm: str = ""

    @property
    def precision(self) -> Optional[float]:
        return self.confusion.precision

    @property
    def accuracy(self) -> Optional[float]:
        return self.confusion.accuracy

    @property
    def false_positives(self) -> int:
        return self.confusion.fp


def evaluate(net: Network, d: Dataset, threshold: float = DEFAULT_THRESHOLD, algorithm: str = "") -> EvalReport:
    """Simulate ``net`` on ``d`` and count agreements with its labels."""
    if net.input_dim != d.features.shape[1]:
        raise DimensionError(f"network expects {net.input_dim} features, data has {d.features.shape[1]}")
    outputs = simulate(net, d.features)[:, 0] if len(d) else np.empty(0)
    predicted = classify(outputs, threshold)
    confusion = ConfusionMatrix.from_labels(predicted, d.targets()[:, 0])
    return EvalReport(confusion, threshold, d.provenance, algorithm)


@dataclass(frozen=True)
class ComparisonRow:
    algorithm: str
    epochs: Optional[int]
    stop_reason: str
    precision: Optional[float]
    accuracy: Optional[float]
    fp: Optional[int]
    wall_time_s: float
    error: str = ""


def prepare_split(d: Dataset, seed: int, normalize: bool = True):
    """Split ``d`` and, unless ``normalize`` is False, scale with train statistics.

    Returns ``(split, normalizer_or_None)``.
    """
    split = split_dataset(d, seed)
    if not normalize:
        return split, None
    scaler = fit_normalizer(split.train)
    split = replace(
        split,
        train=apply_normalizer(scaler, split.train),
        validation=apply_normalizer(scaler, split.validation),
        test=apply_normalizer(scaler, split.test),
    )
    return split, scaler


def compare_algorithms(
    d: Dataset,
    configs: Sequence[TrainConfig],
    seed: int,
    threshold: float = DEFAULT_THRESHOLD,
    hidden: Sequence[int] = DEFAULT_HIDDEN,
    normalize: bool = True,
) -> list:
    """Train every config on one shared split and score it on the test part.

    All rows start from the same initial network (seeded by ``seed``). A
    training failure becomes a row with ``error`` set instead of aborting the
    table.
    """
    if not configs:
        raise ValueError("at least one training config is required")
    split, _ = prepare_split(d, seed, normalize)
    start_net = init_network(4, hidden, 1, seed=seed)
    train_xy = (split.train.features, split.train.targets())
    val_xy = (split.validation.features, split.validation.targets())
    rows = []
    for config in configs:
        name = config.algorithm.value
        t0 = time.perf_counter()
        try:
            net, history, reason = train(start_net, train_xy, val_xy, config)
        except BatchNetError as exc:
            rows.append(ComparisonRow(name, None, "error", None, None, None,
                                      time.perf_counter() - t0, str(exc)))
            continue
        elapsed = time.perf_counter() - t0
        report = evaluate(net, split.test, threshold, name)
        rows.append(ComparisonRow(name, history.epochs, reason.value, report.precision,
                                  report.accuracy, report.false_positives, elapsed))
    return rows


def _metric(value) -> str:
    return "" if value is None else f"{value:.4f}"


def _row_cells(row: ComparisonRow, timing: bool):
    return [
        row.algorithm,
        "" if row.epochs is None else str(row.epochs),
        row.stop_reason,
        _metric(row.precision),
        _metric(row.accuracy),
        "" if row.fp is None else str(row.fp),
        f"{row.wall_time_s:.3f}" if timing else "",
    ]


def write_table_csv(rows, path, timing: bool = False) -> None:
    """Write the comparison table as CSV.

    Wall time is left blank unless ``timing`` is set, which keeps repeated
    runs byte-identical.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for row in rows:
            writer.writerow(_row_cells(row, timing))


def format_table(rows, timing: bool = False) -> str:
    cells = [list(TABLE_HEADER)] + [_row_cells(r, timing) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(TABLE_HEADER))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in cells]
    return "\n".join(lines) + "\n"
