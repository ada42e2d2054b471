"""Patient tables: CSV I/O, stratified splitting, scaling and a synthetic cohort."""
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, ParseError, StratificationError

FEATURES = ("age", "prostate_size_g", "psa_ng_ml", "free_psa")
LABEL = "label"
SPLIT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class PatientRecord:
    age: float
    prostate_size: float
    psa: float
    free_psa: float
    label: Optional[int] = None

    @property
    def features(self):
        return (self.age, self.prostate_size, self.psa, self.free_psa)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-oriented patient table backed by a (n, 4) feature array.

    ``labels`` is None for unlabeled data (prediction inputs).
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64).reshape(-1, len(FEATURES))
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if y.shape[0] != x.shape[0]:
                raise ValueError("label count does not match record count")
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    def __iter__(self) -> Iterator[PatientRecord]:
        for i, row in enumerate(self.features):
            label = None if self.labels is None else int(self.labels[i])
            yield PatientRecord(*map(float, row), label=label)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return np.array_equal(self.features, other.features) and same_labels

    @classmethod
    def from_records(cls, records, provenance="") -> "Dataset":
        records = list(records)
        feats = [r.features for r in records]
        labels = None
        if records and all(r.label is not None for r in records):
            labels = [r.label for r in records]
        return cls(np.array(feats, dtype=np.float64).reshape(-1, 4), labels, provenance)

    def subset(self, index, provenance=None) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], labels, provenance or self.provenance)

    def targets(self) -> np.ndarray:
        if self.labels is None:
            raise DegenerateInputError(f"dataset {self.provenance!r} has no labels")
        return self.labels.astype(np.float64).reshape(-1, 1)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum()) if self.labels is not None else 0


@dataclass(frozen=True)
class DatasetSplit:
    train: Dataset
    validation: Dataset
    test: Dataset
    seed: int
    ratios: tuple = SPLIT_RATIOS


def _parse_cell(text, lineno, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {lineno}, column '{column}': not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {lineno}, column '{column}': non-finite value {text!r}")
    if value < 0:
        raise ParseError(f"row {lineno}, column '{column}': negative value {text!r}")
    return value


def load_csv(path, require_label: bool = True) -> Dataset:
    """Read a patient CSV with header ``age,prostate_size_g,psa_ng_ml,free_psa,label``.

    With ``require_label=False`` the label column may be left out. A
    completely empty file gives an empty dataset. Row numbers in errors count
    the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Dataset(np.empty((0, 4)), None if not require_label else np.empty(0), str(path))
        header = [h.strip() for h in header]
        missing = [c for c in FEATURES if c not in header]
        has_label = LABEL in header
        if require_label and not has_label:
            missing.append(LABEL)
        if missing:
            raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(c) for c in FEATURES]
        label_col = header.index(LABEL) if has_label else None
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            feats.append([_parse_cell(row[c].strip(), lineno, FEATURES[k]) for k, c in enumerate(cols)])
            if label_col is not None:
                cell = row[label_col].strip()
                if cell not in ("0", "1", "0.0", "1.0"):
                    raise ParseError(f"{path}: row {lineno}, column 'label': expected 0 or 1, got {cell!r}")
                labels.append(int(float(cell)))
    return Dataset(np.array(feats, dtype=np.float64).reshape(-1, 4),
                   labels if label_col is not None else None, str(path))


def _cell(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def save_csv(d: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(FEATURES) + ([LABEL] if d.labels is not None else [])
        writer.writerow(header)
        for i, row in enumerate(d.features):
            cells = [_cell(v) for v in row]
            if d.labels is not None:
                cells.append(str(int(d.labels[i])))
            writer.writerow(cells)


def largest_remainder(total: int, weights) -> list:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Leftover units go to the largest fractional parts; ties favour the later
    position, so with ratios (0.6, 0.2, 0.2) a spare unit lands in the test
    part before the validation part.
    """
    weights = np.asarray(weights, dtype=np.float64)
    ideal = total * weights / weights.sum()
    counts = np.floor(ideal).astype(int)
    spare = total - int(counts.sum())
    frac = ideal - counts
    order = sorted(range(len(weights)), key=lambda i: (-round(frac[i], 12), -i))
    for i in order[:spare]:
        counts[i] += 1
    return [int(c) for c in counts]


def split_dataset(d: Dataset, seed: int, ratios=SPLIT_RATIOS) -> DatasetSplit:
    """Seeded, label-stratified train/validation/test split.

    Part sizes come from largest-remainder rounding of the whole table; the
    positives in each part are apportioned the same way, so each part's class
    mix is within one record of the overall mix. Records keep their original
    relative order inside each part.
    """
    if d.labels is None:
        raise StratificationError("cannot stratify an unlabeled dataset")
    n = len(d)
    if n < 5:
        raise DegenerateInputError(f"need at least 5 records to split, got {n}")
    pos_idx = np.flatnonzero(d.labels == 1)
    neg_idx = np.flatnonzero(d.labels == 0)
    if pos_idx.size == 0 or neg_idx.size == 0:
        raise StratificationError("both classes must be present to stratify")
    sizes = largest_remainder(n, ratios)
    pos_counts = largest_remainder(pos_idx.size, sizes)
    neg_counts = [s - p for s, p in zip(sizes, pos_counts)]

    rng = np.random.default_rng(seed)
    pos_idx = rng.permutation(pos_idx)
    neg_idx = rng.permutation(neg_idx)
    parts = []
    p0 = q0 = 0
    for pc, nc in zip(pos_counts, neg_counts):
        idx = np.sort(np.concatenate([pos_idx[p0:p0 + pc], neg_idx[q0:q0 + nc]]))
        p0 += pc
        q0 += nc
        parts.append(idx)
    names = ("train", "validation", "test")
    subsets = [d.subset(idx, f"{d.provenance}[{name}]") for idx, name in zip(parts, names)]
    return DatasetSplit(*subsets, seed=seed, ratios=tuple(ratios))


@dataclass(frozen=True)
class Normalizer:
    """Per-feature min-max scaling fitted on training data."""

    minimum: np.ndarray
    maximum: np.ndarray

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - self.minimum) / safe, 0.0)

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return self.minimum + z * (self.maximum - self.minimum)

    def to_dict(self) -> dict:
        return {"min": [float(v) for v in self.minimum], "max": [float(v) for v in self.maximum]}

    @classmethod
    def from_dict(cls, doc) -> "Normalizer":
        return cls(np.asarray(doc["min"], dtype=np.float64), np.asarray(doc["max"], dtype=np.float64))


def fit_normalizer(train: Dataset) -> Normalizer:
    if len(train) == 0:
        raise DegenerateInputError("cannot fit a normalizer on an empty dataset")
    return Normalizer(train.features.min(axis=0), train.features.max(axis=0))


def apply_normalizer(n: Normalizer, d: Dataset) -> Dataset:
    return Dataset(n.transform(d.features), d.labels, d.provenance)


# Per-class sampling distributions for the synthetic cohort:
# (mean, sd, low, high) for age, prostate size, psa, free psa.
SYNTHETIC_PROFILES = {
    1: ((66.0, 7.0, 36.0, 80.0), (48.0, 16.0, 10.0, 120.0), (8.0, 3.5, 0.0, 18.0), (12.0, 6.0, 0.0, 60.0)),
    0: ((55.0, 8.0, 36.0, 80.0), (42.0, 16.0, 10.0, 120.0), (3.5, 2.5, 0.0, 18.0), (24.0, 9.0, 0.0, 60.0)),
}
# Linear risk score on the raw features; a record is kept only when its score
# sits on its class's side of zero with at least this margin.
SCORE_WEIGHTS = np.array([0.06, 0.005, 0.35, -0.08])
SCORE_OFFSET = -4.9
SCORE_MARGIN = 0.25


def risk_score(features) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) @ SCORE_WEIGHTS + SCORE_OFFSET


def _draw_class(rng, label, count):
    out = np.empty((0, 4))
    while out.shape[0] < count:
        batch = 4 * (count - out.shape[0]) + 16
        cols = [np.clip(rng.normal(mu, sd, batch), lo, hi) for mu, sd, lo, hi in SYNTHETIC_PROFILES[label]]
        cand = np.round(np.column_stack(cols), 1)
        score = risk_score(cand)
        keep = score > SCORE_MARGIN if label == 1 else score < -SCORE_MARGIN
        out = np.vstack([out, cand[keep]])
    return out[:count]


def generate_synthetic(seed: int, n: int, positive_fraction: float = 0.78) -> Dataset:
    """Seeded stand-in cohort shaped like a prostate screening population.

    Positives are older with higher PSA and lower free PSA. Every single
    feature overlaps between the classes, but the classes are separated by a
    margin along ``risk_score``, so a small network can fit them exactly.
    Exactly ``round(n * positive_fraction)`` records are positive.
    """
    if n < 10:
        raise ConfigurationError(f"n must be >= 10, got {n}")
    if not 0 < positive_fraction < 1:
        raise ConfigurationError(f"positive_fraction must lie in (0, 1), got {positive_fraction}")
    n_pos = int(round(n * positive_fraction))
    if n_pos in (0, n):
        raise ConfigurationError("positive_fraction leaves one class empty")
    rng = np.random.default_rng(seed)
    pos = _draw_class(rng, 1, n_pos)
    neg = _draw_class(rng, 0, n - n_pos)
    feats = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n - n_pos, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(feats[order], labels[order], f"synthetic(seed={seed}, n={n}, p={positive_fraction})")
