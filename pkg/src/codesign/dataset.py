"""Tabular CSV intake, min-max normalization and deterministic k-fold plans."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np


class DataError(ValueError):
    """Raised for malformed datasets. Carries the offending row/column when known."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_names: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if labels.shape != (feats.shape[0],):
            raise DataError("one label per row required")
        if not np.all(np.isfinite(feats)):
            raise DataError("features must be finite")
        if self.n_classes < 2:
            raise DataError(f"need at least 2 classes, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError("label outside [0, n_classes)")
        if feats.shape[0] < self.n_classes:
            raise DataError("fewer rows than classes")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def subset(self, rows: np.ndarray, name: Optional[str] = None) -> "Dataset":
        # Used for fold sides; a side may legitimately miss classes, so bypass the class-count check.
        sub = object.__new__(Dataset)
        feats = self.features[rows]
        labels = self.labels[rows]
        feats.setflags(write=False)
        labels.setflags(write=False)
        for k, v in dict(name=name or self.name, features=feats, labels=labels,
                         n_classes=self.n_classes, class_names=self.class_names,
                         feature_names=self.feature_names).items():
            object.__setattr__(sub, k, v)
        return sub


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


@dataclass(frozen=True)
class NormStats:
    minimum: np.ndarray
    maximum: np.ndarray


def _read_rows(path: Path, comment: str = "#") -> List[List[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith(comment)]
    return rows


def load_csv(
    path: Union[str, Path],
    label_column: Union[str, int] = -1,
    has_header: bool = True,
    name: Optional[str] = None,
) -> Dataset:
    """Load a numeric CSV with one label column.

    Labels are mapped to integer indices in order of first appearance. Lines
    starting with ``#`` are ignored, which lets report files carry footers.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"empty file: {path}")

    header: Optional[List[str]] = None
    if has_header:
        header, rows = [h.strip() for h in rows[0]], rows[1:]
        if not rows:
            raise DataError(f"no data rows in {path}")
    width = len(header) if header is not None else len(rows[0])

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise DataError(f"label column {label_column!r} given by name but file has no header")
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if label_idx < 0:
            label_idx += width
        if not 0 <= label_idx < width:
            raise DataError(f"label column index {label_column} out of range for {width} columns",
                            column=int(label_column))

    line_offset = 2 if has_header else 1
    feats = np.empty((len(rows), width - 1), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64)
    class_index: dict = {}
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"ragged row: expected {width} cells, got {len(row)}", row=i + line_offset)
        j_out = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"non-numeric feature cell {cell!r}", row=i + line_offset, column=j) from None
            if not math.isfinite(v):
                raise DataError(f"non-finite feature cell {cell!r}", row=i + line_offset, column=j)
            feats[i, j_out] = v
            j_out += 1
        lab = row[label_idx].strip()
        labels[i] = class_index.setdefault(lab, len(class_index))

    feature_names = tuple(h for j, h in enumerate(header) if j != label_idx) if header else ()
    return Dataset(
        name=name or path.stem,
        features=feats,
        labels=labels,
        n_classes=len(class_index),
        class_names=tuple(class_index),
        feature_names=feature_names,
    )


def make_folds(ds: Union[Dataset, int], k: int, seed: int = 0) -> FoldPlan:
    """Shuffle rows with ``seed`` and deal them round-robin into ``k`` folds."""
    n = ds if isinstance(ds, int) else ds.n_rows
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    assignments.setflags(write=False)
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def train_test_split(n: int, test_fraction: float, seed: int = 0):
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    n_test = min(n - 1, max(1, int(round(n * test_fraction))))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def normalize_fit(rows: np.ndarray) -> NormStats:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("normalize_fit needs a non-empty 2-D matrix")
    return NormStats(minimum=rows.min(axis=0), maximum=rows.max(axis=0))


def normalize_apply(stats: NormStats, rows: np.ndarray) -> np.ndarray:
    """Map each feature linearly so the fitted range becomes [0, 1]; no clamping.

    Features that were constant during fitting map to 0.
    """
    rows = np.asarray(rows, dtype=np.float64)
    span = stats.maximum - stats.minimum
    safe = np.where(span > 0, span, 1.0)
    out = (rows - stats.minimum) / safe
    out[:, span <= 0] = 0.0
    return out


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Sequence], footer: Sequence[str] = ()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        for line in footer:
            fh.write(f"# {line}\n")
