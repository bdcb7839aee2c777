"""Confusion-matrix construction and the transforms that drive clustering.

A confusion matrix (rows = true class, columns = predicted class) is turned
into two derived views:

* a symmetric, zero-diagonal dissimilarity matrix used for linkage
  clustering, and
* a column-normalized posterior matrix whose entry (i, j) is the probability
  that a sample predicted as class j truly belongs to class i, used for
  overlap expansion.

All types are immutable after construction; operations are pure functions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "DissimilarityMatrix",
    "PosteriorMatrix",
    "build_confusion",
    "to_dissimilarity",
    "column_normalize",
    "sub_confusion",
    "load_confusion_csv",
    "save_confusion_csv",
]

COLUMN_SUM_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K count matrix: rows index true classes, columns predictions.

    ``stage`` is the hierarchy stage that produced the matrix (0 for the
    initial flat probe).
    """

    counts: np.ndarray
    class_ids: tuple[int, ...]
    stage: int = 0

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square, got shape {counts.shape}")
        if counts.shape[0] < 1:
            raise ValueError("confusion matrix must have dimension >= 1")
        if not np.isfinite(counts).all():
            raise ValueError("counts contain non-finite values")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        ids = tuple(int(c) for c in self.class_ids)
        if len(ids) != counts.shape[0]:
            raise ValueError(
                f"{len(ids)} class ids for a {counts.shape[0]}x{counts.shape[0]} matrix"
            )
        if len(set(ids)) != len(ids):
            raise ValueError("class ids must be unique")
        if self.stage < 0:
            raise ValueError("stage must be >= 0")
        object.__setattr__(self, "counts", _freeze(counts))
        object.__setattr__(self, "class_ids", ids)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    def index_of(self, class_id: int) -> int:
        try:
            return self.class_ids.index(class_id)
        except ValueError:
            raise ValueError(f"unknown class id {class_id}") from None


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric, zero-diagonal matrix of class dissimilarities in [0, 1]."""

    values: np.ndarray
    class_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"values must be square, got shape {values.shape}")
        ids = tuple(int(c) for c in self.class_ids)
        if len(ids) != values.shape[0]:
            raise ValueError("class id count does not match matrix dimension")
        if not np.array_equal(values, values.T):
            raise ValueError("dissimilarity matrix must be exactly symmetric")
        if np.diagonal(values).any():
            raise ValueError("dissimilarity diagonal must be zero")
        if (values < 0).any() or (values > 1).any():
            raise ValueError("dissimilarities must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "class_ids", ids)

    @property
    def k(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PosteriorMatrix:
    """Column-normalized confusion matrix.

    Entry (i, j) is the probability that a sample is of true class
    ``class_ids[i]`` given that it was predicted as ``class_ids[j]``.
    Predicted classes that never occur produce all-zero columns; their class
    ids are recorded in ``zero_columns``.
    """

    values: np.ndarray
    class_ids: tuple[int, ...]
    zero_columns: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"values must be square, got shape {values.shape}")
        ids = tuple(int(c) for c in self.class_ids)
        if len(ids) != values.shape[0]:
            raise ValueError("class id count does not match matrix dimension")
        if (values < 0).any() or (values > 1).any():
            raise ValueError("posteriors must lie in [0, 1]")
        zero = tuple(int(c) for c in self.zero_columns)
        if not set(zero) <= set(ids):
            raise ValueError("zero_columns must reference known class ids")
        sums = values.sum(axis=0)
        for j, cid in enumerate(ids):
            if cid in zero:
                if sums[j] != 0.0:
                    raise ValueError(f"column for class {cid} flagged zero but is not")
            elif abs(sums[j] - 1.0) > COLUMN_SUM_TOL:
                raise ValueError(
                    f"column for class {cid} sums to {sums[j]!r}, expected 1"
                )
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "zero_columns", zero)

    @property
    def k(self) -> int:
        return self.values.shape[0]


def build_confusion(
    true_labels: Sequence[int],
    predicted_labels: Sequence[int],
    k: int,
    stage: int = 0,
    class_ids: Sequence[int] | None = None,
) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a K x K confusion matrix.

    ``class_ids`` defaults to 0..K-1; labels are positional indices into it.
    """
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.ndim != 1 or p.ndim != 1:
        raise ValueError("labels must be 1-D sequences")
    if t.size != p.size:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted")
    if t.size == 0:
        raise ValueError("labels are empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.min() < 0 or arr.max() >= k:
            raise ValueError(f"{name} labels out of range [0, {k})")
    counts = np.zeros((k, k), dtype=np.float64)
    np.add.at(counts, (t, p), 1.0)
    ids = tuple(range(k)) if class_ids is None else tuple(int(c) for c in class_ids)
    return ConfusionMatrix(counts=counts, class_ids=ids, stage=stage)


def to_dissimilarity(cm: ConfusionMatrix) -> DissimilarityMatrix:
    """Transform a confusion matrix into a class dissimilarity matrix.

    Three steps on the row-normalized matrix C': D = 1 - C', zero the
    diagonal, then symmetrize with D = 0.5 * (D + D^T). The symmetrized
    upper triangle is mirrored onto the lower so symmetry is exact, not
    approximate. Row normalization makes the result invariant to scaling
    any row of counts by a positive factor.
    """
    row_sums = cm.counts.sum(axis=1)
    zero_rows = np.flatnonzero(row_sums == 0)
    if zero_rows.size:
        bad = [cm.class_ids[i] for i in zero_rows]
        raise ValueError(f"classes never evaluated (zero confusion rows): {bad}")
    normalized = cm.counts / row_sums[:, None]
    d = 1.0 - normalized
    np.fill_diagonal(d, 0.0)
    upper = np.triu(0.5 * (d + d.T), k=1)
    return DissimilarityMatrix(values=upper + upper.T, class_ids=cm.class_ids)


def column_normalize(cm: ConfusionMatrix) -> PosteriorMatrix:
    """Normalize each column to sum to 1, flagging all-zero columns.

    The result reads as class posteriors: entry (i, j) is the likelihood of
    true class i among samples predicted as class j. All-zero columns
    (classes never predicted) are left zero rather than raising.
    """
    col_sums = cm.counts.sum(axis=0)
    zero_cols = np.flatnonzero(col_sums == 0)
    safe = np.where(col_sums == 0, 1.0, col_sums)
    values = cm.counts / safe[None, :]
    flagged = tuple(cm.class_ids[j] for j in zero_cols)
    return PosteriorMatrix(values=values, class_ids=cm.class_ids, zero_columns=flagged)


def sub_confusion(cm: ConfusionMatrix, subset: Sequence[int]) -> ConfusionMatrix:
    """Principal submatrix restricted to ``subset``, in subset order."""
    ids = [int(c) for c in subset]
    if not ids:
        raise ValueError("subset is empty")
    if len(set(ids)) != len(ids):
        raise ValueError("subset contains duplicate class ids")
    positions = [cm.index_of(c) for c in ids]
    counts = cm.counts[np.ix_(positions, positions)]
    return ConfusionMatrix(counts=counts, class_ids=tuple(ids), stage=cm.stage)


def _format_count(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def save_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> None:
    """Write a confusion matrix as CSV: class-id header row, then K count rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([str(c) for c in cm.class_ids])
        for row in cm.counts:
            writer.writerow([_format_count(v) for v in row])


def load_confusion_csv(path: str | Path, stage: int = 0) -> ConfusionMatrix:
    """Read a confusion matrix written by :func:`save_confusion_csv`."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty confusion CSV")
    try:
        ids = tuple(int(c) for c in rows[0])
    except ValueError as exc:
        raise ValueError(f"{path}: line 1: non-integer class id ({exc})") from None
    k = len(ids)
    if len(rows) != k + 1:
        raise ValueError(f"{path}: expected {k} count rows, found {len(rows) - 1}")
    counts = np.zeros((k, k), dtype=np.float64)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != k:
            raise ValueError(f"{path}: line {i}: expected {k} columns, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                counts[i - 2, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: line {i}: non-numeric count {cell!r}"
                ) from None
    return ConfusionMatrix(counts=counts, class_ids=ids, stage=stage)
