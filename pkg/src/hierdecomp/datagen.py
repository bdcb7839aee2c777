"""Dataset loading, saving, stratified splitting, and a planted-hierarchy
synthetic generator.

The generator lays out Gaussian class clouds with unit within-class sigma:
group centers are mutually at least ``coarse_separation`` apart, and each
class center sits exactly ``fine_separation`` away from its group center
along seeded orthonormal directions (random unit directions once a group
has more classes than dimensions). That gives full control over how
separable the coarse structure is versus the fine structure.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "SynthSpec",
    "generate",
    "split",
    "load_dataset_csv",
    "save_dataset_csv",
]


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    class_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got {x.shape}")
        if y.ndim != 1 or y.size != x.shape[0]:
            raise ValueError("labels must be 1-D and match the number of samples")
        if not np.isfinite(x).all():
            raise ValueError("features contain non-finite values")
        if y.min() < 0 or y.max() >= self.k:
            raise ValueError(f"labels out of range [0, {self.k})")
        if self.class_names is not None and len(self.class_names) != self.k:
            raise ValueError("class_names length must equal k")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SynthSpec:
    coarse_groups: int
    classes_per_group: int
    samples_per_class: int
    dim: int
    coarse_separation: float
    fine_separation: float
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("coarse_groups", "classes_per_group", "samples_per_class", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.coarse_separation < 0 or self.fine_separation < 0:
            raise ValueError("separations must be >= 0")


def _group_centers(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Group centers with pairwise distance >= coarse_separation.

    With enough dimensions the centers go on scaled coordinate axes, which
    guarantees the spacing outright; otherwise rejection sampling inside a
    generous box.
    """
    g, d, sep = spec.coarse_groups, spec.dim, spec.coarse_separation
    if g == 1:
        return np.zeros((1, d))
    if d >= g:
        centers = np.zeros((g, d))
        for i in range(g):
            centers[i, i] = sep
        return centers
    side = sep * (g ** (1.0 / d) + 2.0)
    centers: list[np.ndarray] = []
    for _ in range(100_000):
        cand = rng.uniform(-side, side, size=d)
        if all(np.linalg.norm(cand - c) >= sep for c in centers):
            centers.append(cand)
            if len(centers) == g:
                return np.vstack(centers)
    raise RuntimeError("could not place group centers; raise dim or lower separation")


def _fine_directions(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Unit directions for one group's class centers, orthonormal when dim allows."""
    cpg, d = spec.classes_per_group, spec.dim
    if cpg <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, cpg)))
        return q.T
    directions = rng.standard_normal((cpg, d))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return directions / norms


def generate(spec: SynthSpec) -> Dataset:
    """Deterministic Gaussian clouds with planted coarse/fine hierarchy.

    Class k = group * classes_per_group + j; samples are laid out
    class-major. Within-class sigma is 1, so separations read in sigma units.
    """
    rng = np.random.default_rng(spec.seed)
    groups = _group_centers(spec, rng)
    k = spec.coarse_groups * spec.classes_per_group
    centers = np.zeros((k, spec.dim))
    for g in range(spec.coarse_groups):
        directions = _fine_directions(spec, rng)
        for j in range(spec.classes_per_group):
            centers[g * spec.classes_per_group + j] = (
                groups[g] + spec.fine_separation * directions[j]
            )
    n = k * spec.samples_per_class
    features = np.empty((n, spec.dim))
    labels = np.empty(n, dtype=np.int64)
    for c in range(k):
        lo = c * spec.samples_per_class
        hi = lo + spec.samples_per_class
        features[lo:hi] = centers[c] + rng.standard_normal((spec.samples_per_class, spec.dim))
        labels[lo:hi] = c
    return Dataset(features=features, labels=labels, k=k)


def split(ds: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified train/test split: per class, ``fraction`` goes to train.

    Per-class counts round to the nearest sample, clamped so both sides keep
    at least one; sample order within each side follows the original dataset.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(ds.k):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise ValueError(f"class {c} has a single sample and cannot be split")
        n_train = int(round(fraction * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        perm = rng.permutation(members.size)
        train_idx.append(np.sort(members[perm[:n_train]]))
        test_idx.append(np.sort(members[perm[n_train:]]))
    def take(idx: np.ndarray) -> Dataset:
        return Dataset(
            features=ds.features[idx],
            labels=ds.labels[idx],
            k=ds.k,
            class_names=ds.class_names,
        )

    return take(np.concatenate(train_idx)), take(np.concatenate(test_idx))


def save_dataset_csv(ds: Dataset, path: str | Path) -> None:
    """Write ``label,f0,f1,...`` rows; floats use shortest round-trip repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(ds.dim)])
        for label, row in zip(ds.labels, ds.features):
            writer.writerow([str(int(label))] + [repr(float(v)) for v in row])


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset CSV; the class count is max label + 1."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty dataset file")
    header = rows[0]
    if not header or header[0] != "label":
        raise ValueError(f"{path}: line 1: header must start with 'label'")
    width = len(header)
    if width < 2:
        raise ValueError(f"{path}: line 1: no feature columns")
    features: list[list[float]] = []
    labels: list[int] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(
                f"{path}: line {lineno}: expected {width} columns, got {len(row)}"
            )
        try:
            label = int(row[0])
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-integer label {row[0]!r}") from None
        if label < 0:
            raise ValueError(f"{path}: line {lineno}: negative label {label}")
        vals = []
        for name, cell in zip(header[1:], row[1:]):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric value {cell!r} in column {name}"
                ) from None
        labels.append(label)
        features.append(vals)
    if not labels:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        k=max(labels) + 1,
    )
