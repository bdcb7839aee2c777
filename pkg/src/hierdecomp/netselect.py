"""Adaptive network selection: pick each cluster's classifier from a fixed
candidate set, accumulate a meta-dataset of (cluster statistics, winning
architecture), and train a regression selector that maps statistics to a
candidate.

Every candidate trains with the same seed and split, so identical candidates
score identically and the first one wins ties, matching the strict-improvement
update rule.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mlp
from .confmat import ConfusionMatrix, build_confusion, sub_confusion
from .datagen import Dataset, split as stratified_split
from .hiernet import HierarchicalModel, train_hierarchical
from .linkage import Clustering
from .util import derive_seed, run_tasks

__all__ = [
    "ClusterFeatures",
    "Candidate",
    "CandidateSet",
    "MetaRow",
    "MetaDataset",
    "Selector",
    "cluster_features",
    "select_best",
    "train_selector",
    "predict_config",
    "snap_to_candidate",
    "build_adaptive_hierarchical",
    "save_meta_csv",
    "load_meta_csv",
    "load_candidates_json",
    "save_candidates_json",
]

FEATURE_NAMES = (
    "n_classes",
    "mean_offdiag_confusion",
    "max_offdiag_confusion",
    "confusion_entropy",
    "sample_count",
)


@dataclass(frozen=True)
class ClusterFeatures:
    """Fixed-order statistics of one cluster's sub-confusion matrix."""

    n_classes: int
    mean_offdiag_confusion: float
    max_offdiag_confusion: float
    confusion_entropy: float
    sample_count: int

    def __post_init__(self) -> None:
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        stats = (
            self.mean_offdiag_confusion,
            self.max_offdiag_confusion,
            self.confusion_entropy,
        )
        if not all(np.isfinite(stats)):
            raise ValueError("cluster statistics must be finite")
        if self.confusion_entropy < 0:
            raise ValueError("entropy must be >= 0")

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.n_classes,
                self.mean_offdiag_confusion,
                self.max_offdiag_confusion,
                self.confusion_entropy,
                self.sample_count,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Candidate:
    """Architecture template: hidden widths only, output resized per cluster."""

    id: str
    hidden_layers: tuple[int, ...]
    dropout_rate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer widths must be >= 1")

    @property
    def n_layers(self) -> int:
        return len(self.hidden_layers)

    @property
    def total_units(self) -> int:
        return sum(self.hidden_layers)

    def config(self, input_dim: int, output_dim: int) -> mlp.MLPConfig:
        return mlp.MLPConfig(
            input_dim=input_dim,
            hidden_layers=self.hidden_layers,
            output_dim=output_dim,
            dropout_rate=self.dropout_rate,
        )


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        cands = tuple(self.candidates)
        if not cands:
            raise ValueError("candidate set is empty")
        ids = [c.id for c in cands]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique")
        object.__setattr__(self, "candidates", cands)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def by_id(self, candidate_id: str) -> Candidate:
        for cand in self.candidates:
            if cand.id == candidate_id:
                return cand
        raise ValueError(f"unknown candidate id {candidate_id!r}")


@dataclass(frozen=True)
class MetaRow:
    features: ClusterFeatures
    best_id: str
    best_layers: int
    best_total_hidden_units: int
    accuracies: tuple[tuple[str, float], ...] = ()


@dataclass
class MetaDataset:
    rows: list[MetaRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


def cluster_features(
    cm: ConfusionMatrix,
    cluster: Sequence[int],
    sample_count: int,
) -> ClusterFeatures:
    """Statistics of the row-normalized sub-confusion restricted to ``cluster``.

    Rows with no evaluations stay zero (they contribute zero entropy and no
    off-diagonal mass).
    """
    sub = sub_confusion(cm, sorted(int(c) for c in cluster))
    counts = sub.counts
    row_sums = counts.sum(axis=1)
    safe = np.where(row_sums == 0, 1.0, row_sums)
    p = counts / safe[:, None]
    k = sub.k
    if k == 1:
        mean_off = 0.0
        max_off = 0.0
    else:
        off = p[~np.eye(k, dtype=bool)]
        mean_off = float(off.mean())
        max_off = float(off.max())
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    entropy = float(terms.sum(axis=1).mean())
    return ClusterFeatures(
        n_classes=k,
        mean_offdiag_confusion=mean_off,
        max_offdiag_confusion=max_off,
        confusion_entropy=entropy,
        sample_count=int(sample_count),
    )


def _cluster_subset(
    features: np.ndarray,
    labels: np.ndarray,
    cluster: Sequence[int],
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Samples whose class is in the cluster, labels re-indexed locally."""
    members = sorted(int(c) for c in cluster)
    mask = np.isin(labels, members)
    local = {cid: pos for pos, cid in enumerate(members)}
    y_local = np.array([local[int(v)] for v in labels[mask]], dtype=np.int64)
    return features[mask], y_local, members


def _evaluate_candidates(
    x: np.ndarray,
    y_local: np.ndarray,
    n_classes: int,
    candidates: CandidateSet,
    spec: mlp.TrainSpec,
    holdout: float,
    split_seed: int,
) -> tuple[list[tuple[str, float]], ConfusionMatrix]:
    """Per-candidate holdout accuracies plus the first candidate's confusion."""
    if not 0.0 < holdout < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    ds = Dataset(features=x, labels=y_local, k=n_classes)
    train_ds, test_ds = stratified_split(ds, 1.0 - holdout, seed=split_seed)

    def make_task(cand: Candidate):
        def task() -> tuple[float, np.ndarray]:
            config = cand.config(x.shape[1], n_classes)
            model = mlp.train(train_ds.features, train_ds.labels, config, spec)
            probs = mlp.predict_proba(model, test_ds.features)
            predicted = np.argmax(probs, axis=1)
            return float(np.mean(predicted == test_ds.labels)), predicted

        return task

    results = run_tasks([make_task(c) for c in candidates])
    accuracies = [(cand.id, acc) for cand, (acc, _) in zip(candidates, results)]
    probe_predicted = results[0][1]
    probe_cm = build_confusion(test_ds.labels, probe_predicted, n_classes)
    return accuracies, probe_cm


def select_best(
    features: np.ndarray,
    labels: Sequence[int],
    cluster: Sequence[int],
    candidates: CandidateSet,
    spec: mlp.TrainSpec,
    holdout: float = 0.2,
    split_seed: int | None = None,
) -> tuple[str, list[tuple[str, float]]]:
    """Train every candidate on the cluster's samples and keep the best.

    Each candidate's output layer is resized to the cluster's class count,
    trained on a stratified split, and scored on the holdout. The winner is
    the strict argmax; ties keep the earliest candidate.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    xc, y_local, members = _cluster_subset(x, y, cluster)
    if len(set(members)) < 2:
        raise ValueError("cluster must contain at least 2 classes")
    if xc.shape[0] < 10:
        raise ValueError(f"cluster has {xc.shape[0]} samples, need at least 10")
    accuracies, _ = _evaluate_candidates(
        xc,
        y_local,
        len(members),
        candidates,
        spec,
        holdout,
        spec.seed if split_seed is None else split_seed,
    )
    best_id, best_acc = accuracies[0]
    for cand_id, acc in accuracies[1:]:
        if acc > best_acc:
            best_id, best_acc = cand_id, acc
    assert all(best_acc >= acc for _, acc in accuracies)
    return best_id, accuracies


@dataclass
class Selector:
    """Regression model over cluster statistics plus its candidate table.

    Features and targets are standardized internally; predictions snap to
    the nearest candidate in normalized (layers, units) space.
    """

    model: mlp.MLPModel
    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    candidates: CandidateSet


def snap_to_candidate(candidates: CandidateSet, layers: float, units: float) -> str:
    """Nearest candidate in (layer count, total hidden units) space.

    Each axis is normalized by the candidate set's range; ties prefer the
    smaller network (fewer units, then fewer layers, then listed first).
    """
    points = [(c.n_layers, c.total_units) for c in candidates]
    l_vals = [p[0] for p in points]
    u_vals = [p[1] for p in points]
    l_scale = (max(l_vals) - min(l_vals)) or 1.0
    u_scale = (max(u_vals) - min(u_vals)) or 1.0
    best_key = None
    best_id = None
    for idx, cand in enumerate(candidates):
        d2 = ((layers - cand.n_layers) / l_scale) ** 2 + (
            (units - cand.total_units) / u_scale
        ) ** 2
        key = (d2, cand.total_units, cand.n_layers, idx)
        if best_key is None or key < best_key:
            best_key = key
            best_id = cand.id
    return best_id


def train_selector(
    meta: MetaDataset,
    candidates: CandidateSet,
    spec: mlp.TrainSpec | None = None,
) -> Selector:
    """Fit the regression selector on (cluster features) -> (layers, units)."""
    if len(meta) < 5:
        raise ValueError(f"meta-dataset has {len(meta)} rows, need at least 5")
    x = np.vstack([row.features.as_vector() for row in meta.rows])
    t = np.array(
        [[row.best_layers, row.best_total_hidden_units] for row in meta.rows],
        dtype=np.float64,
    )
    feat_mean = x.mean(axis=0)
    feat_std = x.std(axis=0)
    feat_std[feat_std == 0] = 1.0
    target_mean = t.mean(axis=0)
    target_std = t.std(axis=0)
    target_std[target_std == 0] = 1.0
    xs = (x - feat_mean) / feat_std
    ts = (t - target_mean) / target_std
    if spec is None:
        spec = mlp.TrainSpec(learning_rate=0.01, momentum=0.9, epochs=400, batch_size=8, seed=0)
    config = mlp.MLPConfig(input_dim=x.shape[1], hidden_layers=(16,), output_dim=2)
    model = mlp.train_regressor(xs, ts, config, spec)
    return Selector(
        model=model,
        feat_mean=feat_mean,
        feat_std=feat_std,
        target_mean=target_mean,
        target_std=target_std,
        candidates=candidates,
    )


def predict_config(selector: Selector, features: ClusterFeatures) -> str:
    """Candidate id for a cluster: regress (layers, units), then snap."""
    xs = (features.as_vector() - selector.feat_mean) / selector.feat_std
    out = mlp.predict(selector.model, xs[None, :])[0]
    layers, units = out * selector.target_std + selector.target_mean
    return snap_to_candidate(selector.candidates, float(layers), float(units))


def build_adaptive_hierarchical(
    features: np.ndarray,
    labels: Sequence[int],
    clustering: Clustering,
    candidates: CandidateSet,
    spec: mlp.TrainSpec,
    holdout: float = 0.2,
    hier_candidate: Candidate | None = None,
) -> tuple[HierarchicalModel, MetaDataset]:
    """Per-cluster candidate selection followed by hierarchical training.

    For each cluster, the first candidate acts as the probe whose holdout
    confusion supplies the cluster statistics; the winning candidate becomes
    that cluster's assignment architecture. Degenerate clusters (fewer than
    2 classes or fewer than 10 samples) keep the first candidate, the
    initialization of the running best. The routing classifier uses
    ``hier_candidate`` (default: the first candidate) sized to the cluster
    count.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    meta = MetaDataset()
    assign_configs: list[mlp.MLPConfig] = []
    first = candidates.candidates[0]
    for i, cluster in enumerate(clustering.clusters):
        xc, y_local, members = _cluster_subset(x, y, cluster)
        n_classes = len(members)
        sample_count = xc.shape[0]
        if n_classes >= 2 and sample_count >= 10:
            accuracies, probe_cm = _evaluate_candidates(
                xc,
                y_local,
                n_classes,
                candidates,
                spec,
                holdout,
                derive_seed(spec.seed, f"select:{i}"),
            )
            best_id = accuracies[0][0]
            best_acc = accuracies[0][1]
            for cand_id, acc in accuracies[1:]:
                if acc > best_acc:
                    best_id, best_acc = cand_id, acc
        else:
            # too small to evaluate: keep the initialization of the running
            # best and record an empty (all-zero) confusion
            accuracies = []
            probe_cm = ConfusionMatrix(
                counts=np.zeros((n_classes, n_classes)), class_ids=tuple(range(n_classes))
            )
            best_id = first.id
        best = candidates.by_id(best_id)
        local_cm = ConfusionMatrix(counts=probe_cm.counts, class_ids=tuple(members), stage=1)
        meta.rows.append(
            MetaRow(
                features=cluster_features(local_cm, members, sample_count),
                best_id=best.id,
                best_layers=best.n_layers,
                best_total_hidden_units=best.total_units,
                accuracies=tuple(accuracies),
            )
        )
        assign_configs.append(best.config(x.shape[1], n_classes))

    routing = hier_candidate or first
    model = train_hierarchical(
        x,
        y,
        clustering,
        routing.config(x.shape[1], clustering.n_clusters),
        assign_configs,
        spec,
    )
    return model, meta


def save_meta_csv(meta: MetaDataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [*FEATURE_NAMES, "best_id", "best_layers", "best_total_hidden_units"]
        )
        for row in meta.rows:
            f = row.features
            writer.writerow(
                [
                    str(f.n_classes),
                    repr(f.mean_offdiag_confusion),
                    repr(f.max_offdiag_confusion),
                    repr(f.confusion_entropy),
                    str(f.sample_count),
                    row.best_id,
                    str(row.best_layers),
                    str(row.best_total_hidden_units),
                ]
            )


def load_meta_csv(path: str | Path) -> MetaDataset:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    expected = [*FEATURE_NAMES, "best_id", "best_layers", "best_total_hidden_units"]
    if not rows or rows[0] != expected:
        raise ValueError(f"{path}: unexpected meta-dataset header")
    meta = MetaDataset()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise ValueError(f"{path}: line {lineno}: expected {len(expected)} columns")
        meta.rows.append(
            MetaRow(
                features=ClusterFeatures(
                    n_classes=int(row[0]),
                    mean_offdiag_confusion=float(row[1]),
                    max_offdiag_confusion=float(row[2]),
                    confusion_entropy=float(row[3]),
                    sample_count=int(row[4]),
                ),
                best_id=row[5],
                best_layers=int(row[6]),
                best_total_hidden_units=int(row[7]),
            )
        )
    return meta


def load_candidates_json(path: str | Path) -> CandidateSet:
    """Candidate sets load from JSON: [{"id": ..., "hidden_layers": [...]}, ...]."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(payload, dict):
        payload = payload["candidates"]
    cands = tuple(
        Candidate(
            id=str(entry["id"]),
            hidden_layers=tuple(entry["hidden_layers"]),
            dropout_rate=float(entry.get("dropout_rate", 0.0)),
        )
        for entry in payload
    )
    return CandidateSet(candidates=cands)


def save_candidates_json(candidates: CandidateSet, path: str | Path) -> None:
    payload = [
        {"id": c.id, "hidden_layers": list(c.hidden_layers), "dropout_rate": c.dropout_rate}
        for c in candidates
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
