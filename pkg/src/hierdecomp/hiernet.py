"""Two-stage hierarchical classifier: cluster routing plus per-cluster class
assignment.

A hierarchy classifier predicts which cluster a sample belongs to; the top-k
clusters' assignment classifiers then score their local classes. A candidate
class's confidence is the product of its cluster probability and its local
class probability, and a class reachable through several clusters keeps its
best-scoring path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mlp
from .linkage import Clustering, load_clustering_json, save_clustering_json
from .util import derive_seed, run_tasks

__all__ = [
    "HierarchicalModel",
    "Prediction",
    "coarse_labels",
    "train_hierarchical",
    "infer",
    "infer_batch",
    "evaluate_hierarchical",
    "save_bundle",
    "load_bundle",
]


@dataclass(frozen=True)
class Prediction:
    class_id: int
    confidence: float
    path: tuple[int, int]
    alternatives: tuple[tuple[int, float], ...]


@dataclass
class HierarchicalModel:
    clustering: Clustering
    hierarchy_clf: mlp.MLPModel
    assign_clfs: list[mlp.MLPModel]
    local_to_global: list[tuple[int, ...]]
    top_k: int

    def __post_init__(self) -> None:
        c = self.clustering.n_clusters
        if len(self.assign_clfs) != c or len(self.local_to_global) != c:
            raise ValueError("one assignment classifier and index map per cluster")
        if self.hierarchy_clf.config.output_dim != c:
            raise ValueError("hierarchy classifier width must equal the cluster count")
        for i, (clf, mapping, cluster) in enumerate(
            zip(self.assign_clfs, self.local_to_global, self.clustering.clusters)
        ):
            if clf.config.output_dim != len(cluster):
                raise ValueError(f"classifier {i} width does not match cluster size")
            if sorted(mapping) != list(cluster):
                raise ValueError(f"index map {i} is not a bijection onto cluster {i}")
        if not 1 <= self.top_k <= c:
            raise ValueError(f"top_k must be in [1, {c}]")

    @property
    def n_clusters(self) -> int:
        return self.clustering.n_clusters


def coarse_labels(clustering: Clustering, fine_labels: Sequence[int]) -> np.ndarray:
    """Cluster index per sample, resolved through the disjoint cluster cores."""
    index = clustering.core_index()
    out = np.empty(len(fine_labels), dtype=np.int64)
    for i, label in enumerate(fine_labels):
        try:
            out[i] = index[int(label)]
        except KeyError:
            raise ValueError(f"class {int(label)} is in no cluster core") from None
    return out


def train_hierarchical(
    features: np.ndarray,
    fine_labels: Sequence[int],
    clustering: Clustering,
    hier_config: mlp.MLPConfig,
    assign_configs: Sequence[mlp.MLPConfig],
    spec: mlp.TrainSpec,
    top_k: int | None = None,
) -> HierarchicalModel:
    """Train the routing classifier and one assignment classifier per cluster.

    The routing classifier trains on core-cluster labels (cores stay mutually
    exclusive even when clusters overlap). Assignment classifier i trains on
    every sample whose class belongs to cluster i, so overlapped classes
    contribute to each cluster containing them. Classifier i's seed is
    ``spec.seed + i``; single-class clusters get a constant classifier.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(fine_labels, dtype=np.int64)
    c = clustering.n_clusters
    if len(assign_configs) != c:
        raise ValueError(f"expected {c} assignment configs, got {len(assign_configs)}")
    for i, (config, cluster) in enumerate(zip(assign_configs, clustering.clusters)):
        if len(cluster) >= 2 and config.output_dim != len(cluster):
            raise ValueError(
                f"assignment config {i} has output {config.output_dim}, cluster size {len(cluster)}"
            )

    coarse = coarse_labels(clustering, y)
    if c >= 2:
        if hier_config.output_dim != c:
            raise ValueError(f"hierarchy config output {hier_config.output_dim}, expected {c}")
        hierarchy = mlp.train(x, coarse, hier_config, spec)
    else:
        hierarchy = mlp.constant_model(x.shape[1])

    def make_trainer(i: int):
        cluster = clustering.clusters[i]
        mask = np.isin(y, cluster)
        if not mask.any():
            raise ValueError(f"cluster {i} has no training samples")
        local = {cid: pos for pos, cid in enumerate(cluster)}

        def task() -> mlp.MLPModel:
            if len(cluster) < 2:
                return mlp.constant_model(x.shape[1])
            labels_local = np.array([local[int(v)] for v in y[mask]], dtype=np.int64)
            cluster_spec = mlp.TrainSpec(
                learning_rate=spec.learning_rate,
                momentum=spec.momentum,
                epochs=spec.epochs,
                batch_size=spec.batch_size,
                seed=spec.seed + i,
            )
            return mlp.train(x[mask], labels_local, assign_configs[i], cluster_spec)

        return task

    assign_clfs = run_tasks([make_trainer(i) for i in range(c)])
    if top_k is None:
        top_k = min(2, c) if clustering.overlapping else 1
    return HierarchicalModel(
        clustering=clustering,
        hierarchy_clf=hierarchy,
        assign_clfs=assign_clfs,
        local_to_global=[tuple(cl) for cl in clustering.clusters],
        top_k=top_k,
    )


def _hierarchy_proba(model: HierarchicalModel, x: np.ndarray) -> np.ndarray:
    return mlp.predict_proba(model.hierarchy_clf, x)


def infer_batch(model: HierarchicalModel, features: np.ndarray) -> list[Prediction]:
    """Route each sample through its top-k clusters and fuse confidences.

    Candidate confidence is cluster probability times local class
    probability; duplicates keep the maximum. Ties break toward the lower
    cluster index when routing and the lower class id when ranking.
    """
    x = np.asarray(features, dtype=np.float64)
    p = _hierarchy_proba(model, x)
    k = model.top_k
    # stable argsort on -p: equal probabilities resolve to the lower index
    top = np.argsort(-p, axis=1, kind="stable")[:, :k]
    q_all = [mlp.predict_proba(clf, x) for clf in model.assign_clfs]

    predictions: list[Prediction] = []
    for m in range(x.shape[0]):
        scores: dict[int, float] = {}
        paths: dict[int, tuple[int, int]] = {}
        for j in map(int, top[m]):
            pj = p[m, j]
            q = q_all[j][m]
            for local, cid in enumerate(model.local_to_global[j]):
                value = float(pj * q[local])
                if cid not in scores or value > scores[cid]:
                    scores[cid] = value
                    paths[cid] = (j, local)
        ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        best_id, best_score = ranked[0]
        predictions.append(
            Prediction(
                class_id=best_id,
                confidence=best_score,
                path=paths[best_id],
                alternatives=tuple(ranked),
            )
        )
    return predictions


def infer(model: HierarchicalModel, features: np.ndarray) -> Prediction:
    """Single-sample inference; accepts a 1-D feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != 1:
        raise ValueError("infer expects a single sample; use infer_batch")
    return infer_batch(model, x)[0]


def evaluate_hierarchical(
    model: HierarchicalModel,
    features: np.ndarray,
    fine_labels: Sequence[int],
) -> tuple[float, float]:
    """(hierarchy accuracy on coarse labels, final accuracy on fine labels)."""
    y = np.asarray(fine_labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("evaluation set is empty")
    x = np.asarray(features, dtype=np.float64)
    coarse = coarse_labels(model.clustering, y)
    p = _hierarchy_proba(model, x)
    hc = float(np.mean(np.argmax(p, axis=1) == coarse))
    predicted = np.array([pr.class_id for pr in infer_batch(model, x)], dtype=np.int64)
    fc = float(np.mean(predicted == y))
    return hc, fc


def save_bundle(model: HierarchicalModel, directory: str | Path) -> None:
    """Write the model as a directory bundle: manifest, clustering, and one
    JSON file per classifier."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    save_clustering_json(model.clustering, root / "clustering.json")
    mlp.save_model_json(model.hierarchy_clf, root / "hierarchy.json")
    assign_files = []
    for i, clf in enumerate(model.assign_clfs):
        name = f"assign_{i:03d}.json"
        mlp.save_model_json(clf, root / name)
        assign_files.append(name)
    manifest = {
        "clustering": "clustering.json",
        "hierarchy": "hierarchy.json",
        "assign": assign_files,
        "local_to_global": [list(m) for m in model.local_to_global],
        "top_k": model.top_k,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(directory: str | Path) -> HierarchicalModel:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    clustering = load_clustering_json(root / manifest["clustering"])
    hierarchy = mlp.load_model_json(root / manifest["hierarchy"])
    assign = [mlp.load_model_json(root / name) for name in manifest["assign"]]
    return HierarchicalModel(
        clustering=clustering,
        hierarchy_clf=hierarchy,
        assign_clfs=assign,
        local_to_global=[tuple(m) for m in manifest["local_to_global"]],
        top_k=int(manifest["top_k"]),
    )
