"""Average-linkage dendrogram over classes and size-capped tree cutting.

Nodes follow the usual agglomerative numbering: leaves are 0..K-1 (indexing
``Dendrogram.leaves``), and the m-th merge creates node K+m. Merging always
picks the pair of active clusters with the minimal average pairwise
dissimilarity; ties resolve to the lexicographically smallest (min node id,
max node id) pair so results are identical across platforms.
"""
from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confmat import DissimilarityMatrix

__all__ = [
    "Merge",
    "Dendrogram",
    "Clustering",
    "upgma_linkage",
    "cut_clusters",
    "export_dot",
    "clustering_to_json",
    "clustering_from_json",
    "save_clustering_json",
    "load_clustering_json",
]


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Binary merge tree over ``leaves`` with K-1 height-annotated merges."""

    leaves: tuple[int, ...]
    merges: tuple[Merge, ...]

    def __post_init__(self) -> None:
        leaves = tuple(int(c) for c in self.leaves)
        merges = tuple(self.merges)
        k = len(leaves)
        if k < 1:
            raise ValueError("dendrogram needs at least one leaf")
        if len(set(leaves)) != k:
            raise ValueError("leaf class ids must be unique")
        if len(merges) != k - 1:
            raise ValueError(f"expected {k - 1} merges for {k} leaves, got {len(merges)}")
        sizes = {i: 1 for i in range(k)}
        used: set[int] = set()
        for m, merge in enumerate(merges):
            node = k + m
            for child in (merge.left, merge.right):
                if child not in sizes:
                    raise ValueError(f"merge {m} references unknown node {child}")
                if child in used:
                    raise ValueError(f"node {child} used as a child twice")
                used.add(child)
            if merge.height < 0:
                raise ValueError(f"merge {m} has negative height {merge.height}")
            size = sizes[merge.left] + sizes[merge.right]
            if merge.size != size:
                raise ValueError(
                    f"merge {m} records size {merge.size}, children sum to {size}"
                )
            sizes[node] = size
        if merges and merges[-1].size != k:
            raise ValueError("final merge must cover all leaves")
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "merges", merges)

    @property
    def k(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> int:
        return self.k + len(self.merges) - 1 if self.merges else 0

    def children(self, node: int) -> tuple[int, int]:
        if node < self.k:
            raise ValueError(f"node {node} is a leaf")
        merge = self.merges[node - self.k]
        return merge.left, merge.right

    def leaf_ids(self, node: int) -> list[int]:
        """Class ids under ``node``, in left-to-right tree order."""
        if node < self.k:
            return [self.leaves[node]]
        left, right = self.children(node)
        return self.leaf_ids(left) + self.leaf_ids(right)


@dataclass(frozen=True)
class Clustering:
    """Class-to-cluster mapping, either a partition or with overlapped members.

    ``cores`` always form a partition of the class set; ``clusters`` equal the
    cores until overlap expansion appends extra members.
    """

    clusters: tuple[tuple[int, ...], ...]
    overlapping: bool
    parent_k: int
    cores: tuple[tuple[int, ...], ...] = field(default=())
    theta: int | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        clusters = tuple(tuple(sorted(int(c) for c in cl)) for cl in self.clusters)
        cores = self.cores or clusters
        cores = tuple(tuple(sorted(int(c) for c in cl)) for cl in cores)
        if not clusters:
            raise ValueError("clustering has no clusters")
        if len(cores) != len(clusters):
            raise ValueError("each cluster needs exactly one core")
        if any(len(cl) == 0 for cl in clusters):
            raise ValueError("empty cluster")
        all_core = [c for cl in cores for c in cl]
        if len(set(all_core)) != len(all_core):
            raise ValueError("cores must be disjoint")
        universe = set(all_core)
        if set(c for cl in clusters for c in cl) != universe:
            raise ValueError("cluster union must equal the core class set")
        for core, cluster in zip(cores, clusters):
            if not set(core) <= set(cluster):
                raise ValueError("core must be a subset of its cluster")
        if not self.overlapping and clusters != cores:
            raise ValueError("non-overlapping clustering must equal its cores")
        if self.theta is not None:
            if self.theta < 1:
                raise ValueError("theta must be >= 1")
            if any(len(core) > self.theta for core in cores):
                raise ValueError("core exceeds theta")
        if self.parent_k < 1:
            raise ValueError("parent_k must be >= 1")
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "cores", cores)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted(c for cl in self.cores for c in cl))

    def core_index(self) -> dict[int, int]:
        """Map each class id to the index of the cluster whose core holds it."""
        return {c: i for i, core in enumerate(self.cores) for c in core}


def upgma_linkage(d: DissimilarityMatrix) -> Dendrogram:
    """Agglomerate classes by unweighted average pairwise dissimilarity.

    Each step merges the active pair (r, s) minimizing the mean leaf-to-leaf
    distance between the two groups; the recorded height is that minimum.
    """
    k = d.k
    if k < 2:
        raise ValueError("linkage needs at least 2 classes")
    # Active clusters stay sorted by node id: merges remove two and append
    # the freshly numbered node, so positional order is id order and a
    # row-major argmin realizes the (min id, max id) tie rule.
    nodes = list(range(k))
    sizes = [1] * k
    dist = d.values.astype(np.float64).copy()
    merges: list[Merge] = []
    for m in range(k - 1):
        n = len(nodes)
        masked = dist.copy()
        masked[np.tril_indices(n)] = np.inf
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        height = dist[i, j]
        ni, nj = sizes[i], sizes[j]
        merged_row = (ni * dist[i, :] + nj * dist[j, :]) / (ni + nj)
        merges.append(Merge(left=nodes[i], right=nodes[j], height=float(height), size=ni + nj))
        keep = [p for p in range(n) if p not in (i, j)]
        new_dist = np.empty((n - 1, n - 1), dtype=np.float64)
        new_dist[: n - 2, : n - 2] = dist[np.ix_(keep, keep)]
        new_dist[: n - 2, n - 2] = merged_row[keep]
        new_dist[n - 2, : n - 2] = merged_row[keep]
        new_dist[n - 2, n - 2] = 0.0
        dist = new_dist
        nodes = [nodes[p] for p in keep] + [k + m]
        sizes = [sizes[p] for p in keep] + [ni + nj]
    return Dendrogram(leaves=d.class_ids, merges=tuple(merges))


def cut_clusters(dg: Dendrogram, theta: int) -> Clustering:
    """Cut a dendrogram into non-overlapping clusters of at most ``theta`` classes.

    Walks top-down from the root: a subtree whose leaf count fits under theta
    becomes a final cluster, otherwise its top merge is split and both
    children are processed (left first). Deterministic for a given tree.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")

    sizes: dict[int, int] = {i: 1 for i in range(dg.k)}
    for m, merge in enumerate(dg.merges):
        sizes[dg.k + m] = merge.size

    clusters: list[tuple[int, ...]] = []
    stack = [dg.root]
    while stack:
        node = stack.pop()
        if sizes[node] <= theta:
            clusters.append(tuple(sorted(dg.leaf_ids(node))))
        else:
            left, right = dg.children(node)
            stack.append(right)
            stack.append(left)
    return Clustering(
        clusters=tuple(clusters),
        overlapping=False,
        parent_k=dg.k,
        theta=theta,
    )


def _cluster_colors(n: int) -> list[str]:
    """Evenly spaced pastel fill colors, one per cluster."""
    colors = []
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb(i / max(n, 1), 0.45, 0.95)
        colors.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return colors


def export_dot(dg: Dendrogram, clustering: Clustering | None = None) -> str:
    """Render the merge tree as a DOT digraph.

    Internal nodes are labeled with their merge height to 3 decimals; when a
    clustering is supplied, leaves of the same cluster share a fill color
    (overlapped classes are colored by their core cluster).
    """
    lines = ["digraph dendrogram {", "  node [shape=box];"]
    color_of: dict[int, str] = {}
    if clustering is not None:
        palette = _cluster_colors(clustering.n_clusters)
        for idx, core in enumerate(clustering.cores):
            for cid in core:
                color_of[cid] = palette[idx]
    for pos, cid in enumerate(dg.leaves):
        attrs = [f'label="{cid}"']
        if cid in color_of:
            attrs.append("style=filled")
            attrs.append(f'fillcolor="{color_of[cid]}"')
        lines.append(f"  n{pos} [{', '.join(attrs)}];")
    for m, merge in enumerate(dg.merges):
        node = dg.k + m
        lines.append(f'  n{node} [label="{merge.height:.3f}"];')
        lines.append(f"  n{node} -> n{merge.left};")
        lines.append(f"  n{node} -> n{merge.right};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def clustering_to_json(clustering: Clustering) -> str:
    payload = {
        "overlapping": clustering.overlapping,
        "theta": clustering.theta,
        "gamma": clustering.gamma,
        "clusters": [list(cl) for cl in clustering.clusters],
        "cores": [list(cl) for cl in clustering.cores],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def clustering_from_json(text: str) -> Clustering:
    """Parse the clustering JSON schema.

    The parent-stage class count is not part of the schema; it defaults to
    the size of the class set (single-stage semantics).
    """
    payload = json.loads(text)
    clusters = tuple(tuple(cl) for cl in payload["clusters"])
    cores = tuple(tuple(cl) for cl in payload["cores"])
    parent_k = len({c for cl in cores for c in cl})
    return Clustering(
        clusters=clusters,
        overlapping=bool(payload["overlapping"]),
        parent_k=parent_k,
        cores=cores,
        theta=payload.get("theta"),
        gamma=payload.get("gamma"),
    )


def save_clustering_json(clustering: Clustering, path: str | Path) -> None:
    Path(path).write_text(clustering_to_json(clustering), encoding="utf-8")


def load_clustering_json(path: str | Path) -> Clustering:
    return clustering_from_json(Path(path).read_text(encoding="utf-8"))
