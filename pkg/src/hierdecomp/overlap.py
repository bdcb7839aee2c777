"""Posterior-driven expansion of a partition into overlapping clusters.

A class outside a cluster joins it when the probability of that cluster's
classes given the outsider's prediction clears a threshold of
1 / (gamma * parent_k). Larger gamma lowers the threshold and grows the
clusters; cores are never removed.
"""
from __future__ import annotations

from .confmat import PosteriorMatrix
from .linkage import Clustering

__all__ = ["overlap_threshold", "expand_overlap"]


def overlap_threshold(gamma: float, parent_k: int) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if parent_k < 1:
        raise ValueError("parent_k must be >= 1")
    return 1.0 / (gamma * parent_k)


def expand_overlap(
    base: Clustering,
    dcn: PosteriorMatrix,
    gamma: float,
    parent_k: int | None = None,
    require_all: bool = False,
) -> Clustering:
    """Append confusable outside classes to each cluster of a partition.

    Class j joins cluster Q when dcn[i][j] >= 1 / (gamma * parent_k) for a
    core member i of Q. By default one core member suffices; with
    ``require_all`` every core member must clear the threshold, which almost
    never fires on realistic posteriors.
    """
    if base.overlapping:
        raise ValueError("base clustering is already overlapping")
    if parent_k is None:
        parent_k = len(base.class_ids)
    threshold = overlap_threshold(gamma, parent_k)

    classes = base.class_ids
    missing = set(classes) - set(dcn.class_ids)
    if missing:
        raise ValueError(f"posterior matrix does not cover classes {sorted(missing)}")
    pos = {cid: dcn.class_ids.index(cid) for cid in classes}

    expanded: list[tuple[int, ...]] = []
    for core in base.cores:
        members = set(core)
        core_rows = [pos[c] for c in core]
        for cand in classes:
            if cand in members:
                continue
            col = dcn.values[core_rows, pos[cand]]
            hit = (col >= threshold).all() if require_all else (col >= threshold).any()
            if hit:
                members.add(cand)
        expanded.append(tuple(sorted(members)))

    return Clustering(
        clusters=tuple(expanded),
        overlapping=True,
        parent_k=parent_k,
        cores=base.cores,
        theta=base.theta,
        gamma=float(gamma),
    )
