"""Overlap expansion: threshold rule, monotonicity, core preservation."""
import numpy as np
import pytest

from hierdecomp.confmat import ConfusionMatrix, PosteriorMatrix, column_normalize
from hierdecomp.linkage import Clustering
from hierdecomp.overlap import expand_overlap, overlap_threshold


def posterior_from_counts(counts: np.ndarray) -> PosteriorMatrix:
    cm = ConfusionMatrix(counts=counts, class_ids=range(counts.shape[0]))
    return column_normalize(cm)


def random_instance(rng: np.random.Generator):
    k = int(rng.integers(3, 10))
    counts = rng.integers(0, 40, size=(k, k)).astype(float) + np.eye(k)
    dcn = posterior_from_counts(counts)
    boundaries = sorted(rng.choice(np.arange(1, k), size=min(2, k - 1), replace=False))
    clusters = []
    start = 0
    for b in [*boundaries, k]:
        clusters.append(tuple(range(start, b)))
        start = b
    base = Clustering(clusters=tuple(clusters), overlapping=False, parent_k=k)
    return base, dcn


class TestThreshold:
    def test_value(self):
        assert overlap_threshold(3.0, 4) == pytest.approx(1 / 12)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError, match="gamma"):
            overlap_threshold(0.0, 4)


class TestExpandOverlap:
    def base_two_clusters(self):
        return Clustering(clusters=((0, 1), (2, 3)), overlapping=False, parent_k=4)

    def test_identity_posterior_is_identity(self):
        base = self.base_two_clusters()
        dcn = posterior_from_counts(np.eye(4) * 5)
        out = expand_overlap(base, dcn, gamma=3.0, parent_k=4)
        assert out.clusters == base.clusters
        assert out.cores == base.clusters
        assert out.overlapping

    def test_hand_fixture_threshold_one_twelfth(self):
        # cores {0,1} and {2,3}; posterior of true class 1 given predicted 2
        # is 0.3, every other cross term 0.01; threshold 1/(3*4) ~ 0.0833
        base = self.base_two_clusters()
        values = np.full((4, 4), 0.01)
        values[1, 2] = 0.3
        for j in range(4):
            values[j, j] = 1.0 - (values[:, j].sum() - values[j, j])
        dcn = PosteriorMatrix(values=values, class_ids=(0, 1, 2, 3))
        out = expand_overlap(base, dcn, gamma=3.0, parent_k=4)
        assert out.clusters == ((0, 1, 2), (2, 3))
        assert out.cores == ((0, 1), (2, 3))
        assert out.gamma == 3.0

    def test_huge_gamma_adds_every_confusable_class(self):
        base = self.base_two_clusters()
        counts = np.full((4, 4), 1.0)
        dcn = posterior_from_counts(counts)
        out = expand_overlap(base, dcn, gamma=1e9, parent_k=4)
        assert out.clusters == ((0, 1, 2, 3), (0, 1, 2, 3))

    def test_universal_reading_requires_all_core_members(self):
        base = self.base_two_clusters()
        values = np.full((4, 4), 0.01)
        values[1, 2] = 0.3  # only one of the two core members clears it
        for j in range(4):
            values[j, j] = 1.0 - (values[:, j].sum() - values[j, j])
        dcn = PosteriorMatrix(values=values, class_ids=(0, 1, 2, 3))
        strict = expand_overlap(base, dcn, gamma=3.0, parent_k=4, require_all=True)
        assert strict.clusters == base.clusters

    def test_rejects_overlapping_base(self):
        base = Clustering(
            clusters=((0, 1, 2), (2, 3)),
            overlapping=True,
            parent_k=4,
            cores=((0, 1), (2, 3)),
        )
        dcn = posterior_from_counts(np.eye(4))
        with pytest.raises(ValueError, match="already overlapping"):
            expand_overlap(base, dcn, gamma=3.0)

    def test_rejects_missing_classes(self):
        base = self.base_two_clusters()
        dcn = posterior_from_counts(np.eye(3))
        with pytest.raises(ValueError, match="does not cover"):
            expand_overlap(base, dcn, gamma=3.0)

    def test_gamma_monotonicity(self):
        rng = np.random.default_rng(21)
        for _ in range(60):
            base, dcn = random_instance(rng)
            g1, g2 = sorted(rng.uniform(0.5, 20.0, size=2))
            small = expand_overlap(base, dcn, gamma=g1)
            big = expand_overlap(base, dcn, gamma=g2)
            for a, b in zip(small.clusters, big.clusters):
                assert set(a) <= set(b)

    def test_core_preservation_and_coverage(self):
        rng = np.random.default_rng(22)
        for _ in range(60):
            base, dcn = random_instance(rng)
            out = expand_overlap(base, dcn, gamma=float(rng.uniform(0.5, 10.0)))
            for core, cluster in zip(base.clusters, out.clusters):
                assert set(core) <= set(cluster)
            assert set(c for cl in out.clusters for c in cl) == set(base.class_ids)

    def test_default_parent_k_is_class_count(self):
        base = self.base_two_clusters()
        dcn = posterior_from_counts(np.eye(4))
        out = expand_overlap(base, dcn, gamma=2.0)
        assert out.parent_k == 4
