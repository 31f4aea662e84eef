import numpy as np
import pytest

from relcluster.clustering import assign, infer_clusters, kmeans
from relcluster.encoder import Vectorizer, init_params
from relcluster.errors import ConfigurationError, ShapeError


def blobs(rng, centers, per_blob=4, spread=0.01):
    points = []
    labels = []
    for label, center in enumerate(centers):
        for _ in range(per_blob):
            points.append(center + spread * rng.standard_normal(len(center)))
            labels.append(label)
    return np.array(points), np.array(labels)


class TestKmeans:
    def test_k_equals_count_is_degenerate(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 3))
        model = kmeans(x, 6, seed=1)
        assert model.inertia == pytest.approx(0.0, abs=1e-18)
        assert sorted(model.labels.tolist()) == list(range(6))

    def test_two_blob_oracle(self):
        # Oracle: with well-separated blobs the centroids are the blob means
        # and the inertia is the within-blob scatter.
        rng = np.random.default_rng(7)
        centers = [np.array([10.0, 0.0]), np.array([-10.0, 0.0])]
        x, truth = blobs(rng, centers)
        model = kmeans(x, 2, seed=3)
        found = model.centroids[np.argsort(model.centroids[:, 0])[::-1]]
        for center_est, members in zip(found, (x[truth == 0], x[truth == 1])):
            np.testing.assert_allclose(center_est, members.mean(axis=0), atol=1e-9)
        scatter = sum(
            float(((x[truth == i] - x[truth == i].mean(axis=0)) ** 2).sum())
            for i in (0, 1)
        )
        assert model.inertia == pytest.approx(scatter, rel=1e-9)

    def test_inertia_history_non_increasing(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((60, 8))
        model = kmeans(x, 5, seed=2)
        history = model.inertia_history
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_no_empty_clusters(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((30, 4))
        for seed in range(5):
            model = kmeans(x, 7, seed=seed)
            assert len(np.unique(model.labels)) == 7

    def test_too_few_points(self):
        with pytest.raises(ConfigurationError):
            kmeans(np.zeros((2, 2)), 3)

    def test_permutation_invariance_with_pinned_init(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((20, 4))
        init = np.array([0, 7, 13])
        base = kmeans(x, 3, seed=0, init_indices=init)
        perm = rng.permutation(20)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(20)
        permuted = kmeans(x[perm], 3, seed=0, init_indices=inverse[init])
        # Compare partitions as canonical sets of point-index groups.
        def partition(labels):
            groups = {}
            for idx, lab in enumerate(labels):
                groups.setdefault(int(lab), set()).add(idx)
            return {frozenset(g) for g in groups.values()}

        base_parts = partition(base.labels)
        permuted_parts = partition(inverse[np.arange(20)][np.argsort(np.arange(20))])
        permuted_parts = {
            frozenset(int(perm[i]) for i in group)
            for group in partition(permuted.labels)
        }
        assert base_parts == permuted_parts


class TestAssign:
    def test_exact_centroid_match(self):
        centroids = np.eye(4)
        model = kmeans(np.eye(4), 4, seed=0)
        order = assign(centroids, model)
        np.testing.assert_array_equal(np.sort(order), np.arange(4))
        np.testing.assert_array_equal(assign(model.centroids, model), np.arange(4))

    def test_tie_breaks_to_lowest_index(self):
        rng = np.random.default_rng(1)
        x = np.array([[0.0, 0.0], [2.0, 0.0], [0.1, 0], [1.9, 0]])
        model = kmeans(x, 2, seed=0)
        midpoint = model.centroids.mean(axis=0, keepdims=True)
        assert assign(midpoint, model)[0] == 0

    def test_dimension_mismatch(self):
        model = kmeans(np.eye(3), 3, seed=0)
        with pytest.raises(ShapeError):
            assign(np.zeros((2, 5)), model)


class TestInferClusters:
    def test_each_sentence_its_own_cluster_when_k_equals_n(self, fixture_corpus):
        from relcluster.corpus import Corpus

        sub = Corpus(
            sentences=tuple(fixture_corpus.by_id(f"s{i:02d}") for i in range(1, 7)),
            entity_types=fixture_corpus.entity_types,
        )
        params = init_params(sub, dim=8, context_window=1, seed=0)
        vec = Vectorizer(sub, m=2, params=params)
        labels = infer_clusters(sub, vec, k=6, seed=0)
        assert sorted(labels.values()) == list(range(6))

    def test_labels_cover_corpus(self, fixture_corpus):
        params = init_params(fixture_corpus, dim=8, context_window=1, seed=0)
        vec = Vectorizer(fixture_corpus, m=2, params=params)
        labels = infer_clusters(fixture_corpus, vec, k=5, seed=0, restarts=2)
        assert set(labels) == set(fixture_corpus.ids)
        assert set(labels.values()) <= set(range(5))
