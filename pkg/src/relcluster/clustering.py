"""K-Means for exemplar computation and final inference clustering.

Lloyd iterations on Euclidean distance over unit-normalized vectors
(monotonically related to cosine similarity), with D-squared weighted
greedy seeding, empty-cluster repair by stealing the point farthest from
its assigned centroid, and an inertia-monotonicity assertion every
iteration. The assignment step is parallelizable across points; centroid
updates accumulate in deterministic index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import Corpus
from .encoder import Vectorizer
from .errors import ConfigurationError, ShapeError


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    labels: np.ndarray
    inertia_history: tuple[float, ...]


def _squared_distances(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clip tiny negatives from cancellation.
    sq = (
        np.sum(vectors**2, axis=1)[:, None]
        - 2.0 * vectors @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _dsq_seed_indices(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _squared_distances(vectors, vectors[chosen])[:, 0]
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            # All remaining points coincide with a centroid; fall back to
            # uniform choice among unchosen indices.
            remaining = np.setdiff1d(np.arange(n), np.array(chosen))
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, _squared_distances(vectors, vectors[chosen[-1:]])[:, 0])
    return np.array(chosen, dtype=np.intp)


def _repair_empty(
    labels: np.ndarray, dist_sq: np.ndarray, k: int
) -> np.ndarray:
    """Reassign the globally farthest points to empty clusters."""
    labels = labels.copy()
    present = set(np.unique(labels).tolist())
    empties = [j for j in range(k) if j not in present]
    if not empties:
        return labels
    point_cost = dist_sq[np.arange(len(labels)), labels]
    order = np.argsort(-point_cost, kind="stable")
    cursor = 0
    for j in empties:
        while cursor < len(order):
            cand = int(order[cursor])
            cursor += 1
            # Do not empty a singleton cluster while filling another.
            if np.sum(labels == labels[cand]) > 1:
                labels[cand] = j
                break
        else:
            raise ConfigurationError("cannot repair empty clusters: too few points")
    return labels


def kmeans(
    vectors: np.ndarray,
    k: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
    restarts: int = 1,
    init_indices: Optional[np.ndarray] = None,
) -> ClusterModel:
    """Fit k centroids with Lloyd iterations.

    Stops when the largest centroid shift drops below tol or after
    max_iter rounds. ``init_indices`` pins the seeding to explicit data
    indices (used by tests); otherwise restarts run with derived rng
    streams and the lowest-inertia fit wins.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2:
        raise ShapeError("vectors must be a 2-D array")
    n = vectors.shape[0]
    if k < 2:
        raise ConfigurationError("k must be >= 2")
    if n < k:
        raise ConfigurationError(f"cannot fit {k} clusters to {n} vectors")

    best: Optional[ClusterModel] = None
    for restart in range(max(restarts, 1)):
        rng = np.random.default_rng((seed, restart))
        if init_indices is not None:
            seeds = np.asarray(init_indices, dtype=np.intp)
            if len(seeds) != k:
                raise ConfigurationError("init_indices must have length k")
        else:
            seeds = _dsq_seed_indices(vectors, k, rng)
        centroids = vectors[seeds].copy()

        history: list[float] = []
        labels = np.zeros(n, dtype=np.intp)
        iterations = 0
        for _ in range(max_iter):
            dist_sq = _squared_distances(vectors, centroids)
            labels = np.argmin(dist_sq, axis=1)
            inertia = float(dist_sq[np.arange(n), labels].sum())
            if history:
                assert inertia <= history[-1] + 1e-9 * max(1.0, history[-1]), (
                    "Lloyd inertia increased"
                )
            history.append(inertia)
            labels = _repair_empty(labels, dist_sq, k)
            new_centroids = np.empty_like(centroids)
            for j in range(k):
                members = vectors[labels == j]
                new_centroids[j] = members.mean(axis=0)
            shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
            centroids = new_centroids
            iterations += 1
            if shift < tol:
                break

        # Final consistent assignment for the returned centroids.
        dist_sq = _squared_distances(vectors, centroids)
        labels = np.argmin(dist_sq, axis=1)
        labels = _repair_empty(labels, dist_sq, k)
        if len(np.unique(labels)) < k:
            raise ConfigurationError("empty cluster after repair")
        # Centroids of repaired clusters move onto their members.
        for j in range(k):
            centroids[j] = vectors[labels == j].mean(axis=0)
        dist_sq = _squared_distances(vectors, centroids)
        final_labels = np.argmin(dist_sq, axis=1)
        final_labels = _repair_empty(final_labels, dist_sq, k)
        inertia = float(((vectors - centroids[final_labels]) ** 2).sum())
        model = ClusterModel(
            k=k,
            centroids=centroids,
            inertia=inertia,
            iterations_run=iterations,
            labels=final_labels,
            inertia_history=tuple(history),
        )
        if best is None or model.inertia < best.inertia:
            best = model
    assert best is not None
    return best


def assign(vectors: np.ndarray, model: ClusterModel) -> np.ndarray:
    """Nearest-centroid labels; ties break toward the lowest index."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[1] != model.centroids.shape[1]:
        raise ShapeError(
            f"vectors of width {vectors.shape[-1]} cannot be assigned to "
            f"centroids of width {model.centroids.shape[1]}"
        )
    return np.argmin(_squared_distances(vectors, model.centroids), axis=1)


def infer_clusters(
    corpus: Corpus, vectorizer: Vectorizer, k: int, seed: int = 0, restarts: int = 1
) -> dict[str, int]:
    """Encode every sentence deterministically, fit, and label."""
    vectors = np.stack(
        [vectorizer.vector(vectorizer.deterministic_ref(sid)) for sid in corpus.ids]
    )
    model = kmeans(vectors, k, seed=seed, restarts=restarts)
    labels = assign(vectors, model)
    return {sid: int(label) for sid, label in zip(corpus.ids, labels)}
