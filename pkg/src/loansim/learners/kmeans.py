"""Lloyd's k-means with deterministic farthest-point seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: tuple[float, ...]
    n_iter: int

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _inertia(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - C[labels]) ** 2).sum())


def farthest_point_init(X: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    idx = [int(rng.integers(len(X)))]
    closest = ((X - X[idx[0]]) ** 2).sum(1)
    for _ in range(1, k):
        nxt = int(np.argmax(closest))  # first index on ties
        idx.append(nxt)
        closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(1))
    return X[idx].copy()


def kmeans_fit(vectors, k: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    X = np.asarray(vectors, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("vectors must be a nonempty 2-D array")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(np.unique(X, axis=0)):
        raise ValueError(f"k={k} exceeds the number of distinct vectors")
    C = farthest_point_init(X, k, seed)
    labels = np.argmin(_sq_dists(X, C), axis=1)
    history = [_inertia(X, C, labels)]
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        for j in range(k):
            members = labels == j
            if members.any():  # empty clusters keep their centroid
                C[j] = X[members].mean(0)
        d = _sq_dists(X, C)
        new_labels = np.argmin(d, axis=1)
        history.append(_inertia(X, C, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(C, labels, tuple(history), n_iter)


def assign(centroids: np.ndarray, vectors) -> np.ndarray:
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    return np.argmin(_sq_dists(X, centroids), axis=1)
