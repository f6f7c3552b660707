"""Shared test utilities: seeded data factories and small reference oracles."""

from __future__ import annotations

import numpy as np

from encmap import EmbeddingMatrix, FeatureVector


def random_embedding(rng: np.random.Generator, n: int, d: int, encoder_id: str = "enc") -> EmbeddingMatrix:
    return EmbeddingMatrix(encoder_id=encoder_id, values=rng.normal(size=(n, d)))


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def make_feature(
    values, encoder_id: str = "f", epsilon: float = 1e-4
) -> FeatureVector:
    values = np.asarray(values, dtype=np.float64)
    return FeatureVector(
        encoder_id=encoder_id,
        values=values,
        epsilon=epsilon,
        qre_total=float(values.sum()),
    )


def two_means_labels(coords: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Deterministic 2-means: centers start at the farthest point pair."""
    m = coords.shape[0]
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    centers = coords[[i, j]].copy()
    labels = np.zeros(m, dtype=int)
    for _ in range(max_iter):
        dist = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for c in (0, 1):
            if np.any(labels == c):
                centers[c] = coords[labels == c].mean(axis=0)
    return labels


def purity(labels: np.ndarray, groups: np.ndarray) -> float:
    """Fraction of points whose cluster's majority group matches their own."""
    total = 0
    for c in np.unique(labels):
        members = groups[labels == c]
        counts = np.bincount(members)
        total += counts.max()
    return total / len(labels)
