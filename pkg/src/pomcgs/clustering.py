"""Lloyd's k-means with k-means++ seeding, used to label continuous observations."""

from __future__ import annotations

import numpy as np

__all__ = ["kmeans", "assign", "wcss"]


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def _sq_dists(x, centroids):
    if x.shape[1] == 1:
        return (x[:, 0, None] - centroids[None, :, 0]) ** 2
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _assign_1d(x, c):
    # sorted-centroid lookup; same answer as the argmin over all centroids
    order = np.argsort(c, kind="stable")
    cs = c[order]
    right = np.minimum(np.searchsorted(cs, x, side="left"), len(cs) - 1)
    left = np.maximum(right - 1, 0)
    left = np.searchsorted(cs, cs[left], side="left")  # first of a run of equal centroids
    d_left = (x - cs[left]) ** 2
    d_right = (x - cs[right]) ** 2
    i_left, i_right = order[left], order[right]
    pick_left = (d_left < d_right) | ((d_left == d_right) & (i_left < i_right))
    return np.where(pick_left, i_left, i_right)


def assign(points, centroids) -> np.ndarray:
    """Index of the nearest centroid (Euclidean, ties to the lowest index)."""
    x = _as_points(points)
    c = _as_points(centroids)
    if x.shape[1] == 1:
        return _assign_1d(x[:, 0], c[:, 0])
    return np.argmin(_sq_dists(x, c), axis=1)


def wcss(points, labels, centroids) -> float:
    x = _as_points(points)
    c = _as_points(centroids)
    return float(((x - c[labels]) ** 2).sum())


def _plusplus(x, k, rng):
    n = len(x)
    centers = [int(rng.integers(n))]
    d2 = ((x - x[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[centers].copy()


def kmeans(points, k: int, rng: np.random.Generator, max_iter: int = 100, history: list | None = None):
    """Cluster ``points`` into at most ``k`` groups.

    Returns ``(labels, centroids)``.  The effective number of clusters never
    exceeds the number of distinct points.  A cluster left empty by an
    assignment step is reseeded on the point farthest from its current
    centroid.  When ``history`` is given, the within-cluster sum of squares
    after every assignment is appended to it.
    """
    x = _as_points(points)
    if len(x) == 0:
        raise ValueError("kmeans needs at least one point")
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = len(np.unique(x, axis=0))
    k = min(k, n_distinct)
    centroids = _plusplus(x, k, rng)
    labels = assign(x, centroids)
    k = len(centroids)
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(((x - centroids[labels]) ** 2).sum(axis=1)))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
        for dim in range(x.shape[1]):
            centroids[:, dim] = np.bincount(labels, x[:, dim], minlength=k) / counts
        new_labels = assign(x, centroids)
        if history is not None:
            history.append(wcss(x, new_labels, centroids))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids
