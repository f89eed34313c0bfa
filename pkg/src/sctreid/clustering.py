"""Seeded k-means with deterministic empty-cluster handling.

k-means++ initialization, Lloyd iterations up to a cap, convergence on stable
assignments or a centroid-shift tolerance. An empty cluster re-seeds from the
point currently farthest from its own centroid (lowest index on ties). The
assignment step has a compiled kernel; the pure numpy fallback computes the
same float64 arithmetic.
"""

import numpy as np

from sctreid._core import compiled_kmeans_assign
from sctreid.errors import DataError


def assign_points_pure(points, centroids, chunk=256):
    """Nearest centroid per point (squared L2); ties to the lowest index."""
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        block = points[start:start + chunk]
        d2 = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels[start:start + chunk] = np.argmin(d2, axis=1)
        best[start:start + chunk] = d2[np.arange(len(block)), labels[start:start + chunk]]
    return labels, best


def assign_points(points, centroids, impl="auto"):
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    kernel = compiled_kmeans_assign() if impl in ("auto", "compiled") else None
    if impl == "compiled" and kernel is None:
        raise DataError("compiled k-means kernel unavailable")
    if kernel is not None:
        return kernel(points, centroids)
    return assign_points_pure(points, centroids)


def kmeans_plusplus_init(points, k, rng):
    """Seeded k-means++; degenerate duplicate-point sets fall back to the
    lowest-index unchosen point when all remaining distances are zero."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in set(chosen)]
            nxt = remaining[0]
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[np.array(chosen)].copy()


def _reseed_empty(points, centroids, labels, dist_sq):
    """Deterministic empty-cluster rule: farthest point becomes the centroid."""
    counts = np.bincount(labels, minlength=centroids.shape[0])
    dist = dist_sq.copy()
    for c in np.flatnonzero(counts == 0):
        far = int(np.argmax(dist))
        centroids[c] = points[far]
        labels[far] = c
        dist[far] = -np.inf
    return labels


def lloyd_from(points, centroids, max_iter=100, tol=1e-4, impl="auto"):
    """Lloyd iterations from given initial centroids.

    Stops when assignments repeat exactly (a true fixpoint: the centroids
    were computed from these labels and re-produce them) or when the largest
    centroid shift drops below tol. Returns (labels, centroids, iterations).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64, copy=True)
    k = centroids.shape[0]
    prev_labels = None
    iteration = 0
    for iteration in range(1, max_iter + 1):
        labels, dist_sq = assign_points(points, centroids, impl)
        labels = _reseed_empty(points, centroids, labels, dist_sq)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        new_centroids = centroids.copy()
        for c in range(k):
            members = points[labels == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
        moved = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        prev_labels = labels
        if moved < tol:
            break
    return labels, centroids, iteration


def kmeans(points, k, seed, max_iter=100, tol=1e-4, impl="auto"):
    """Seeded k-means++ init plus Lloyd. Returns (labels, centroids, iterations).

    Deterministic per seed: same seed, same assignment.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1 or k > n:
        raise DataError(f"cluster count {k} out of range for {n} points")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus_init(points, k, rng)
    return lloyd_from(points, centroids, max_iter, tol, impl)
