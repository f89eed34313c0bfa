# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Lloyd assignment step: nearest centroid per point.

Squared distances are accumulated channel by channel in float64, matching the
pure numpy fallback's arithmetic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def assign_points(cnp.float64_t[:, :] points, cnp.float64_t[:, :] centroids):
    """Return (labels [N] int64, dist_sq_to_own [N] float64).

    Ties resolve to the lowest centroid index.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t k = centroids.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best = np.empty(n)
    cdef cnp.int64_t[:] labels_v = labels
    cdef cnp.float64_t[:] best_v = best

    cdef Py_ssize_t i, j, c
    cdef double dist, diff, best_dist
    cdef Py_ssize_t best_c

    for i in range(n):
        best_dist = -1.0
        best_c = 0
        for c in range(k):
            dist = 0.0
            for j in range(d):
                diff = points[i, j] - centroids[c, j]
                dist += diff * diff
            if best_dist < 0.0 or dist < best_dist:
                best_dist = dist
                best_c = c
        labels_v[i] = best_c
        best_v[i] = best_dist
    return labels, best
