"""Compiled kernel loader.

The hot loops (per-query ranking, k-means assignment) have Cython builds and
pure numpy fallbacks. Import of the compiled modules is attempted once here;
callers ask for an implementation by name and everything else in the package
stays agnostic. Set SCTREID_PURE=1 to force the fallbacks (used by the tests
that cross-check both paths and by the benchmark).
"""

import os

try:
    from sctreid._core.rank_cy import rank_queries as _rank_compiled
except ImportError:
    _rank_compiled = None

try:
    from sctreid._core.kmeans_cy import assign_points as _assign_compiled
except ImportError:
    _assign_compiled = None


def _force_pure():
    return os.environ.get("SCTREID_PURE", "") not in ("", "0")


def have_compiled_rank():
    return _rank_compiled is not None and not _force_pure()


def have_compiled_kmeans():
    return _assign_compiled is not None and not _force_pure()


def compiled_rank():
    """The compiled ranking kernel, or None when unavailable/disabled."""
    return _rank_compiled if have_compiled_rank() else None


def compiled_kmeans_assign():
    """The compiled assignment kernel, or None when unavailable/disabled."""
    return _assign_compiled if have_compiled_kmeans() else None
