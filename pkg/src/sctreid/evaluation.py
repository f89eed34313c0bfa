"""Retrieval metrics: pairwise Euclidean matching, single-query CMC and mAP.

Protocol: gallery entries sharing both identity and camera with the query are
excluded; Rank-r is the fraction of queries whose first correct match sits at
rank <= r of the filtered list; AP averages precision at each correct hit;
queries left without any correct match are dropped and counted. Distance ties
break by gallery index (stable sort). The per-query walk has a compiled
kernel and a numpy fallback.
"""

import json
from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial.distance import cdist

from sctreid._core import compiled_rank
from sctreid.encoder import encode_all
from sctreid.errors import DataError


@dataclass
class MetricsReport:
    cmc: list                   # Rank-1..Rank-max CMC values in [0, 1]
    map: float
    num_valid_queries: int
    num_dropped_queries: int

    def rank(self, r):
        return self.cmc[r - 1]

    def to_dict(self):
        return {"cmc": [float(v) for v in self.cmc], "map": float(self.map),
                "num_valid_queries": self.num_valid_queries,
                "num_dropped_queries": self.num_dropped_queries}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def pairwise_euclidean(query_features, gallery_features):
    """Exact L2 distance matrix [Q, G] in float64."""
    q = np.asarray(query_features, dtype=np.float64)
    g = np.asarray(gallery_features, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise DataError(
            f"feature width mismatch: query {q.shape}, gallery {g.shape}")
    return cdist(q, g, metric="euclidean")


def _rank_pure(order, q_ids, q_cams, g_ids, g_cams, max_rank):
    """Numpy fallback mirroring the compiled kernel's outputs."""
    num_q = order.shape[0]
    cmc = np.zeros((num_q, max_rank))
    ap = np.zeros(num_q)
    valid = np.zeros(num_q, dtype=np.uint8)
    for qi in range(num_q):
        ranked_ids = g_ids[order[qi]]
        ranked_cams = g_cams[order[qi]]
        keep = ~((ranked_ids == q_ids[qi]) & (ranked_cams == q_cams[qi]))
        matches = ranked_ids[keep] == q_ids[qi]
        hits = int(matches.sum())
        if hits == 0:
            continue
        valid[qi] = 1
        positions = np.flatnonzero(matches) + 1          # 1-based filtered ranks
        precision_at_hits = np.arange(1, hits + 1) / positions
        ap[qi] = precision_at_hits.sum() / hits
        first = positions[0]
        if first <= max_rank:
            cmc[qi, first - 1:] = 1.0
    return cmc, ap, valid


def evaluate(distmat, query_ids, query_cams, gallery_ids, gallery_cams,
             max_rank=50, impl="auto"):
    """Score a distance matrix against the standard single-query protocol."""
    distmat = np.asarray(distmat, dtype=np.float64)
    q_ids = np.asarray(query_ids, dtype=np.int64)
    q_cams = np.asarray(query_cams, dtype=np.int64)
    g_ids = np.asarray(gallery_ids, dtype=np.int64)
    g_cams = np.asarray(gallery_cams, dtype=np.int64)
    num_q, num_g = distmat.shape
    if len(q_ids) != num_q or len(g_ids) != num_g:
        raise DataError("metadata lengths do not match the distance matrix")
    max_rank = min(max_rank, num_g)

    order = np.argsort(distmat, axis=1, kind="stable").astype(np.int64)
    kernel = compiled_rank() if impl in ("auto", "compiled") else None
    if impl == "compiled" and kernel is None:
        raise DataError("compiled ranking kernel unavailable")
    if kernel is not None:
        cmc, ap, valid = kernel(order, q_ids, q_cams, g_ids, g_cams, max_rank)
    else:
        cmc, ap, valid = _rank_pure(order, q_ids, q_cams, g_ids, g_cams, max_rank)

    valid = valid.astype(bool)
    num_valid = int(valid.sum())
    if num_valid == 0:
        raise DataError("no query has a valid gallery match after filtering")
    return MetricsReport(
        cmc=list(cmc[valid].mean(axis=0)),
        map=float(ap[valid].mean()),
        num_valid_queries=num_valid,
        num_dropped_queries=int(len(q_ids) - num_valid))


def evaluate_manifests(encoder, query_manifest, gallery_manifest, max_rank=50,
                       impl="auto", use_locals=False):
    """Encode both manifests and score them; global token only by default,
    optionally concatenated with the flattened local tokens."""
    def features_of(manifest):
        g, l = encode_all(encoder, manifest.samples)
        if use_locals and l.shape[1]:
            g = torch.cat([g, l.reshape(l.shape[0], -1)], dim=1)
        return g.numpy().astype(np.float64)

    distmat = pairwise_euclidean(features_of(query_manifest),
                                 features_of(gallery_manifest))
    return evaluate(distmat, query_manifest.identities(),
                    query_manifest.cameras(), gallery_manifest.identities(),
                    gallery_manifest.cameras(), max_rank=max_rank, impl=impl)
