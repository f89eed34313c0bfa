# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-query ranking kernel for CMC / mAP accumulation.

Queries arrive with their gallery order pre-sorted (stable sort done by the
caller); this loop applies the same-identity-same-camera filter and walks the
ranked list once per query.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def rank_queries(cnp.int64_t[:, :] order,
                 cnp.int64_t[:] q_ids, cnp.int64_t[:] q_cams,
                 cnp.int64_t[:] g_ids, cnp.int64_t[:] g_cams,
                 Py_ssize_t max_rank):
    """Accumulate per-query CMC and AP.

    Returns (cmc [Q, max_rank] float64, ap [Q] float64, valid [Q] uint8);
    rows of invalid queries (no correct match after filtering) are zero.
    """
    cdef Py_ssize_t num_q = order.shape[0]
    cdef Py_ssize_t num_g = order.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cmc = np.zeros((num_q, max_rank))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ap = np.zeros(num_q)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] valid = np.zeros(num_q, dtype=np.uint8)
    cdef cnp.float64_t[:, :] cmc_v = cmc
    cdef cnp.float64_t[:] ap_v = ap
    cdef cnp.uint8_t[:] valid_v = valid

    cdef Py_ssize_t qi, pos, g, kept, hits, first_hit, r
    cdef cnp.int64_t qid, qcam
    cdef double prec_sum

    for qi in range(num_q):
        qid = q_ids[qi]
        qcam = q_cams[qi]
        kept = 0
        hits = 0
        first_hit = -1
        prec_sum = 0.0
        for pos in range(num_g):
            g = order[qi, pos]
            if g_ids[g] == qid and g_cams[g] == qcam:
                continue
            kept += 1
            if g_ids[g] == qid:
                hits += 1
                prec_sum += (<double>hits) / (<double>kept)
                if first_hit < 0:
                    first_hit = kept
        if hits == 0:
            continue
        valid_v[qi] = 1
        ap_v[qi] = prec_sum / (<double>hits)
        for r in range(max_rank):
            if r + 1 >= first_hit:
                cmc_v[qi, r] = 1.0
    return cmc, ap, valid
