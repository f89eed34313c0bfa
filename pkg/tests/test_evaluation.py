import numpy as np
import pytest

from sctreid.errors import DataError
from sctreid.evaluation import MetricsReport, evaluate, pairwise_euclidean


def bruteforce_metrics(distmat, q_ids, q_cams, g_ids, g_cams, max_rank):
    """Per-query enumeration oracle: plain loops, no shared code with the
    implementation under test."""
    cmc_rows, aps = [], []
    dropped = 0
    for qi in range(len(q_ids)):
        entries = sorted(
            (float(distmat[qi, gi]), gi) for gi in range(len(g_ids)))
        filtered = [gi for _, gi in entries
                    if not (g_ids[gi] == q_ids[qi] and g_cams[gi] == q_cams[qi])]
        hits = [pos + 1 for pos, gi in enumerate(filtered)
                if g_ids[gi] == q_ids[qi]]
        if not hits:
            dropped += 1
            continue
        precisions = [(i + 1) / rank for i, rank in enumerate(hits)]
        aps.append(sum(precisions) / len(hits))
        row = [1.0 if hits[0] <= r else 0.0 for r in range(1, max_rank + 1)]
        cmc_rows.append(row)
    cmc = [sum(col) / len(cmc_rows) for col in zip(*cmc_rows)]
    return cmc, sum(aps) / len(aps), len(aps), dropped


class TestPairwiseEuclidean:
    def test_three_four_five(self):
        d = pairwise_euclidean([[0.0, 0.0]], [[3.0, 4.0]])
        assert abs(d[0, 0] - 5.0) < 1e-12

    def test_identical_vectors_give_zero(self):
        d = pairwise_euclidean([[1.0, 2.0, 3.0]], [[1.0, 2.0, 3.0]])
        assert d[0, 0] == 0.0

    def test_symmetric_on_self(self, rng):
        x = rng.normal(size=(6, 4))
        d = pairwise_euclidean(x, x)
        assert np.allclose(d, d.T, atol=1e-12)
        assert np.allclose(np.diag(d), 0.0, atol=1e-12)

    def test_matches_double_loop_oracle(self, rng):
        q = rng.normal(size=(5, 7))
        g = rng.normal(size=(6, 7))
        d = pairwise_euclidean(q, g)
        for i in range(5):
            for j in range(6):
                ref = np.sqrt(((q[i] - g[j]) ** 2).sum())
                assert abs(d[i, j] - ref) < 1e-6

    def test_width_mismatch_rejected(self, rng):
        with pytest.raises(DataError, match="width"):
            pairwise_euclidean(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)))


class TestEvaluate:
    def test_perfect_ranking(self):
        dist = np.array([[0.1, 0.9], [0.9, 0.1]])
        rep = evaluate(dist, [0, 1], [0, 0], [0, 1], [1, 1], max_rank=2)
        assert rep.rank(1) == 1.0 and rep.map == 1.0

    def test_ap_with_hits_at_ranks_one_and_three(self):
        # gallery of 4: correct at filtered ranks 1 and 3
        dist = np.array([[0.1, 0.2, 0.3, 0.4]])
        g_ids = [5, 6, 5, 7]
        rep = evaluate(dist, [5], [0], g_ids, [1, 1, 1, 1], max_rank=4)
        assert abs(rep.map - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12
        assert rep.rank(1) == 1.0

    def test_single_match_at_rank_two_of_five(self):
        dist = np.array([[0.1, 0.2, 0.3, 0.4, 0.5]])
        g_ids = [9, 5, 8, 7, 6]
        rep = evaluate(dist, [5], [0], g_ids, [1] * 5, max_rank=5)
        assert rep.rank(1) == 0.0
        assert rep.rank(5) == 1.0
        assert abs(rep.map - 0.5) < 1e-12

    def test_same_camera_same_id_is_excluded(self):
        # the nearest entry shares id AND camera: must not count as a hit
        dist = np.array([[0.1, 0.2]])
        rep = evaluate(dist, [5], [0], [5, 5], [0, 1], max_rank=2)
        assert rep.rank(1) == 1.0  # filtered list has one entry, a hit

    def test_query_without_valid_match_dropped_and_counted(self):
        # query 0's only same-id entry shares its camera -> dropped;
        # query 1 still matches across cameras
        dist = np.array([[0.1, 0.9], [0.9, 0.1]])
        rep = evaluate(dist, [5, 6], [0, 0], [5, 6], [0, 1], max_rank=2)
        assert rep.num_valid_queries == 1
        assert rep.num_dropped_queries == 1
        assert rep.map == 1.0

    def test_all_queries_dropped_is_an_error(self):
        dist = np.array([[0.1]])
        with pytest.raises(DataError, match="no query"):
            evaluate(dist, [5], [0], [5], [0], max_rank=1)

    def test_cmc_monotone_and_reaches_one(self, rng):
        q_ids = rng.integers(0, 4, size=6)
        g_ids = np.concatenate([np.arange(4), rng.integers(0, 4, size=8)])
        dist = rng.random((6, 12))
        rep = evaluate(dist, q_ids, np.zeros(6, int), g_ids,
                       np.ones(12, int), max_rank=12)
        cmc = np.array(rep.cmc)
        assert np.all(np.diff(cmc) >= -1e-12)
        assert abs(cmc[-1] - 1.0) < 1e-12

    def test_matches_bruteforce_on_random_instances(self, rng):
        for impl in ("pure", "compiled"):
            for _ in range(40):
                num_q = int(rng.integers(1, 6))
                num_g = int(rng.integers(4, 21))
                q_ids = rng.integers(0, 4, size=num_q)
                q_cams = rng.integers(0, 3, size=num_q)
                g_ids = np.concatenate([np.arange(4),
                                        rng.integers(0, 4, size=num_g - 4)])
                g_cams = rng.integers(0, 3, size=num_g)
                dist = rng.random((num_q, num_g))
                max_rank = num_g
                try:
                    rep = evaluate(dist, q_ids, q_cams, g_ids, g_cams,
                                   max_rank=max_rank, impl=impl)
                except DataError:
                    continue  # all queries dropped; oracle agrees trivially
                cmc, mean_ap, valid, dropped = bruteforce_metrics(
                    dist, q_ids, q_cams, g_ids, g_cams, max_rank)
                assert rep.num_valid_queries == valid
                assert rep.num_dropped_queries == dropped
                assert abs(rep.map - mean_ap) < 1e-9
                assert np.allclose(rep.cmc, cmc, atol=1e-9)

    def test_gallery_permutation_invariance(self, rng):
        num_q, num_g = 4, 15
        q_ids = rng.integers(0, 3, size=num_q)
        q_cams = rng.integers(0, 2, size=num_q)
        g_ids = np.concatenate([np.arange(3), rng.integers(0, 3, size=num_g - 3)])
        g_cams = rng.integers(0, 2, size=num_g)
        dist = rng.random((num_q, num_g))
        rep = evaluate(dist, q_ids, q_cams, g_ids, g_cams, max_rank=num_g)
        perm = rng.permutation(num_g)
        rep_p = evaluate(dist[:, perm], q_ids, q_cams, g_ids[perm],
                         g_cams[perm], max_rank=num_g)
        assert np.allclose(rep.cmc, rep_p.cmc, atol=1e-12)
        assert abs(rep.map - rep_p.map) < 1e-12

    def test_pure_and_compiled_agree(self, rng):
        from sctreid._core import compiled_rank

        if compiled_rank() is None:
            pytest.skip("compiled kernel not built")
        num_q, num_g = 8, 30
        q_ids = rng.integers(0, 5, size=num_q)
        q_cams = rng.integers(0, 3, size=num_q)
        g_ids = np.concatenate([np.arange(5), rng.integers(0, 5, size=num_g - 5)])
        g_cams = rng.integers(0, 3, size=num_g)
        dist = rng.random((num_q, num_g))
        a = evaluate(dist, q_ids, q_cams, g_ids, g_cams, impl="pure")
        b = evaluate(dist, q_ids, q_cams, g_ids, g_cams, impl="compiled")
        assert np.allclose(a.cmc, b.cmc, atol=1e-12)
        assert abs(a.map - b.map) < 1e-12

    def test_report_json_roundtrip(self, tmp_path):
        rep = MetricsReport([0.5, 1.0], 0.75, 4, 1)
        path = tmp_path / "r.json"
        rep.to_json(path)
        import json

        loaded = json.loads(path.read_text())
        assert loaded["map"] == 0.75 and loaded["cmc"] == [0.5, 1.0]
