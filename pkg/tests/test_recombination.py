import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sctreid.encoder import EncoderConfig, build_encoder
from sctreid.errors import DataError
from sctreid.recombination import (ChannelMaskPair, MaskTable, UniformTargets,
                                   build_deactivated_identity_classifier,
                                   build_mask_table, deactivate_row,
                                   deactivated_camera_row, ipl_confusion_loss,
                                   ipl_identity_loss, ipl_total,
                                   masks_from_keep, predict_class_index,
                                   recombine)

from _fd import fd_gradcheck


class TestPredictClassIndex:
    def test_identity_matrix_argmax(self):
        w = np.eye(3)
        assert predict_class_index([0.1, 0.7, 0.2], w) == 1

    def test_all_equal_scores_pick_lowest_index(self):
        w = np.ones((4, 3))
        assert predict_class_index([0.3, 0.3, 0.3], w) == 0

    def test_matches_bruteforce_dot_products(self, rng):
        for _ in range(50):
            w = rng.normal(size=(5, 8))
            f = rng.normal(size=8)
            scores = [float(np.dot(row, f)) for row in w]
            best = max(range(5), key=lambda i: (scores[i], -i))
            assert predict_class_index(f, w) == best


class TestDeactivateRow:
    def test_hand_traced_case(self):
        out, mask = deactivate_row([0.9, -0.2, 0.5, 0.1])
        assert np.allclose(out, [0.9, 0.0, 0.5, 0.0])
        assert mask.tolist() == [True, False, True, False]

    def test_all_equal_keeps_first_positions(self):
        out, mask = deactivate_row([2.0, 2.0, 2.0, 2.0])
        assert mask.tolist() == [True, True, False, False]
        assert np.allclose(out, [2.0, 2.0, 0.0, 0.0])

    def test_keep_fraction_one_is_identity(self):
        row = [0.4, -0.1, 0.2, 0.3]
        out, mask = deactivate_row(row, keep_fraction=1.0)
        assert np.allclose(out, row)
        assert mask.all()

    def test_odd_width_rejected(self):
        with pytest.raises(DataError, match="evenly"):
            deactivate_row([1.0, 2.0, 3.0])

    def test_survivors_are_largest_by_signed_value(self, rng):
        for _ in range(50):
            row = rng.normal(size=10)
            out, mask = deactivate_row(row)
            kept = sorted(row[mask])
            dropped = sorted(row[~mask])
            assert len(kept) == 5
            assert min(kept) >= max(dropped)
            assert np.allclose(out[mask], row[mask])
            assert np.all(out[~mask] == 0)


class TestDeactivatedClassifiers:
    def test_rows_processed_independently(self, rng):
        w = rng.normal(size=(2, 4))
        w0, masks = build_deactivated_identity_classifier(w)
        for r in range(2):
            row0, mask = deactivate_row(w[r])
            assert np.allclose(w0[r], row0)
            assert np.array_equal(masks[r], mask)

    def test_equal_rows_get_identical_masks(self):
        w = np.array([[0.5, -1.0, 2.0, 0.0], [0.5, -1.0, 2.0, 0.0]])
        _, masks = build_deactivated_identity_classifier(w)
        assert np.array_equal(masks[0], masks[1])

    def test_total_zero_count(self, rng):
        w = rng.normal(size=(10, 8))
        w0, _ = build_deactivated_identity_classifier(w)
        assert int((w0 == 0).sum()) == 10 * 8 // 2

    def test_camera_row_complement_rule(self):
        keep = np.array([True, False, True, False])
        row = deactivated_camera_row([1.0, 2.0, 3.0, 4.0], keep)
        assert np.allclose(row, [0.0, 2.0, 0.0, 4.0])

    def test_camera_row_all_zero_when_identity_keeps_all(self):
        keep = np.ones(4, dtype=bool)
        row = deactivated_camera_row([1.0, 2.0, 3.0, 4.0], keep)
        assert np.all(row == 0)

    def test_supports_disjoint_bruteforce(self, rng):
        for _ in range(50):
            w_id_row = rng.normal(size=12)
            cam_row = rng.normal(size=12)
            id_row0, keep = deactivate_row(w_id_row)
            cam_row0 = deactivated_camera_row(cam_row, keep)
            joint = set(np.flatnonzero(id_row0)) & set(np.flatnonzero(cam_row0))
            assert joint == set()


class TestRecombine:
    def test_gather_semantics(self):
        masks = masks_from_keep(np.array([True, False, True, False]))
        pair, w_id_g, w_cam_g = recombine(
            [1.0, 2.0, 3.0, 4.0], masks,
            w_id0_row=[0.5, 0.0, -0.5, 0.0], w_cam0_row=[0.0, 9.0, 0.0, 7.0])
        assert np.allclose(pair.f_tilde, [1.0, 3.0])
        assert np.allclose(pair.f_bar, [2.0, 4.0])
        assert np.allclose(w_id_g, [0.5, -0.5])
        assert np.allclose(w_cam_g, [9.0, 7.0])

    def test_partition_property(self, rng):
        for _ in range(20):
            row = rng.normal(size=16)
            _, keep = deactivate_row(row)
            masks = masks_from_keep(keep)
            pair, _, _ = recombine(rng.normal(size=16), masks,
                                   np.zeros(16), np.zeros(16))
            combined = sorted(list(pair.id_indices) + list(pair.cam_indices))
            assert combined == list(range(16))

    def test_dot_product_preservation(self, rng):
        for _ in range(100):
            w_row = rng.normal(size=16)
            f = rng.normal(size=16)
            row0, keep = deactivate_row(w_row)
            masks = masks_from_keep(keep)
            cam_row0 = deactivated_camera_row(rng.normal(size=16), keep)
            pair, w_id_g, w_cam_g = recombine(f, masks, row0, cam_row0)
            assert abs(np.dot(pair.f_tilde, w_id_g) -
                       np.dot(f * masks.m_id, row0)) < 1e-6
            assert abs(np.dot(pair.f_bar, w_cam_g) -
                       np.dot(f * masks.m_c, cam_row0)) < 1e-6

    def test_bad_mask_popcount_rejected(self):
        masks = ChannelMaskPair(np.array([1, 1, 1, 0], np.uint8),
                                np.array([0, 0, 0, 1], np.uint8))
        with pytest.raises(DataError, match="popcount"):
            recombine([1.0, 2.0, 3.0, 4.0], masks, np.zeros(4), np.zeros(4))


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=2, max_value=16), st.integers(0, 2**31 - 1))
def test_mask_partition_property(half_width, seed):
    n = 2 * half_width
    row = np.random.default_rng(seed).normal(size=n)
    _, keep = deactivate_row(row)
    masks = masks_from_keep(keep)
    masks.validate()  # overlap, partition, popcount
    assert int(masks.m_id.sum()) == half_width
    assert int(masks.m_c.sum()) == half_width


class TestMaskTable:
    def _table(self, rng, n=8, m=3, cams=4, num_samples=6):
        w_id = rng.normal(size=(m, n))
        w_cam = rng.normal(size=(cams, n))
        feats = {f"s{i}": rng.normal(size=n) for i in range(num_samples)}
        true_cam = {sid: i % cams for i, sid in enumerate(feats)}
        return build_mask_table(feats, w_id, w_cam, true_cam), w_id, w_cam, feats

    def test_masks_follow_predicted_identity_row(self, rng):
        table, w_id, _, feats = self._table(rng)
        _, keep_masks = build_deactivated_identity_classifier(w_id)
        for sid, f in feats.items():
            i_th = predict_class_index(f, w_id)
            assert table.entries[sid][0] == i_th
            pair = table.mask_pair(sid)
            assert np.array_equal(pair.m_id.astype(bool), keep_masks[i_th])

    def test_low_confidence_camera_falls_back_to_true_label(self, rng):
        n = 8
        w_id = rng.normal(size=(3, n))
        w_cam = np.zeros((4, n))  # uniform camera prediction, confidence 0.25
        feats = {"a": rng.normal(size=n)}
        table = build_mask_table(feats, w_id, w_cam, {"a": 2},
                                 confidence_threshold=0.5)
        assert table.entries["a"][1] == 2

    def test_save_load_roundtrip(self, rng, tmp_path):
        table, _, _, _ = self._table(rng)
        table.save(tmp_path / "masks")
        again = MaskTable.load(tmp_path / "masks")
        assert again.entries == table.entries
        assert np.array_equal(again.row_keep_masks, table.row_keep_masks)
        assert np.allclose(again.w_id0, table.w_id0)

    def test_tampered_blob_rejected(self, rng, tmp_path):
        from sctreid.errors import CheckpointError

        table, _, _, _ = self._table(rng)
        table.save(tmp_path / "masks")
        blob = tmp_path / "masks" / "w_id0.bin"
        raw = bytearray(blob.read_bytes())
        raw[0] ^= 0xFF
        blob.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            MaskTable.load(tmp_path / "masks")


def _ipl_setup(dtype=torch.float64, batch=4, n=8, m=4, cams=3, seed=0):
    torch.manual_seed(seed)
    gen = np.random.default_rng(seed)
    w_id = gen.normal(size=(m, n))
    w_id0_np, keep_masks = build_deactivated_identity_classifier(w_id)
    w_id0 = torch.as_tensor(w_id0_np, dtype=dtype)
    w_cam = torch.as_tensor(gen.normal(size=(cams, n)), dtype=dtype)
    rows = gen.integers(0, m, size=batch)
    m_id = torch.as_tensor(keep_masks[rows].astype(np.float64), dtype=dtype)
    feats = torch.randn(batch, n, dtype=dtype)
    y = torch.as_tensor(gen.integers(0, m, size=batch))
    c = torch.as_tensor(gen.integers(0, cams, size=batch))
    targets = UniformTargets.build(m, cams, dtype=dtype)
    return feats, m_id, y, c, w_id0, w_cam, targets


class TestIplLosses:
    def test_identity_loss_saturates_when_correct(self):
        # one-channel-per-class constructions with huge magnitudes
        n, m, cams = 8, 2, 2
        w_id0 = torch.zeros(m, n, dtype=torch.float64)
        w_id0[0, 0] = 50.0
        w_id0[1, 1] = 50.0
        w_cam = torch.zeros(cams, n, dtype=torch.float64)
        w_cam[0, 4] = 50.0
        w_cam[1, 5] = 50.0
        m_id = torch.zeros(2, n, dtype=torch.float64)
        m_id[:, :4] = 1.0
        feats = torch.zeros(2, n, dtype=torch.float64)
        feats[0, 0] = 1.0
        feats[0, 4] = 1.0
        feats[1, 1] = 1.0
        feats[1, 5] = 1.0
        loss = ipl_identity_loss(feats, m_id, torch.tensor([0, 1]),
                                 torch.tensor([0, 1]), w_id0, w_cam)
        assert float(loss) < 1e-6

    def test_uniform_logits_hand_value(self):
        feats, m_id, y, c, w_id0, w_cam, _ = _ipl_setup(m=4, cams=3)
        loss = ipl_identity_loss(torch.zeros_like(feats), m_id, y, c,
                                 w_id0, w_cam)
        assert abs(float(loss) - (math.log(4) + math.log(3))) < 1e-9

    def test_confusion_minimum_is_uniform_entropy(self):
        feats, m_id, _, _, w_id0, w_cam, targets = _ipl_setup(m=4, cams=3)
        loss = ipl_confusion_loss(torch.zeros_like(feats), m_id, w_id0, w_cam,
                                  targets)
        assert abs(float(loss) - (math.log(4) + math.log(3))) < 1e-9

    def test_confusion_above_minimum_otherwise(self):
        feats, m_id, _, _, w_id0, w_cam, targets = _ipl_setup(m=4, cams=3)
        loss = ipl_confusion_loss(feats, m_id, w_id0, w_cam, targets)
        assert float(loss) > math.log(4) + math.log(3) - 1e-9

    def test_total_is_sum_of_parts(self):
        feats, m_id, y, c, w_id0, w_cam, targets = _ipl_setup()
        total = ipl_total(feats, m_id, y, c, w_id0, w_cam, targets)
        parts = ipl_identity_loss(feats, m_id, y, c, w_id0, w_cam) + \
            ipl_confusion_loss(feats, m_id, w_id0, w_cam, targets)
        assert torch.allclose(total, parts, atol=1e-12)

    def test_confusion_positional_pairing_against_bruteforce(self):
        # independent per-sample loop over gathered channels
        feats, m_id, _, _, w_id0, w_cam, targets = _ipl_setup(batch=3)
        loss = ipl_confusion_loss(feats, m_id, w_id0, w_cam, targets)
        total = 0.0
        for b in range(feats.shape[0]):
            id_idx = [i for i in range(8) if m_id[b, i] > 0]
            cam_idx = [i for i in range(8) if m_id[b, i] == 0]
            f_bar = feats[b, cam_idx]
            f_tilde = feats[b, id_idx]
            logits_id = torch.stack([
                sum(w_id0[r, id_idx[k]] * f_bar[k] for k in range(4))
                for r in range(w_id0.shape[0])])
            logits_cam = torch.stack([
                sum(w_cam[r, cam_idx[k]] * f_tilde[k] for k in range(4))
                for r in range(w_cam.shape[0])])
            p_id = torch.log_softmax(logits_id, dim=0)
            p_cam = torch.log_softmax(logits_cam, dim=0)
            total = total + (-p_id.mean()) + (-p_cam.mean())
        assert torch.allclose(loss, total / feats.shape[0], atol=1e-9)

    def test_gradients_match_finite_differences(self):
        cfg = EncoderConfig(n=8, num_locals=0, input_dim=6, hidden_dim=6)
        torch.manual_seed(3)
        enc = build_encoder(cfg, dtype=torch.float64)
        x = torch.randn(4, 6, dtype=torch.float64)
        _, m_id, y, c, w_id0, w_cam, targets = _ipl_setup(batch=4)

        def id_loss():
            g, _ = enc(x)
            return ipl_identity_loss(g, m_id, y, c, w_id0, w_cam)

        def conf_loss():
            g, _ = enc(x)
            return ipl_confusion_loss(g, m_id, w_id0, w_cam, targets)

        params = list(enc.parameters())
        assert fd_gradcheck(id_loss, params) < 1e-4
        assert fd_gradcheck(conf_loss, params) < 1e-4
