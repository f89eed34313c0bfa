"""Task-specific feature recombination and the interactive promotion losses.

The pre-trained identity classifier decides, per class row, which half of the
channels carries its signal: rows are sorted by descending weight and the
bottom half is zeroed (link deactivation). A sample inherits the keep mask of
its predicted identity row; the complementary channels are all the camera
classifier gets to use. Features split the same way: an identity-task half
and a camera-task half, each of width n/2.

Mask construction is a pure function of frozen weights and runs in numpy;
the losses run in torch against the current encoder.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from sctreid.errors import CheckpointError, DataError
from sctreid.losses import cross_entropy, uniform_target


@dataclass
class ChannelMaskPair:
    """Complementary binary channel masks: identity half and camera half."""

    m_id: np.ndarray
    m_c: np.ndarray

    def validate(self):
        n = self.m_id.shape[0]
        if self.m_c.shape[0] != n:
            raise DataError("mask widths differ")
        if np.any(self.m_id.astype(bool) & self.m_c.astype(bool)):
            raise DataError("masks overlap")
        if not np.all(self.m_id.astype(int) + self.m_c.astype(int) == 1):
            raise DataError("masks do not partition the channels")
        if int(self.m_id.sum()) * 2 != n:
            raise DataError(f"identity mask popcount {int(self.m_id.sum())} != n/2")


@dataclass
class RecombinedFeaturePair:
    f_tilde: np.ndarray        # identity-task half, width n/2
    f_bar: np.ndarray          # camera-task half, width n/2
    id_indices: np.ndarray     # channels kept for the identity half (ascending)
    cam_indices: np.ndarray


def predict_class_index(f, weight):
    """Index of the best-scoring class row; ties break to the lowest index."""
    f = np.asarray(f, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.shape[1] != f.shape[0]:
        raise DataError(f"width mismatch: classifier {weight.shape[1]}, "
                        f"feature {f.shape[0]}")
    return int(np.argmax(weight @ f))


def deactivate_row(row, keep_fraction=0.5):
    """Zero the lowest (1 - keep_fraction) of a row's entries by value.

    Sorting is by descending signed value with stable ties (equal values keep
    their original order), survivors stay at their original positions.
    Returns (deactivated row, keep mask).
    """
    row = np.asarray(row, dtype=np.float64)
    n = row.shape[0]
    keep_exact = n * keep_fraction
    keep = int(round(keep_exact))
    if abs(keep_exact - keep) > 1e-9:
        raise DataError(
            f"keep_fraction {keep_fraction} does not divide width {n} evenly")
    order = np.argsort(-row, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:keep]] = True
    return np.where(mask, row, 0.0), mask


def build_deactivated_identity_classifier(w_id, keep_fraction=0.5):
    """Apply deactivate_row to every class row independently.

    Returns (w_id0 [m, n], keep_masks [m, n] bool).
    """
    w_id = np.asarray(w_id, dtype=np.float64)
    rows, masks = zip(*(deactivate_row(r, keep_fraction) for r in w_id))
    return np.stack(rows), np.stack(masks)


def deactivated_camera_row(cam_row, identity_keep_mask):
    """Camera weights survive only where the identity row was deactivated."""
    cam_row = np.asarray(cam_row, dtype=np.float64)
    identity_keep_mask = np.asarray(identity_keep_mask, dtype=bool)
    if cam_row.shape[0] != identity_keep_mask.shape[0]:
        raise DataError("mask width does not match camera row width")
    return np.where(identity_keep_mask, 0.0, cam_row)


def masks_from_keep(identity_keep_mask):
    pair = ChannelMaskPair(identity_keep_mask.astype(np.uint8),
                           (~identity_keep_mask.astype(bool)).astype(np.uint8))
    return pair


def recombine(f, masks, w_id0_row, w_cam0_row):
    """Gather each half's surviving channels into dense width-n/2 vectors.

    The classifier rows are gathered with the same index lists, so dot
    products are preserved: <f_tilde, w_tilde_row> == <f * m_id, w_row>.
    Returns (RecombinedFeaturePair, w_id0 row gathered, w_cam0 row gathered).
    """
    masks.validate()
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    if masks.m_id.shape[0] != n:
        raise DataError("mask width does not match feature width")
    id_idx = np.flatnonzero(masks.m_id)
    cam_idx = np.flatnonzero(masks.m_c)
    pair = RecombinedFeaturePair(f[id_idx], f[cam_idx], id_idx, cam_idx)
    return pair, np.asarray(w_id0_row)[id_idx], np.asarray(w_cam0_row)[cam_idx]


@dataclass
class UniformTargets:
    """Confusion targets: uniform over identities / joint cameras."""

    y_bar: torch.Tensor
    c_bar: torch.Tensor

    @classmethod
    def build(cls, num_identities, num_joint_cameras, dtype=torch.float32):
        return cls(uniform_target(num_identities, dtype),
                   uniform_target(num_joint_cameras, dtype))


class MaskTable:
    """Frozen per-sample channel masks, built once at promotion-stage entry.

    Keyed by sample_id; each entry records the predicted identity row i_th,
    the camera row j_th (classifier argmax, true label fallback under low
    confidence) and the identity keep mask of row i_th.
    """

    def __init__(self, n, keep_fraction, w_id0, row_keep_masks):
        self.n = n
        self.keep_fraction = keep_fraction
        self.w_id0 = np.asarray(w_id0, dtype=np.float64)
        self.row_keep_masks = np.asarray(row_keep_masks, dtype=bool)
        self.entries = {}  # sample_id -> (i_th, j_th)

    def add(self, sample_id, i_th, j_th):
        self.entries[sample_id] = (int(i_th), int(j_th))

    def mask_pair(self, sample_id):
        i_th, _ = self.entries[sample_id]
        return masks_from_keep(self.row_keep_masks[i_th])

    def id_mask_matrix(self, sample_ids, dtype=torch.float32):
        """Stacked m_id rows for a batch, as a torch tensor [B, n]."""
        try:
            rows = [self.row_keep_masks[self.entries[sid][0]] for sid in sample_ids]
        except KeyError as exc:
            raise DataError(f"sample {exc.args[0]!r} missing from mask table") from exc
        return torch.as_tensor(np.stack(rows).astype(np.float64), dtype=dtype)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        ids = sorted(self.entries)
        rows = np.array([[self.entries[sid][0], self.entries[sid][1]]
                         for sid in ids], dtype=np.int64)
        blobs = {
            "w_id0.bin": self.w_id0.astype("<f8").tobytes(),
            "row_keep_masks.bin": self.row_keep_masks.astype(np.uint8).tobytes(),
            "sample_rows.bin": rows.astype("<i8").tobytes(),
        }
        index = {
            "n": self.n, "keep_fraction": self.keep_fraction,
            "num_rows": self.w_id0.shape[0], "sample_ids": ids,
            "checksums": {},
        }
        for name, payload in blobs.items():
            index["checksums"][name] = hashlib.sha256(payload).hexdigest()
            with open(os.path.join(directory, name), "wb") as fh:
                fh.write(payload)
        with open(os.path.join(directory, "index.json"), "w") as fh:
            json.dump(index, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "index.json")) as fh:
            index = json.load(fh)
        blobs = {}
        for name, digest in index["checksums"].items():
            with open(os.path.join(directory, name), "rb") as fh:
                payload = fh.read()
            if hashlib.sha256(payload).hexdigest() != digest:
                raise CheckpointError(f"mask blob {name} failed its checksum")
            blobs[name] = payload
        m, n = index["num_rows"], index["n"]
        table = cls(
            n, index["keep_fraction"],
            np.frombuffer(blobs["w_id0.bin"], dtype="<f8").reshape(m, n).copy(),
            np.frombuffer(blobs["row_keep_masks.bin"],
                          dtype=np.uint8).reshape(m, n).astype(bool))
        rows = np.frombuffer(blobs["sample_rows.bin"], dtype="<i8").reshape(-1, 2)
        for sid, (i_th, j_th) in zip(index["sample_ids"], rows):
            table.add(sid, i_th, j_th)
        return table


def build_mask_table(globals_by_sample, w_id, w_cam, true_joint_camera,
                     keep_fraction=0.5, confidence_threshold=0.5):
    """Construct the frozen mask table from pre-trained classifiers.

    globals_by_sample: sample_id -> global feature (numpy). The identity row
    comes from the identity classifier's argmax; the camera row from the
    camera classifier's argmax, falling back to the true joint camera label
    when the softmax confidence is below the threshold.
    """
    w_id = np.asarray(w_id, dtype=np.float64)
    w_cam = np.asarray(w_cam, dtype=np.float64)
    w_id0, keep_masks = build_deactivated_identity_classifier(w_id, keep_fraction)
    table = MaskTable(w_id.shape[1], keep_fraction, w_id0, keep_masks)
    for sid, g in globals_by_sample.items():
        g = np.asarray(g, dtype=np.float64)
        i_th = predict_class_index(g, w_id)
        cam_scores = w_cam @ g
        shifted = np.exp(cam_scores - cam_scores.max())
        probs = shifted / shifted.sum()
        j_pred = int(np.argmax(cam_scores))
        j_th = j_pred if probs[j_pred] >= confidence_threshold \
            else int(true_joint_camera[sid])
        table.add(sid, i_th, j_th)
    return table


def _gathered_logits(weight, channel_indices, features_half):
    """Positional pairing of a gathered classifier with a gathered feature.

    weight: [R, n] torch; channel_indices: [B, n/2] long; features_half:
    [B, n/2]. Row r of the per-sample classifier is weight[r, idx[b]].
    """
    gathered = weight[:, channel_indices]            # [R, B, n/2]
    return torch.einsum("rbh,bh->br", gathered, features_half)


def ipl_identity_loss(features, m_id, labels_identity, labels_joint_camera,
                      w_id0, w_cam):
    """Recombined features must still classify to their true identity and
    camera: mean CE on the identity half + mean CE on the camera half.

    features [B, n] torch (grad flows to the encoder); m_id [B, n] float
    masks; w_id0 the deactivated identity classifier (torch [m, n], frozen);
    w_cam the camera classifier weight (torch [C, n], frozen).
    """
    if m_id.shape != features.shape:
        raise DataError("mask batch does not match feature batch")
    logits_id = (features * m_id) @ w_id0.T
    logits_cam = (features * (1.0 - m_id)) @ w_cam.T
    return cross_entropy(logits_id, labels_identity) + \
        cross_entropy(logits_cam, labels_joint_camera)


def ipl_confusion_loss(features, m_id, w_id0, w_cam, targets):
    """Each half must carry nothing about the other task: the camera half is
    pushed to a uniform identity prediction and the identity half to a
    uniform camera prediction, through the recombined classifiers."""
    if m_id.shape != features.shape:
        raise DataError("mask batch does not match feature batch")
    half = features.shape[1] // 2
    id_idx = torch.argsort(-m_id, dim=1, stable=True)[:, :half].sort(dim=1).values
    cam_idx = torch.argsort(m_id, dim=1, stable=True)[:, :half].sort(dim=1).values
    f_tilde = features.gather(1, id_idx)
    f_bar = features.gather(1, cam_idx)
    logits_id_on_bar = _gathered_logits(w_id0, id_idx, f_bar)
    logits_cam_on_tilde = _gathered_logits(w_cam, cam_idx, f_tilde)
    return cross_entropy(logits_id_on_bar, targets.y_bar.to(features.dtype)) + \
        cross_entropy(logits_cam_on_tilde, targets.c_bar.to(features.dtype))


def ipl_total(features, m_id, labels_identity, labels_joint_camera,
              w_id0, w_cam, targets):
    """Promotion loss: classification consistency plus cross-task confusion."""
    return ipl_identity_loss(features, m_id, labels_identity,
                             labels_joint_camera, w_id0, w_cam) + \
        ipl_confusion_loss(features, m_id, w_id0, w_cam, targets)
