"""Cross-camera identity consistency on the target domain.

Cluster pseudo-labels pull similar pedestrians together across cameras (the
SCT constraint means no true cross-camera positives exist, so similarity has
to stand in); ground-truth intra-camera identities sharpen hard negatives;
batch-hard triplets use same-camera positives and any-camera negatives.
"""

import json
from dataclasses import dataclass

import numpy as np
import torch

from sctreid.alignment import camera_confusion_loss
from sctreid.clustering import kmeans
from sctreid.errors import DataError
from sctreid.losses import cross_entropy, triplet_loss
from sctreid.manifests import intra_camera_classes


@dataclass
class PseudoLabelTable:
    """Per-epoch cluster assignments plus intra-camera ground-truth classes."""

    cluster_of: dict            # sample_id -> cluster index in [0, k)
    intra_camera_label_of: dict  # sample_id -> (camera, local identity) class
    k: int
    num_intra_classes: int
    epoch: int = -1

    def validate_fresh(self, current_epoch):
        if self.epoch != current_epoch:
            raise DataError(
                f"stale pseudo-label table: built at epoch {self.epoch}, "
                f"now at {current_epoch}")

    def cluster_labels(self, sample_ids):
        try:
            return torch.as_tensor([self.cluster_of[s] for s in sample_ids])
        except KeyError as exc:
            raise DataError(f"unknown sample_id {exc.args[0]!r}") from exc

    def intra_labels(self, sample_ids):
        try:
            return torch.as_tensor(
                [self.intra_camera_label_of[s] for s in sample_ids])
        except KeyError as exc:
            raise DataError(f"unknown sample_id {exc.args[0]!r}") from exc

    def dump_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"kind": "header", "epoch": self.epoch,
                                 "k": self.k,
                                 "num_intra_classes": self.num_intra_classes}) + "\n")
            for sid in sorted(self.cluster_of):
                fh.write(json.dumps({
                    "id": sid, "cluster": int(self.cluster_of[sid]),
                    "intra_class": int(self.intra_camera_label_of[sid])}) + "\n")


def cluster_target_features(features, sample_ids, manifest, k, seed, epoch=-1,
                            max_iter=100, tol=1e-4):
    """Build the pseudo-label table: k-means over L2-normalized features plus
    the manifest's ground-truth (camera, local identity) classes."""
    features = np.asarray(features, dtype=np.float64)
    if k > features.shape[0]:
        raise DataError(
            f"cluster count {k} exceeds target sample count {features.shape[0]}")
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    normalized = features / np.maximum(norms, 1e-12)
    labels, _, _ = kmeans(normalized, k, seed, max_iter=max_iter, tol=tol)
    intra_of, num_intra = intra_camera_classes(manifest)
    cluster_of = {sid: int(lbl) for sid, lbl in zip(sample_ids, labels)}
    return PseudoLabelTable(cluster_of, intra_of, k, num_intra, epoch)


def cluster_identity_loss(features, sample_ids, table, w_t_id, m_id, w_cam_weight,
                          current_epoch=None):
    """Cluster-label CE on the target batch plus camera confusion."""
    if current_epoch is not None:
        table.validate_fresh(current_epoch)
    labels = table.cluster_labels(sample_ids).to(features.device)
    return cross_entropy(w_t_id(features), labels) + \
        camera_confusion_loss(features, m_id, w_cam_weight)


def intra_camera_identity_loss(features, sample_ids, table, w_t_id_tilde):
    """CE against the global (camera, local identity) classes."""
    labels = table.intra_labels(sample_ids).to(features.device)
    return cross_entropy(w_t_id_tilde(features), labels)


def target_triplet_loss(features, sample_ids, table, margin=0.3):
    """Batch-hard triplets over intra-camera classes: the hardest positive is
    by construction from the same camera, the hardest negative comes from
    anywhere in the mini-batch."""
    labels = table.intra_labels(sample_ids).to(features.device)
    return triplet_loss(features, labels, margin)


def icl_total(features, sample_ids, table, w_t_id, w_t_id_tilde, m_id,
              w_cam_weight, margin=0.3, current_epoch=None):
    """Consistency total. Returns (total, per-term dict)."""
    parts = {
        "id_intra": intra_camera_identity_loss(features, sample_ids, table,
                                               w_t_id_tilde),
        "tri_target": target_triplet_loss(features, sample_ids, table, margin),
        "cluster": cluster_identity_loss(features, sample_ids, table, w_t_id,
                                         m_id, w_cam_weight, current_epoch),
    }
    return parts["id_intra"] + parts["tri_target"] + parts["cluster"], parts
