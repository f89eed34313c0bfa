"""Cross-entropy and batch-hard triplet primitives plus the pre-training losses.

Cross-entropy accepts either class indices or probability-vector targets (the
uniform "confusion" targets downstream are distributions). The triplet loss
mines the hardest positive and hardest negative per anchor within the batch.
"""

import torch
import torch.nn.functional as F

from sctreid.errors import DataError


def cross_entropy(logits, target, reduction="mean"):
    """Cross-entropy for index targets or probability-vector targets.

    logits: [C] or [B, C]. Index targets: int tensor/scalar. Distribution
    targets: float tensor summing to 1 (within 1e-6) along the class axis,
    broadcast over the batch when 1-D.
    """
    single = logits.dim() == 1
    if single:
        logits = logits.unsqueeze(0)
    logp = F.log_softmax(logits, dim=-1)
    if isinstance(target, int) or (torch.is_tensor(target) and
                                   not target.is_floating_point()):
        idx = torch.as_tensor(target, device=logits.device).reshape(-1)
        if idx.numel() == 1 and logp.shape[0] > 1:
            idx = idx.expand(logp.shape[0])
        if int(idx.max()) >= logits.shape[-1] or int(idx.min()) < 0:
            raise DataError(
                f"class index out of range for width {logits.shape[-1]}")
        per_sample = -logp.gather(1, idx.unsqueeze(1)).squeeze(1)
    else:
        target = torch.as_tensor(target, dtype=logits.dtype, device=logits.device)
        if target.dim() == 1:
            target = target.unsqueeze(0).expand(logp.shape[0], -1)
        if target.shape[-1] != logits.shape[-1]:
            raise DataError(
                f"target width {target.shape[-1]} != logits width {logits.shape[-1]}")
        sums = target.sum(dim=-1)
        if not torch.allclose(sums, torch.ones_like(sums), atol=1e-6):
            raise DataError("distribution target does not sum to 1")
        per_sample = -(target * logp).sum(dim=-1)
    if reduction == "none":
        return per_sample if not single else per_sample[0]
    if reduction == "sum":
        return per_sample.sum()
    return per_sample.mean()


def uniform_target(num_classes, dtype=torch.float32):
    return torch.full((num_classes,), 1.0 / num_classes, dtype=dtype)


def pairwise_distances(features):
    """Euclidean distance matrix with a tiny clamp for gradient safety."""
    sq = (features * features).sum(dim=1)
    d2 = sq.unsqueeze(1) + sq.unsqueeze(0) - 2.0 * features @ features.T
    return d2.clamp(min=1e-12).sqrt()


def triplet_loss(features, labels, margin=0.3, return_stats=False):
    """Batch-hard triplet loss: mean over anchors of
    max(0, margin + hardest_positive - hardest_negative).

    Anchors without another same-label sample are skipped (and counted when
    return_stats is set). A batch with a single label has no negatives at
    all and is an error.
    """
    labels = torch.as_tensor(labels, device=features.device)
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=features.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    if not neg_mask.any():
        raise DataError("triplet loss needs at least two distinct labels")

    dist = pairwise_distances(features)
    valid = pos_mask.any(dim=1)
    if not valid.any():
        raise DataError("no anchor has a positive in the batch")
    d_ap = dist.masked_fill(~pos_mask, float("-inf")).max(dim=1).values
    d_an = dist.masked_fill(~neg_mask, float("inf")).min(dim=1).values
    hinge = F.relu(margin + d_ap[valid] - d_an[valid])
    loss = hinge.mean()
    if return_stats:
        return loss, int((~valid).sum())
    return loss


def pretrain_identity_loss(globals_, locals_, w_id, labels, margin=0.3):
    """Identity pre-training: CE + triplet on the global token, plus the mean
    over local tokens of the same pair. Local streams mine independently."""
    loss = cross_entropy(w_id(globals_), labels) + \
        triplet_loss(globals_, labels, margin)
    num_locals = locals_.shape[1] if locals_ is not None and locals_.dim() == 3 else 0
    if num_locals:
        local_sum = 0.0
        for k in range(num_locals):
            tok = locals_[:, k]
            local_sum = local_sum + cross_entropy(w_id(tok), labels) + \
                triplet_loss(tok, labels, margin)
        loss = loss + local_sum / num_locals
    return loss


def pretrain_camera_loss(features, w_cam, camera_labels):
    """Camera classifier pre-training: summed per-sample cross-entropy over
    the joint (source + target) camera label space."""
    labels = torch.as_tensor(camera_labels, device=features.device)
    if int(labels.max()) >= w_cam.weight.shape[0]:
        raise DataError(
            f"joint camera index {int(labels.max())} out of range for "
            f"{w_cam.weight.shape[0]} cameras; source and target ids must be offset")
    return cross_entropy(w_cam(features), labels, reduction="sum")
