"""Instance-level feature distribution alignment between domains.

Style here means the first two moments of one instance's feature vector over
its channels. Swapping styles between a source and a target instance (AdaIN
moment transfer) plus a KL consistency term between each feature's channel
distribution and its style-swapped counterpart's pulls both domains onto a
shared distribution; a transferred-identity term trains the identity task
under target style, and uniform camera targets scrub camera evidence from
the deactivated camera channels.

A partner's style enters the losses as a constant: it is an attribute being
borrowed, not a quantity to optimize (letting gradients reach the partner
through its moments drags that instance's geometry toward whatever makes the
other loss easy). Callers either pass moments captured from the current
batch or let the losses capture them, detached, internally.
"""

from dataclasses import dataclass

import torch

from sctreid.errors import DataError
from sctreid.losses import cross_entropy, uniform_target


@dataclass
class StyleStats:
    """Population moments of one instance's channels."""

    mean: float
    std: float
    eps: float = 1e-5


def style_stats(f, eps=1e-5):
    f = torch.as_tensor(f)
    if f.shape[-1] < 2:
        raise DataError("style stats need at least 2 channels")
    mean = f.mean()
    std = f.std(unbiased=False)
    return StyleStats(float(mean), float(std), eps)


def style_swap(f, target_stats):
    """Re-standardize f to the target instance's moments."""
    f = torch.as_tensor(f)
    mean = f.mean()
    std = f.std(unbiased=False)
    return target_stats.std * (f - mean) / (std + target_stats.eps) + target_stats.mean


def _moments(batch):
    mean = batch.mean(dim=1, keepdim=True)
    std = batch.std(dim=1, unbiased=False, keepdim=True)
    return mean, std


def instance_moments(batch):
    """Per-row (mean, std) captured as constants for style borrowing."""
    with torch.no_grad():
        return _moments(batch)


def batch_style_swap(batch, target_mean, target_std, eps=1e-5):
    """Row-wise AdaIN: each row takes the paired row's moments."""
    mean, std = _moments(batch)
    return target_std * (batch - mean) / (std + eps) + target_mean


def channel_distribution(f):
    """Probability distribution over channels: softmax at temperature 1."""
    f = torch.as_tensor(f)
    return torch.softmax(f, dim=-1)


def kl_divergence(p, q):
    """D_KL(P || Q) for strictly positive distributions."""
    p = torch.as_tensor(p)
    q = torch.as_tensor(q)
    if p.shape != q.shape:
        raise DataError("distribution shapes differ")
    return (p * (p / q).log()).sum(dim=-1)


def _cyclic_pairs(num_source, num_target):
    length = max(num_source, num_target)
    idx = torch.arange(length)
    return idx % num_source, idx % num_target


def swap_partners(f_source, f_target):
    """Position-wise pairing with cyclic wrap; returns the paired rows and
    each side's partner moments (constants)."""
    if f_source.shape[0] == 0 or f_target.shape[0] == 0:
        raise DataError("both batch halves must be non-empty")
    si, ti = _cyclic_pairs(f_source.shape[0], f_target.shape[0])
    fs, ft = f_source[si], f_target[ti]
    s_moments = instance_moments(fs)
    t_moments = instance_moments(ft)
    return fs, ft, s_moments, t_moments


def distribution_alignment_loss(f_source, f_target, s_moments=None,
                                t_moments=None, eps=1e-5):
    """Mean over swap pairs of KL(P(f) || Q(f_swapped)) in both directions.

    Pairs go by batch position, wrapping cyclically when the halves differ
    in size. Zero style gap makes the swap an identity and the loss 0.
    """
    fs, ft, captured_s, captured_t = swap_partners(f_source, f_target)
    s_mean, s_std = s_moments if s_moments is not None else captured_s
    t_mean, t_std = t_moments if t_moments is not None else captured_t
    t_to_s = batch_style_swap(ft, s_mean, s_std, eps)
    s_to_t = batch_style_swap(fs, t_mean, t_std, eps)
    kl_t = kl_divergence(channel_distribution(ft), channel_distribution(t_to_s))
    kl_s = kl_divergence(channel_distribution(fs), channel_distribution(s_to_t))
    return (kl_t + kl_s).mean()


def transferred_identity_loss(f_source, f_target, w_id, source_labels,
                              t_moments=None, eps=1e-5):
    """Identity CE on source features restyled to their paired target moments."""
    fs, _, _, captured_t = swap_partners(f_source, f_target)
    t_mean, t_std = t_moments if t_moments is not None else captured_t
    s_to_t = batch_style_swap(fs, t_mean, t_std, eps)
    si, _ = _cyclic_pairs(f_source.shape[0], f_target.shape[0])
    labels = torch.as_tensor(source_labels)[si]
    return cross_entropy(w_id(s_to_t), labels)


def camera_confusion_loss(features, m_id, w_cam):
    """Mean CE of the deactivated camera classifier against a uniform target.

    The deactivated classifier sees only the channels the identity row
    discarded: logits = (f * m_c) @ W_cam^T with m_c = 1 - m_id.
    """
    if m_id.shape != features.shape:
        raise DataError("mask batch does not match feature batch")
    logits = (features * (1.0 - m_id)) @ w_cam.T
    c_bar = uniform_target(w_cam.shape[0], dtype=features.dtype)
    return cross_entropy(logits, c_bar)


def style_total_loss(f_source, f_target, source_labels, m_id_source,
                     m_id_target, w_id, w_cam_weight, eps=1e-5,
                     s_moments=None, t_moments=None):
    """Distribution-consistency total: alignment KL + transferred identity CE
    + camera confusion on both halves. Returns (total, per-term dict)."""
    if s_moments is None or t_moments is None:
        _, _, s_moments, t_moments = swap_partners(f_source, f_target)
    parts = {
        "dir_style": distribution_alignment_loss(f_source, f_target,
                                                 s_moments, t_moments, eps),
        "id_trans": transferred_identity_loss(f_source, f_target, w_id,
                                              source_labels, t_moments, eps),
        "cam_confusion_t": camera_confusion_loss(f_target, m_id_target,
                                                 w_cam_weight),
        "cam_confusion_s": camera_confusion_loss(f_source, m_id_source,
                                                 w_cam_weight),
    }
    total = parts["dir_style"] + parts["id_trans"] + \
        parts["cam_confusion_t"] + parts["cam_confusion_s"]
    return total, parts
