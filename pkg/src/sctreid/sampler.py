"""PK mini-batch sampling: P classes times K instances per domain half.

Source classes are identities; target classes are (camera, local identity)
pairs, which under the SCT constraint is the natural grouping with guaranteed
within-batch positives. Classes with fewer than K instances fall back to
sampling with replacement and are recorded on the batch.
"""

from dataclasses import dataclass, field

from sctreid.errors import DataError
from sctreid.manifests import intra_camera_classes


@dataclass
class SamplingPolicy:
    classes_per_batch: int = 4    # P
    instances_per_class: int = 2  # K

    @property
    def batch_size(self):
        return self.classes_per_batch * self.instances_per_class


@dataclass
class MiniBatch:
    source_samples: list
    target_samples: list
    # classes that needed replacement sampling, as (domain, class index)
    replacement_classes: list = field(default_factory=list)


def _group_by_class(samples, class_of):
    groups = {}
    for i, s in enumerate(samples):
        groups.setdefault(class_of(s), []).append(i)
    return groups


def _draw_half(manifest, groups, policy, rng, domain):
    if len(groups) < policy.classes_per_batch:
        raise DataError(
            f"{domain} half infeasible: policy wants {policy.classes_per_batch} "
            f"classes, manifest has {len(groups)}")
    class_ids = sorted(groups)
    chosen = rng.choice(len(class_ids), size=policy.classes_per_batch, replace=False)
    picked, flagged = [], []
    for ci in sorted(int(c) for c in chosen):
        members = groups[class_ids[ci]]
        if len(members) >= policy.instances_per_class:
            idx = rng.choice(len(members), size=policy.instances_per_class,
                             replace=False)
        else:
            idx = rng.choice(len(members), size=policy.instances_per_class,
                             replace=True)
            flagged.append((domain, class_ids[ci]))
        picked.extend(manifest.samples[members[int(i)]] for i in idx)
    return picked, flagged


def sample_minibatch(source_manifest, target_manifest, policy, rng):
    """Draw one mini-batch; rng is an explicit numpy Generator.

    Every included class contributes at least one (anchor, positive) pair
    since K >= 2 (by replacement if a class is a singleton).
    """
    if policy.instances_per_class < 2:
        raise DataError("policy needs K >= 2 for within-batch positives")
    src_groups = _group_by_class(source_manifest.samples, lambda s: s.identity)
    tgt_class_of, _ = intra_camera_classes(target_manifest)
    tgt_groups = _group_by_class(target_manifest.samples,
                                 lambda s: tgt_class_of[s.sample_id])

    src, src_flags = _draw_half(source_manifest, src_groups, policy, rng, "source")
    tgt, tgt_flags = _draw_half(target_manifest, tgt_groups, policy, rng, "target")
    return MiniBatch(src, tgt, src_flags + tgt_flags)


def sample_source_batch(source_manifest, policy, rng):
    """Source-only batch (pre-training and promotion stages)."""
    src_groups = _group_by_class(source_manifest.samples, lambda s: s.identity)
    src, flags = _draw_half(source_manifest, src_groups, policy, rng, "source")
    return MiniBatch(src, [], flags)
