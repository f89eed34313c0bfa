"""Domain-adaptive person re-identification for single-camera-training targets.

Submodules: manifests/synth/sampler (data), encoder/losses (features and
pre-training), recombination (task-split masks and promotion), alignment
(instance style transfer), clustering/consistency (pseudo-label learning),
evaluation (CMC/mAP), trainer (staged optimization), cli (entry points).
"""

__version__ = "0.1.0"
