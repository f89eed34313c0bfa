"""Synthetic SCT dataset generation.

Samples are drawn from per-identity prototypes; every camera applies its own
deterministic affine style transform (per-channel scale and shift), so camera
style is a real nuisance factor the trainer has to remove. The target train
split places each identity under exactly one camera (the SCT constraint);
the optional evaluation split places held-out identities under several
cameras so cross-camera retrieval is measurable.
"""

from dataclasses import dataclass, fields

import numpy as np

from sctreid.errors import ConfigError
from sctreid.manifests import PersonSample, build_manifest, validate_sct

# Seed-stream tags: independent substreams of one user seed.
_STREAM_TRAIN = 0
_STREAM_EVAL = 1
_STREAM_SOURCE_STYLE = 2
_STREAM_TARGET_STYLE = 3


@dataclass
class GeneratorConfig:
    source_identities: int = 20
    target_identities: int = 20
    source_cameras: int = 4
    target_cameras: int = 4
    instances_per_identity: int = 6
    mode: str = "feature"
    feature_dim: int = 32
    image_height: int = 12
    image_width: int = 6
    image_channels: int = 1
    prototype_scale: float = 1.0
    noise_scale: float = 0.3
    style_shift: float = 1.0
    eval_identities: int = 0
    eval_cameras_per_identity: int = 2
    eval_instances: int = 4

    def input_shape(self):
        if self.mode == "feature":
            return (self.feature_dim,)
        return (self.image_height, self.image_width, self.image_channels)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _check_feasible(config):
    if config.mode not in ("feature", "image"):
        raise ConfigError(f"unknown generator mode {config.mode!r}")
    if config.target_identities < config.target_cameras:
        raise ConfigError(
            "infeasible config: need at least one target identity per camera "
            f"({config.target_identities} identities, {config.target_cameras} cameras)")
    if config.source_identities < 1 or config.instances_per_identity < 2:
        raise ConfigError("infeasible config: need >=1 identity and >=2 instances each")
    if config.eval_identities:
        if config.eval_cameras_per_identity < 2:
            raise ConfigError("eval split needs >=2 cameras per identity")
        if config.eval_cameras_per_identity > config.target_cameras:
            raise ConfigError(
                f"eval_cameras_per_identity ({config.eval_cameras_per_identity}) "
                f"exceeds target_cameras ({config.target_cameras})")
        if config.eval_instances < 2:
            raise ConfigError("eval split needs >=2 instances per (identity, camera)")


def _camera_styles(config, stream, num_cameras, dim):
    """Per-camera affine transforms; magnitude 0 collapses all of them onto
    the identity transform so per-camera class means coincide."""
    rng = np.random.default_rng(stream)
    scales = 1.0 + config.style_shift * rng.uniform(-0.5, 0.5, size=(num_cameras, dim))
    shifts = config.style_shift * rng.normal(0.0, 1.0, size=(num_cameras, dim))
    return scales, shifts


def target_style_tables(config, seed):
    """The target domain's camera transforms (shared by train and eval splits)."""
    dim = int(np.prod(config.input_shape()))
    return _camera_styles(config, [int(seed), _STREAM_TARGET_STYLE],
                          config.target_cameras, dim)


def _render(prototype, scale, shift, rng, noise_scale, shape):
    noisy = prototype + noise_scale * rng.normal(0.0, 1.0, size=prototype.shape)
    return (scale * noisy + shift).astype(np.float32).reshape(shape)


def synthesize_sct_dataset(config, seed):
    """Generate (source train, target train) manifests, reproducible per seed.

    The target manifest satisfies the SCT constraint by construction: each
    identity is assigned exactly one camera. The source manifest spreads each
    identity round-robin across cameras.
    """
    _check_feasible(config)
    shape = config.input_shape()
    dim = int(np.prod(shape))
    rng = np.random.default_rng([int(seed), _STREAM_TRAIN])

    src_scales, src_shifts = _camera_styles(
        config, [int(seed), _STREAM_SOURCE_STYLE], config.source_cameras, dim)
    tgt_scales, tgt_shifts = target_style_tables(config, seed)

    src_protos = config.prototype_scale * rng.normal(
        size=(config.source_identities, dim))
    tgt_protos = config.prototype_scale * rng.normal(
        size=(config.target_identities, dim))

    source_samples = []
    for y in range(config.source_identities):
        for i in range(config.instances_per_identity):
            cam = i % config.source_cameras
            source_samples.append(PersonSample(
                f"s{len(source_samples):05d}",
                _render(src_protos[y], src_scales[cam], src_shifts[cam],
                        rng, config.noise_scale, shape), y, cam, "source"))

    # One camera per identity; a seeded permutation fed round-robin keeps
    # every camera non-empty (feasibility guarantees identities >= cameras).
    order = rng.permutation(config.target_identities)
    camera_of_identity = np.empty(config.target_identities, dtype=np.int64)
    for rank, y in enumerate(order):
        camera_of_identity[y] = rank % config.target_cameras

    target_samples = []
    for y in range(config.target_identities):
        cam = int(camera_of_identity[y])
        for _ in range(config.instances_per_identity):
            target_samples.append(PersonSample(
                f"t{len(target_samples):05d}",
                _render(tgt_protos[y], tgt_scales[cam], tgt_shifts[cam],
                        rng, config.noise_scale, shape), y, cam, "target"))

    kwargs = (dict(feature_dim=config.feature_dim) if config.mode == "feature"
              else dict(image_shape=shape))
    source = build_manifest(source_samples, "source", config.mode, **kwargs)
    target = build_manifest(target_samples, "target", config.mode, sct=True, **kwargs)
    assert validate_sct(target).is_sct
    return source, target


def synthesize_eval_split(config, seed):
    """Generate (query, gallery) manifests over held-out target identities.

    Each eval identity appears under several target cameras (cross-camera
    positives exist, unlike the SCT train split); the first instance per
    (identity, camera) becomes the query, the rest go to the gallery. Camera
    styles are the same tables the train split used.
    """
    _check_feasible(config)
    if config.eval_identities < 1:
        raise ConfigError("eval split requested but eval_identities is 0")
    shape = config.input_shape()
    dim = int(np.prod(shape))
    rng = np.random.default_rng([int(seed), _STREAM_EVAL])

    tgt_scales, tgt_shifts = target_style_tables(config, seed)
    protos = config.prototype_scale * rng.normal(size=(config.eval_identities, dim))

    queries, gallery = [], []
    for y in range(config.eval_identities):
        cams = rng.permutation(config.target_cameras)[:config.eval_cameras_per_identity]
        for cam in sorted(int(c) for c in cams):
            for i in range(config.eval_instances):
                sample = PersonSample(
                    f"{'q' if i == 0 else 'g'}{y:03d}c{cam}i{i}",
                    _render(protos[y], tgt_scales[cam], tgt_shifts[cam],
                            rng, config.noise_scale, shape), y, cam, "target")
                (queries if i == 0 else gallery).append(sample)

    # Not every target camera necessarily appears in the eval split; densify
    # jointly so query/gallery camera labels stay comparable.
    used = sorted({s.camera for s in queries + gallery})
    cam_map = {c: i for i, c in enumerate(used)}
    for s in queries + gallery:
        s.camera = cam_map[s.camera]

    kwargs = (dict(feature_dim=config.feature_dim) if config.mode == "feature"
              else dict(image_shape=shape))
    query = build_manifest(queries, "target", config.mode, **kwargs)
    gal = build_manifest(gallery, "target", config.mode, **kwargs)
    return query, gal
