"""Flat key-value configuration with CLI overrides.

Config files are lines of `key = value` (# starts a comment). Values parse as
JSON scalars when possible, comma-separated lists otherwise, else strings.
Precedence: CLI --set > config file > defaults. Unknown keys are an error
that lists the valid keys.
"""

import os
from dataclasses import fields

from sctreid.encoder import EncoderConfig
from sctreid.errors import ConfigError
from sctreid.sampler import SamplingPolicy
from sctreid.synth import GeneratorConfig
from sctreid.trainer import OptimizerConfig, StageSchedule, TrainerConfig


def parse_value(text):
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    mapping = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            mapping[key.strip()] = parse_value(value)
    return mapping


def parse_overrides(pairs):
    mapping = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        mapping[key.strip()] = parse_value(value)
    return mapping


def merged_mapping(config_path=None, overrides=None):
    mapping = read_config_file(config_path) if config_path else {}
    mapping.update(parse_overrides(overrides))
    return mapping


# trainer keys are flattened: nested dataclass fields get their own names
_OPTIMIZER_KEYS = {f.name for f in fields(OptimizerConfig)}
_SCHEDULE_KEYS = {f.name for f in fields(StageSchedule)}
_POLICY_KEYS = {"batch_classes", "batch_instances"}
_ENCODER_KEYS = {"feature_width", "local_tokens", "architecture", "hidden_dim",
                 "encoder_bias"}
_TRAINER_TOP_KEYS = {"components", "stage_mode", "margin", "cluster_count",
                     "keep_fraction", "confidence_threshold", "style_eps",
                     "kmeans_max_iter", "kmeans_tol", "iterations_per_epoch",
                     "checkpoint_every"}
TRAINER_KEYS = (_OPTIMIZER_KEYS | _SCHEDULE_KEYS | _POLICY_KEYS
                | _ENCODER_KEYS | _TRAINER_TOP_KEYS)
GENERATOR_KEYS = set(GeneratorConfig.field_names())
EVAL_KEYS = {"max_rank", "use_locals"}


def _reject_unknown(mapping, allowed, context):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown {context} key(s) {unknown}; valid keys: {sorted(allowed)}")


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def generator_config(mapping):
    _reject_unknown(mapping, GENERATOR_KEYS, "generator")
    return GeneratorConfig(**mapping)


def trainer_config(mapping):
    return apply_trainer_mapping(TrainerConfig(), mapping)


def apply_trainer_mapping(cfg, mapping):
    """Apply flat trainer keys onto an existing TrainerConfig."""
    _reject_unknown(mapping, TRAINER_KEYS, "trainer")
    for key, value in mapping.items():
        if key in _OPTIMIZER_KEYS:
            setattr(cfg.optimizer, key, value)
        elif key == "decay_epochs":
            cfg.schedule.decay_epochs = tuple(int(v) for v in _as_list(value))
        elif key in _SCHEDULE_KEYS:
            setattr(cfg.schedule, key, value)
        elif key == "batch_classes":
            cfg.policy.classes_per_batch = int(value)
        elif key == "batch_instances":
            cfg.policy.instances_per_class = int(value)
        elif key == "feature_width":
            cfg.encoder.n = int(value)
        elif key == "local_tokens":
            cfg.encoder.num_locals = int(value)
        elif key == "architecture":
            cfg.encoder.architecture = value
        elif key == "hidden_dim":
            cfg.encoder.hidden_dim = int(value)
        elif key == "encoder_bias":
            cfg.encoder.bias = bool(value)
        elif key == "components":
            parts = [str(v) for v in _as_list(value) if str(v)]
            cfg.components = tuple(parts)
        else:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def eval_options(mapping):
    _reject_unknown(mapping, EVAL_KEYS, "eval")
    return {"max_rank": int(mapping.get("max_rank", 50)),
            "use_locals": bool(mapping.get("use_locals", False))}


def split_mapping(mapping, *key_sets):
    """Partition one flat mapping into per-component mappings; keys must be
    claimed by exactly one component."""
    allowed = set().union(*key_sets)
    _reject_unknown(mapping, allowed, "combined")
    return [
        {k: v for k, v in mapping.items() if k in keys} for keys in key_sets
    ]


def trainer_config_from_snapshot(snapshot):
    """Rebuild a TrainerConfig from a checkpoint's config snapshot."""
    cfg = TrainerConfig(
        encoder=EncoderConfig(**{**snapshot["encoder"],
                                 "image_shape": tuple(snapshot["encoder"]["image_shape"])}),
        optimizer=OptimizerConfig(**snapshot["optimizer"]),
        schedule=StageSchedule(**{**snapshot["schedule"],
                                  "decay_epochs": tuple(snapshot["schedule"]["decay_epochs"])}),
        policy=SamplingPolicy(**snapshot["policy"]),
    )
    for key in _TRAINER_TOP_KEYS:
        if key in snapshot:
            value = snapshot[key]
            setattr(cfg, key, tuple(value) if key == "components" else value)
    cfg.validate()
    return cfg


def configure_encoder_for_manifest(cfg, manifest):
    """Align the encoder input contract with a training manifest."""
    cfg.encoder.input_mode = manifest.mode
    if manifest.mode == "feature":
        cfg.encoder.input_dim = manifest.feature_dim
        if cfg.encoder.architecture == "small-conv":
            raise ConfigError("small-conv needs image-mode manifests")
    else:
        cfg.encoder.image_shape = tuple(manifest.image_shape)
        if cfg.encoder.architecture in ("toy-mlp", "transformer-stub"):
            cfg.encoder.architecture = "small-conv"
    return cfg
