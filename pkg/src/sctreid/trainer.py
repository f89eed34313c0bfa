"""Staged optimization: pre-training, promotion, style alignment, consistency.

Sequential mode (the default) runs four epoch windows: identity pre-training,
camera-classifier pre-training, promotion + style alignment, and target
consistency. Interleaved mode instead alternates the pre-training updates
per iteration inside one pre-training window and alternates the style /
consistency updates per iteration inside the final window. Ablation variants
toggle loss components without changing the windows, so epoch numbering and
learning-rate schedules stay comparable across variants.
"""

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from sctreid import alignment, consistency, recombination
from sctreid.checkpoint import (latest_checkpoint, load_checkpoint,
                                save_checkpoint)
from sctreid.encoder import (EncoderConfig, batch_inputs, build_encoder,
                             encode_all, make_classifier)
from sctreid.errors import ConfigError, DataError, NumericError
from sctreid.losses import (pretrain_camera_loss, pretrain_identity_loss)
from sctreid.manifests import intra_camera_classes, validate_sct
from sctreid.recombination import UniformTargets, build_mask_table
from sctreid.sampler import SamplingPolicy, sample_minibatch, sample_source_batch

STAGES = ("pretrain_id", "pretrain_cam", "promotion", "consistency")
COMPONENTS = ("frt", "ipl", "fda", "icl")


@dataclass
class StageSchedule:
    """Epoch windows plus the warm-up / step-decay learning-rate plan."""

    pretrain_id_epochs: int = 100
    pretrain_cam_epochs: int = 100
    promotion_epochs: int = 100
    consistency_epochs: int = 100
    warmup_epochs: int = 10
    decay_epochs: tuple = (40, 70)
    decay_factor: float = 0.1

    def validate(self):
        for name in ("pretrain_id_epochs", "pretrain_cam_epochs",
                     "promotion_epochs", "consistency_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.warmup_epochs < 0 or not (0 < self.decay_factor <= 1):
            raise ConfigError("bad warm-up or decay settings")

    def boundaries(self):
        """Cumulative stage end epochs, in STAGES order."""
        ends, total = [], 0
        for d in (self.pretrain_id_epochs, self.pretrain_cam_epochs,
                  self.promotion_epochs, self.consistency_epochs):
            total += d
            ends.append(total)
        return ends

    @property
    def total_epochs(self):
        return self.boundaries()[-1]

    def stage_at(self, epoch):
        if epoch < 0 or epoch >= self.total_epochs:
            raise ConfigError(f"epoch {epoch} outside [0, {self.total_epochs})")
        for stage, end in zip(STAGES, self.boundaries()):
            if epoch < end:
                return stage
        raise AssertionError

    def stage_start(self, stage):
        ends = self.boundaries()
        idx = STAGES.index(stage)
        return 0 if idx == 0 else ends[idx - 1]


def lr_at(epoch, base_lr, schedule):
    """Linear warm-up from base/10 over the first warm-up epochs, then a
    cumulative step decay at each decay epoch."""
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    if schedule.warmup_epochs > 0 and epoch < schedule.warmup_epochs:
        factor = 0.1 + 0.9 * epoch / schedule.warmup_epochs
    else:
        factor = 1.0
    factor *= schedule.decay_factor ** sum(epoch >= d for d in schedule.decay_epochs)
    return base_lr * factor


@dataclass
class OptimizerConfig:
    momentum: float = 0.9
    weight_decay: float = 1e-4
    encoder_lr: float = 1.6e-3
    classifier_lr: float = 1.2e-4

    def validate(self):
        if self.encoder_lr <= 0 or self.classifier_lr <= 0:
            raise ConfigError("learning rates must be > 0")


@dataclass
class TrainerConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: StageSchedule = field(default_factory=StageSchedule)
    policy: SamplingPolicy = field(default_factory=SamplingPolicy)
    components: tuple = COMPONENTS       # enabled loss components
    stage_mode: str = "sequential"       # "sequential" | "interleaved"
    margin: float = 0.3
    cluster_count: int = 0               # 0: one cluster per (camera, local id)
    keep_fraction: float = 0.5
    confidence_threshold: float = 0.5
    style_eps: float = 1e-5
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-4
    iterations_per_epoch: int = 0        # 0: derived from the manifests
    checkpoint_every: int = 1

    def validate(self):
        self.encoder.validate()
        self.optimizer.validate()
        self.schedule.validate()
        if self.stage_mode not in ("sequential", "interleaved"):
            raise ConfigError(f"unknown stage_mode {self.stage_mode!r}")
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise ConfigError(f"unknown components {sorted(unknown)}")

    def snapshot(self):
        d = asdict(self)
        d["components"] = list(self.components)
        d["schedule"]["decay_epochs"] = list(self.schedule.decay_epochs)
        d["encoder"]["image_shape"] = list(self.encoder.image_shape)
        return d


@dataclass
class LossReport:
    epoch: int
    stage: str
    terms: dict
    lr_encoder: float
    lr_classifier: float

    def to_dict(self):
        return {"epoch": self.epoch, "stage": self.stage,
                "terms": {k: float(v) for k, v in self.terms.items()},
                "lr_encoder": self.lr_encoder,
                "lr_classifier": self.lr_classifier}


@dataclass
class TrainResult:
    encoder: object
    w_id: object
    w_cam: object
    w_t_id: object
    w_t_id_tilde: object
    mask_table: object
    reports: list
    events: list
    config: TrainerConfig
    checkpoint_dir: str = ""

    def named_parameters(self):
        named = {}
        for pname, p in self.encoder.named_parameters():
            named[f"encoder.{pname}"] = p
        named["w_id.weight"] = self.w_id.weight
        named["w_cam.weight"] = self.w_cam.weight
        if self.w_t_id is not None:
            named["w_t_id.weight"] = self.w_t_id.weight
        if self.w_t_id_tilde is not None:
            named["w_t_id_tilde.weight"] = self.w_t_id_tilde.weight
        return named

    def parameter_checksum(self):
        digest = hashlib.sha256()
        for name in sorted(self.named_parameters()):
            tensor = self.named_parameters()[name]
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().numpy().astype("<f4").tobytes())
        return digest.hexdigest()


class _State:
    """Everything the epoch loop mutates."""

    def __init__(self):
        self.encoder = None
        self.w_id = None
        self.w_cam = None
        self.w_t_id = None
        self.w_t_id_tilde = None
        self.mask_table = None
        self.w_id0_tensor = None
        self.uniform = None
        self.pseudo_table = None
        self.optimizers = {}
        self.events = []
        self.rng = None


def _check_finite(name, value):
    if not torch.isfinite(value).all():
        raise NumericError(name, float(value.detach()))


def _record(parts, name, value):
    """Finite-check a loss term and append its detached float value."""
    _check_finite(name, value)
    parts.setdefault(name, []).append(float(value.detach()))


def _sgd(param_groups, cfg):
    return torch.optim.SGD(param_groups, lr=cfg.optimizer.encoder_lr,
                           momentum=cfg.optimizer.momentum,
                           weight_decay=cfg.optimizer.weight_decay)


def _optimizer_for(stage, state, cfg):
    if stage in state.optimizers:
        return state.optimizers[stage]
    enc_lr, cls_lr = cfg.optimizer.encoder_lr, cfg.optimizer.classifier_lr
    if stage == "pretrain_id":
        groups = [{"params": list(state.encoder.parameters()), "base_lr": enc_lr},
                  {"params": [state.w_id.weight], "base_lr": cls_lr}]
    elif stage == "pretrain_cam":
        groups = [{"params": [state.w_cam.weight], "base_lr": cls_lr}]
    elif stage == "promotion":
        groups = [{"params": list(state.encoder.parameters()), "base_lr": enc_lr}]
    else:  # consistency
        groups = [{"params": list(state.encoder.parameters()), "base_lr": enc_lr},
                  {"params": [state.w_t_id.weight, state.w_t_id_tilde.weight],
                   "base_lr": cls_lr}]
    opt = _sgd(groups, cfg)
    state.optimizers[stage] = opt
    return opt


def _set_lrs(state, cfg, epoch):
    for opt in state.optimizers.values():
        for group in opt.param_groups:
            group["lr"] = lr_at(epoch, group["base_lr"], cfg.schedule)


def _joint_cameras(samples, num_source_cameras):
    return torch.as_tensor(
        [s.camera if s.domain == "source" else num_source_cameras + s.camera
         for s in samples])


def _frozen_linear(linear):
    weight = linear.weight.detach()
    return lambda x: x @ weight.T


def _ensure_mask_table(state, cfg, source_manifest, target_manifest, epoch):
    if state.mask_table is not None:
        return
    samples = list(source_manifest.samples) + list(target_manifest.samples)
    globals_, _ = encode_all(state.encoder, samples)
    globals_by_sample = {s.sample_id: globals_[i].numpy()
                         for i, s in enumerate(samples)}
    true_cam = {s.sample_id: int(_joint_cameras([s], source_manifest.num_cameras))
                for s in samples}
    state.mask_table = build_mask_table(
        globals_by_sample, state.w_id.weight.detach().numpy(),
        state.w_cam.weight.detach().numpy(), true_cam,
        keep_fraction=cfg.keep_fraction,
        confidence_threshold=cfg.confidence_threshold)
    state.w_id0_tensor = torch.as_tensor(
        state.mask_table.w_id0, dtype=state.w_id.weight.dtype)
    state.uniform = UniformTargets.build(
        state.w_id.weight.shape[0], state.w_cam.weight.shape[0],
        dtype=state.w_id.weight.dtype)
    state.events.append({"epoch": epoch, "event": "mask table frozen"})


def _ensure_target_classifiers(state, cfg, target_manifest, epoch):
    if state.w_t_id is not None:
        return
    _, num_intra = intra_camera_classes(target_manifest)
    k = cfg.cluster_count or num_intra
    dtype = state.w_id.weight.dtype
    state.w_t_id = make_classifier(cfg.encoder.n, k, dtype=dtype)
    state.w_t_id_tilde = make_classifier(cfg.encoder.n, num_intra, dtype=dtype)
    state.events.append(
        {"epoch": epoch, "event": "target classifiers initialized",
         "clusters": k, "intra_classes": num_intra})


def _refresh_pseudo_labels(state, cfg, target_manifest, seed, epoch, out_dir):
    globals_, _ = encode_all(state.encoder, target_manifest.samples)
    sample_ids = [s.sample_id for s in target_manifest.samples]
    k = state.w_t_id.weight.shape[0]
    state.pseudo_table = consistency.cluster_target_features(
        globals_.numpy(), sample_ids, target_manifest, k,
        seed=[seed, 200, epoch], epoch=epoch,
        max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol)
    if out_dir:
        labels_dir = os.path.join(out_dir, "pseudo_labels")
        os.makedirs(labels_dir, exist_ok=True)
        state.pseudo_table.dump_jsonl(
            os.path.join(labels_dir, f"epoch_{epoch:04d}.jsonl"))


def _step(optimizer, loss):
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()


def _pretrain_id_step(state, cfg, source_manifest, terms):
    batch = sample_source_batch(source_manifest, cfg.policy, state.rng)
    x = batch_inputs(batch.source_samples)
    labels = torch.as_tensor([s.identity for s in batch.source_samples])
    g, locals_ = state.encoder(x)
    loss = pretrain_identity_loss(g, locals_, state.w_id, labels, cfg.margin)
    _record(terms, "identity_pretrain", loss)
    _step(_optimizer_for("pretrain_id", state, cfg), loss)


def _pretrain_cam_step(state, cfg, source_manifest, target_manifest, terms):
    batch = sample_minibatch(source_manifest, target_manifest, cfg.policy,
                             state.rng)
    samples = batch.source_samples + batch.target_samples
    with torch.no_grad():
        g, _ = state.encoder(batch_inputs(samples))
    labels = _joint_cameras(samples, source_manifest.num_cameras)
    loss = pretrain_camera_loss(g, state.w_cam, labels)
    _record(terms, "camera_pretrain", loss)
    _step(_optimizer_for("pretrain_cam", state, cfg), loss)


def _promotion_losses(state, cfg, batch, source_manifest, parts,
                      include=("frt", "ipl", "fda")):
    """Promotion-window loss terms on one batch, per enabled components."""
    active = [c for c in include if c in cfg.components]
    if not active:
        return None
    src = batch.source_samples
    g_s, _ = state.encoder(batch_inputs(src))
    m_id_s = state.mask_table.id_mask_matrix([s.sample_id for s in src],
                                             dtype=g_s.dtype)
    w_cam_w = state.w_cam.weight.detach()
    total = None

    def add(name, value):
        nonlocal total
        _record(parts, name, value)
        total = value if total is None else total + value

    if "frt" in active:
        y = torch.as_tensor([s.identity for s in src])
        c_joint = _joint_cameras(src, source_manifest.num_cameras)
        add("recombined_id", recombination.ipl_identity_loss(
            g_s, m_id_s, y, c_joint, state.w_id0_tensor, w_cam_w))
    if "ipl" in active:
        add("confusion", recombination.ipl_confusion_loss(
            g_s, m_id_s, state.w_id0_tensor, w_cam_w, state.uniform))
    if "fda" in active:
        tgt = batch.target_samples
        g_t, _ = state.encoder(batch_inputs(tgt))
        m_id_t = state.mask_table.id_mask_matrix([s.sample_id for s in tgt],
                                                 dtype=g_t.dtype)
        y_s = torch.as_tensor([s.identity for s in src])
        style_total, style_parts = alignment.style_total_loss(
            g_s, g_t, y_s, m_id_s, m_id_t, _frozen_linear(state.w_id),
            w_cam_w, eps=cfg.style_eps)
        for name, value in style_parts.items():
            _record(parts, name, value)
        parts.setdefault("style_total", []).append(float(style_total.detach()))
        total = style_total if total is None else total + style_total
    return total


def _promotion_step(state, cfg, source_manifest, target_manifest, terms,
                    include=("frt", "ipl", "fda")):
    needs_target = "fda" in cfg.components and "fda" in include
    if needs_target:
        batch = sample_minibatch(source_manifest, target_manifest, cfg.policy,
                                 state.rng)
    else:
        batch = sample_source_batch(source_manifest, cfg.policy, state.rng)
    total = _promotion_losses(state, cfg, batch, source_manifest, terms,
                              include=include)
    if total is not None:
        terms.setdefault("promotion_total", []).append(float(total.detach()))
        _step(_optimizer_for("promotion", state, cfg), total)


def _consistency_losses(state, cfg, batch, epoch, parts):
    tgt = batch.target_samples
    g_t, _ = state.encoder(batch_inputs(tgt))
    sample_ids = [s.sample_id for s in tgt]
    m_id_t = state.mask_table.id_mask_matrix(sample_ids, dtype=g_t.dtype)
    total, sub = consistency.icl_total(
        g_t, sample_ids, state.pseudo_table, state.w_t_id, state.w_t_id_tilde,
        m_id_t, state.w_cam.weight.detach(), margin=cfg.margin,
        current_epoch=epoch)
    for name, value in sub.items():
        _record(parts, name, value)
    parts.setdefault("consistency_total", []).append(float(total.detach()))
    return total


def _consistency_step(state, cfg, source_manifest, target_manifest, epoch,
                      terms, interleave_style=False):
    batch = sample_minibatch(source_manifest, target_manifest, cfg.policy,
                             state.rng)
    if interleave_style:
        # Algo-1 style final window: a style-alignment update then a
        # consistency update, every iteration.
        style_parts = {}
        style_total = _promotion_losses(state, cfg, batch, source_manifest,
                                        style_parts, include=("fda",))
        if style_total is not None:
            for name, vals in style_parts.items():
                terms.setdefault(name, []).extend(vals)
            _step(_optimizer_for("promotion", state, cfg), style_total)
    total = _consistency_losses(state, cfg, batch, epoch, terms)
    _step(_optimizer_for("consistency", state, cfg), total)


def _optimizer_stages(mode_stage, consistency_active):
    if mode_stage == "pretrain_both":
        return ("pretrain_id", "pretrain_cam")
    if mode_stage == "style_and_consistency":
        return ("promotion", "consistency") if consistency_active else ("promotion",)
    if mode_stage == "consistency":
        return ("consistency",) if consistency_active else ()
    return (mode_stage,)


def derive_iterations(cfg, source_manifest, target_manifest):
    if cfg.iterations_per_epoch > 0:
        return cfg.iterations_per_epoch
    biggest = max(len(source_manifest), len(target_manifest))
    return max(1, math.ceil(biggest / cfg.policy.batch_size))


def _interleaved_stage(cfg, epoch):
    """Map an epoch onto interleaved-mode behaviour."""
    ends = cfg.schedule.boundaries()
    if epoch < ends[1]:
        return "pretrain_both"
    if epoch < ends[2]:
        return "promotion"
    return "style_and_consistency"


def _param_names(state):
    modules = {"encoder": state.encoder, "w_id": state.w_id, "w_cam": state.w_cam,
               "w_t_id": state.w_t_id, "w_t_id_tilde": state.w_t_id_tilde}
    names = {}
    for prefix, module in modules.items():
        if module is None:
            continue
        for pname, p in module.named_parameters():
            names[p] = f"{prefix}.{pname}"
    return names


def _momentum_by_name(state):
    """Momentum buffers keyed by '<stage>/<param name>'.

    Each stage owns its own optimizer, so the same parameter can carry
    distinct buffers in different stages; the stage prefix keeps them apart.
    """
    named = {}
    param_names = _param_names(state)
    for stage, opt in state.optimizers.items():
        for p, opt_state in opt.state.items():
            buffer = opt_state.get("momentum_buffer")
            if buffer is not None:
                named[f"{stage}/{param_names[p]}"] = buffer
    return named


def _restore_momentum(state, momentum_arrays):
    param_names = _param_names(state)
    for stage, opt in state.optimizers.items():
        for group in opt.param_groups:
            for p in group["params"]:
                key = f"{stage}/{param_names[p]}"
                if key in momentum_arrays:
                    opt.state[p]["momentum_buffer"] = torch.as_tensor(
                        momentum_arrays[key], dtype=p.dtype)


def run(config, source_manifest, target_manifest, seed, out_dir=None,
        resume=False):
    """Train through the configured stages; returns a TrainResult.

    Fully deterministic per seed: data order, initialization, clustering.
    The target manifest must satisfy the SCT constraint.
    """
    config.validate()
    report = validate_sct(target_manifest)
    if not report.is_sct:
        raise DataError("target manifest violates the SCT constraint: " +
                        report.summary())

    torch.manual_seed(int(seed))
    state = _State()
    state.rng = np.random.default_rng([int(seed), 100])

    state.encoder = build_encoder(config.encoder)
    state.w_id = make_classifier(config.encoder.n, source_manifest.num_identities)
    state.w_cam = make_classifier(
        config.encoder.n,
        source_manifest.num_cameras + target_manifest.num_cameras)

    ckpt_root = os.path.join(out_dir, "checkpoints") if out_dir else None
    log_path = os.path.join(out_dir, "loss_log.jsonl") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    start_epoch = 0
    if resume:
        if not ckpt_root:
            raise ConfigError("resume needs an output directory")
        latest = latest_checkpoint(ckpt_root)
        if latest is None:
            raise DataError(f"no checkpoint to resume from under {ckpt_root}")
        data = load_checkpoint(latest)
        start_epoch = data.epoch_next
        state.mask_table = data.mask_table
        if state.mask_table is not None:
            state.w_id0_tensor = torch.as_tensor(
                state.mask_table.w_id0, dtype=state.w_id.weight.dtype)
            state.uniform = UniformTargets.build(
                state.w_id.weight.shape[0], state.w_cam.weight.shape[0])
        if "w_t_id.weight" in data.params:
            state.w_t_id = make_classifier(
                config.encoder.n, data.params["w_t_id.weight"].shape[0])
            state.w_t_id_tilde = make_classifier(
                config.encoder.n, data.params["w_t_id_tilde.weight"].shape[0])
        _load_params(state, data.params)
        # optimizers materialize lazily; prime the ones whose stages started
        for stage in STAGES[:STAGES.index(config.schedule.stage_at(
                min(start_epoch, config.schedule.total_epochs - 1))) + 1]:
            if stage == "consistency" and state.w_t_id is None:
                continue
            _optimizer_for(stage, state, config)
        _restore_momentum(state, data.momentum)
        torch.set_rng_state(data.torch_rng)
        state.rng = np.random.default_rng()
        state.rng.bit_generator.state = data.numpy_rng_state
        state.events.append({"epoch": start_epoch, "event": "resumed"})

    iterations = derive_iterations(config, source_manifest, target_manifest)
    reports = []
    total_epochs = config.schedule.total_epochs
    prev_stage = None

    for epoch in range(start_epoch, total_epochs):
        stage = config.schedule.stage_at(epoch)
        mode_stage = (_interleaved_stage(config, epoch)
                      if config.stage_mode == "interleaved" else stage)
        if stage != prev_stage:
            state.events.append({"epoch": epoch, "event": f"stage {stage}"})
            prev_stage = stage

        needs_masks = (mode_stage in ("promotion", "consistency",
                                      "style_and_consistency")
                       and any(c in config.components for c in COMPONENTS))
        if needs_masks:
            _ensure_mask_table(state, config, source_manifest, target_manifest,
                               epoch)
        consistency_active = ("icl" in config.components and mode_stage in
                              ("consistency", "style_and_consistency"))
        if consistency_active:
            _ensure_target_classifiers(state, config, target_manifest, epoch)
            _refresh_pseudo_labels(state, config, target_manifest, seed, epoch,
                                   out_dir)
        # materialize this window's optimizers before the epoch's lr is set,
        # otherwise a freshly created one would run its first epoch at base lr
        for opt_stage in _optimizer_stages(mode_stage, consistency_active):
            _optimizer_for(opt_stage, state, config)
        _set_lrs(state, config, epoch)

        terms = {}
        for _ in range(iterations):
            if mode_stage == "pretrain_id":
                _pretrain_id_step(state, config, source_manifest, terms)
            elif mode_stage == "pretrain_cam":
                _pretrain_cam_step(state, config, source_manifest,
                                   target_manifest, terms)
            elif mode_stage == "pretrain_both":
                _pretrain_id_step(state, config, source_manifest, terms)
                _pretrain_cam_step(state, config, source_manifest,
                                   target_manifest, terms)
            elif mode_stage == "promotion":
                include = (("frt", "ipl") if config.stage_mode == "interleaved"
                           else ("frt", "ipl", "fda"))
                _promotion_step(state, config, source_manifest,
                                target_manifest, terms, include=include)
            elif mode_stage == "consistency":
                if consistency_active:
                    _consistency_step(state, config, source_manifest,
                                      target_manifest, epoch, terms)
            else:  # style_and_consistency (interleaved final window)
                if consistency_active:
                    _consistency_step(state, config, source_manifest,
                                      target_manifest, epoch, terms,
                                      interleave_style="fda" in config.components)
                elif "fda" in config.components:
                    _promotion_step(state, config, source_manifest,
                                    target_manifest, terms, include=("fda",))

        report = LossReport(
            epoch=epoch, stage=stage,
            terms={k: float(np.mean(v)) for k, v in terms.items()},
            lr_encoder=lr_at(epoch, config.optimizer.encoder_lr, config.schedule),
            lr_classifier=lr_at(epoch, config.optimizer.classifier_lr,
                                config.schedule))
        reports.append(report)
        if log_path:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(report.to_dict()) + "\n")

        if ckpt_root and ((epoch + 1) % config.checkpoint_every == 0
                          or epoch + 1 == total_epochs):
            _save_state(state, config, epoch + 1, stage, ckpt_root)

    result = TrainResult(
        encoder=state.encoder, w_id=state.w_id, w_cam=state.w_cam,
        w_t_id=state.w_t_id, w_t_id_tilde=state.w_t_id_tilde,
        mask_table=state.mask_table, reports=reports, events=state.events,
        config=config,
        checkpoint_dir=latest_checkpoint(ckpt_root) if ckpt_root else "")
    return result


def _named_params(state):
    named = {}
    for pname, p in state.encoder.named_parameters():
        named[f"encoder.{pname}"] = p
    named["w_id.weight"] = state.w_id.weight
    named["w_cam.weight"] = state.w_cam.weight
    if state.w_t_id is not None:
        named["w_t_id.weight"] = state.w_t_id.weight
        named["w_t_id_tilde.weight"] = state.w_t_id_tilde.weight
    return named


def _load_params(state, arrays):
    named = _named_params(state)
    missing = set(named) - set(arrays)
    if missing:
        raise DataError(f"checkpoint lacks parameters: {sorted(missing)}")
    with torch.no_grad():
        for name, p in named.items():
            p.copy_(torch.as_tensor(arrays[name], dtype=p.dtype))


def _save_state(state, config, epoch_next, stage, ckpt_root):
    directory = os.path.join(ckpt_root, f"epoch_{epoch_next:04d}")
    save_checkpoint(
        directory, epoch_next=epoch_next, stage=stage,
        config_snapshot=config.snapshot(), params=_named_params(state),
        momentum=_momentum_by_name(state), torch_rng=torch.get_rng_state(),
        numpy_rng_state=state.rng.bit_generator.state,
        extra={"events": state.events}, mask_table=state.mask_table)
    return directory
