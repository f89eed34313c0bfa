"""Feature extractors: one global token plus K local tokens per sample.

Desk-scale stand-ins for a transformer re-ID backbone. The bundle contract
(1 global + K locals, all of channel width n) is architecture independent;
everything downstream only sees that contract.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from sctreid.errors import ConfigError, DataError, NumericError

ARCHITECTURES = ("toy-mlp", "small-conv", "transformer-stub")


@dataclass
class EncoderConfig:
    n: int = 32                     # output channel width; even, >= 4
    num_locals: int = 4             # K local tokens; 0 disables locals
    architecture: str = "toy-mlp"
    input_mode: str = "feature"     # "feature" | "image"
    input_dim: int = 32             # feature-mode input width
    image_shape: tuple = ()         # (H, W, C) for image mode
    hidden_dim: int = 64
    bias: bool = True

    def validate(self):
        if self.n < 4 or self.n % 2 != 0:
            raise ConfigError(f"channel width n must be even and >= 4, got {self.n}")
        if self.num_locals < 0:
            raise ConfigError("num_locals must be >= 0")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; "
                f"choose from {ARCHITECTURES}")
        if self.input_mode not in ("feature", "image"):
            raise ConfigError(f"unknown input mode {self.input_mode!r}")
        if self.input_mode == "image" and len(self.image_shape) != 3:
            raise ConfigError("image mode needs image_shape=(H, W, C)")


@dataclass
class FeatureBundle:
    """Encoder output for one sample."""

    global_feature: torch.Tensor      # [n]
    local_features: torch.Tensor      # [K, n]
    source_sample_id: str = ""


class ToyMlp(nn.Module):
    """Two-layer MLP on feature-mode inputs with per-token linear heads."""

    def __init__(self, cfg, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.trunk = nn.Linear(cfg.input_dim, cfg.hidden_dim, bias=cfg.bias,
                               dtype=dtype)
        self.global_head = nn.Linear(cfg.hidden_dim, cfg.n, bias=cfg.bias,
                                     dtype=dtype)
        self.local_heads = nn.ModuleList(
            nn.Linear(cfg.hidden_dim, cfg.n, bias=cfg.bias, dtype=dtype)
            for _ in range(cfg.num_locals))

    def forward(self, x):
        if x.dim() != 2 or x.shape[1] != self.cfg.input_dim:
            raise DataError(
                f"expected input [B, {self.cfg.input_dim}], got {tuple(x.shape)}")
        h = torch.tanh(self.trunk(x))
        g = self.global_head(h)
        if self.cfg.num_locals:
            locals_ = torch.stack([head(h) for head in self.local_heads], dim=1)
        else:
            locals_ = g.new_zeros((x.shape[0], 0, self.cfg.n))
        return g, locals_


class SmallConv(nn.Module):
    """Tiny conv net for image-mode inputs; locals come from horizontal stripes."""

    def __init__(self, cfg, dtype=torch.float32):
        super().__init__()
        h, w, c = cfg.image_shape
        if cfg.num_locals > h:
            raise ConfigError(f"num_locals {cfg.num_locals} exceeds image height {h}")
        self.cfg = cfg
        self.conv1 = nn.Conv2d(c, cfg.hidden_dim, 3, padding=1, bias=cfg.bias,
                               dtype=dtype)
        self.conv2 = nn.Conv2d(cfg.hidden_dim, cfg.hidden_dim, 3, padding=1,
                               bias=cfg.bias, dtype=dtype)
        self.global_head = nn.Linear(cfg.hidden_dim, cfg.n, bias=cfg.bias,
                                     dtype=dtype)
        self.local_head = nn.Linear(cfg.hidden_dim, cfg.n, bias=cfg.bias,
                                    dtype=dtype)

    def forward(self, x):
        # inputs arrive channel-last (H, W, C) from the manifests
        expected = self.cfg.image_shape
        if x.dim() != 4 or tuple(x.shape[1:]) != tuple(expected):
            raise DataError(
                f"expected input [B, {expected[0]}, {expected[1]}, {expected[2]}], "
                f"got {tuple(x.shape)}")
        x = x.permute(0, 3, 1, 2)
        feat = torch.tanh(self.conv2(torch.tanh(self.conv1(x))))
        g = self.global_head(feat.mean(dim=(2, 3)))
        if self.cfg.num_locals:
            stripes = torch.tensor_split(feat, self.cfg.num_locals, dim=2)
            pooled = [s.mean(dim=(2, 3)) for s in stripes]
            locals_ = torch.stack([self.local_head(p) for p in pooled], dim=1)
        else:
            locals_ = g.new_zeros((x.shape[0], 0, self.cfg.n))
        return g, locals_


class TransformerStub(nn.Module):
    """Single-layer transformer over 1 + K learned tokens (feature mode)."""

    def __init__(self, cfg, dtype=torch.float32):
        super().__init__()
        if cfg.input_mode != "feature":
            raise ConfigError("transformer-stub supports feature-mode inputs only")
        self.cfg = cfg
        self.proj = nn.Linear(cfg.input_dim, cfg.n, bias=cfg.bias, dtype=dtype)
        self.tokens = nn.Parameter(
            0.02 * torch.randn(1 + cfg.num_locals, cfg.n, dtype=dtype))
        self.layer = nn.TransformerEncoderLayer(
            d_model=cfg.n, nhead=2, dim_feedforward=2 * cfg.n, dropout=0.0,
            batch_first=True, dtype=dtype)

    def forward(self, x):
        if x.dim() != 2 or x.shape[1] != self.cfg.input_dim:
            raise DataError(
                f"expected input [B, {self.cfg.input_dim}], got {tuple(x.shape)}")
        seq = self.tokens.unsqueeze(0) + self.proj(x).unsqueeze(1)
        out = self.layer(seq)
        return out[:, 0], out[:, 1:]


def build_encoder(cfg, dtype=torch.float32):
    cfg.validate()
    if cfg.architecture == "toy-mlp":
        if cfg.input_mode != "feature":
            raise ConfigError("toy-mlp expects feature-mode inputs")
        return ToyMlp(cfg, dtype=dtype)
    if cfg.architecture == "small-conv":
        if cfg.input_mode != "image":
            raise ConfigError("small-conv expects image-mode inputs")
        return SmallConv(cfg, dtype=dtype)
    return TransformerStub(cfg, dtype=dtype)


def make_classifier(in_width, num_classes, dtype=torch.float32):
    """Bias-free linear classifier; rows of .weight are per-class vectors."""
    return nn.Linear(in_width, num_classes, bias=False, dtype=dtype)


def batch_inputs(samples, dtype=torch.float32):
    """Stack sample inputs into one tensor."""
    arr = np.stack([s.input for s in samples])
    return torch.as_tensor(arr, dtype=dtype)


def encode(encoder, sample):
    """Single-sample forward in eval mode; checks the bundle contract."""
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            g, locals_ = encoder(batch_inputs(
                [sample], dtype=next(encoder.parameters()).dtype))
    finally:
        encoder.train(was_training)
    bundle = FeatureBundle(g[0], locals_[0], sample.sample_id)
    if not torch.isfinite(bundle.global_feature).all() or \
            not torch.isfinite(bundle.local_features).all():
        raise NumericError("encoder forward", "non-finite feature")
    return bundle


def encode_all(encoder, samples, batch_size=256):
    """Global (and local) features for a list of samples, eval mode, no grad.

    Returns (globals [N, n], locals [N, K, n]) as torch tensors.
    """
    was_training = encoder.training
    encoder.eval()
    dtype = next(encoder.parameters()).dtype
    gs, ls = [], []
    try:
        with torch.no_grad():
            for start in range(0, len(samples), batch_size):
                chunk = samples[start:start + batch_size]
                g, l = encoder(batch_inputs(chunk, dtype=dtype))
                gs.append(g)
                ls.append(l)
    finally:
        encoder.train(was_training)
    return torch.cat(gs), torch.cat(ls)
