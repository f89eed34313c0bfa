import numpy as np
import pytest

from sctreid.errors import ConfigError
from sctreid.manifests import validate_sct
from sctreid.synth import (GeneratorConfig, synthesize_eval_split,
                           synthesize_sct_dataset)


def small_config(**kw):
    base = dict(source_identities=6, target_identities=6, source_cameras=3,
                target_cameras=3, instances_per_identity=4, feature_dim=5,
                eval_identities=4, eval_cameras_per_identity=2, eval_instances=3)
    base.update(kw)
    return GeneratorConfig(**base)


def test_determinism_per_seed(tmp_path):
    from sctreid.manifests import save_manifest

    cfg = small_config()
    a = synthesize_sct_dataset(cfg, 7)
    b = synthesize_sct_dataset(cfg, 7)
    for m1, m2 in zip(a, b):
        assert m1.equals(m2)
    # byte-identical files
    for name, m1, m2 in (("s", a[0], b[0]), ("t", a[1], b[1])):
        p1, p2 = tmp_path / f"{name}1.jsonl", tmp_path / f"{name}2.jsonl"
        save_manifest(m1, p1)
        save_manifest(m2, p2)
        assert p1.read_bytes() == p2.read_bytes()
    c = synthesize_sct_dataset(cfg, 8)
    assert not a[0].equals(c[0])


def test_target_is_sct_source_is_not():
    cfg = small_config()
    for seed in (0, 1, 2, 3, 4):
        source, target = synthesize_sct_dataset(cfg, seed)
        assert validate_sct(target).is_sct
        assert not validate_sct(source).is_sct  # round-robin spreads cameras


def test_zero_style_shift_collapses_camera_means():
    # per-camera class prototype means must coincide when the shift is off
    cfg = small_config(style_shift=0.0, instances_per_identity=64,
                       source_identities=3, source_cameras=2,
                       target_identities=3, target_cameras=2, noise_scale=0.05)
    source, _ = synthesize_sct_dataset(cfg, 11)
    for y in range(cfg.source_identities):
        means = []
        for cam in range(cfg.source_cameras):
            feats = [s.input for s in source.samples
                     if s.identity == y and s.camera == cam]
            means.append(np.mean(feats, axis=0))
        # brute-force comparison of per-camera prototype means
        spread = np.abs(means[0] - means[1]).max()
        assert spread < 4 * cfg.noise_scale / np.sqrt(64) * 4


def test_nonzero_style_shift_separates_camera_means():
    cfg = small_config(style_shift=2.0, instances_per_identity=64,
                       source_identities=3, source_cameras=2,
                       target_identities=3, target_cameras=2, noise_scale=0.05)
    source, _ = synthesize_sct_dataset(cfg, 11)
    feats0 = [s.input for s in source.samples if s.camera == 0]
    feats1 = [s.input for s in source.samples if s.camera == 1]
    gap = np.abs(np.mean(feats0, axis=0) - np.mean(feats1, axis=0)).max()
    assert gap > 0.5


def test_eval_split_has_cross_camera_positives():
    cfg = small_config()
    query, gallery = synthesize_eval_split(cfg, 5)
    assert not validate_sct(gallery).is_sct
    # every query identity appears in the gallery under another camera
    for q in query.samples:
        assert any(g.identity == q.identity and g.camera != q.camera
                   for g in gallery.samples)


def test_infeasible_configs_rejected():
    with pytest.raises(ConfigError, match="infeasible"):
        synthesize_sct_dataset(small_config(target_identities=2,
                                            target_cameras=3), 0)
    with pytest.raises(ConfigError, match="eval_cameras_per_identity"):
        synthesize_eval_split(small_config(eval_cameras_per_identity=9), 0)
    with pytest.raises(ConfigError, match="eval split requested"):
        synthesize_eval_split(small_config(eval_identities=0), 0)


def test_image_mode_generation():
    cfg = small_config(mode="image", image_height=6, image_width=4,
                       image_channels=1)
    source, target = synthesize_sct_dataset(cfg, 3)
    assert source.samples[0].input.shape == (6, 4, 1)
    assert validate_sct(target).is_sct
