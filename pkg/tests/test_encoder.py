import numpy as np
import pytest
import torch

from sctreid.encoder import EncoderConfig, build_encoder, encode, encode_all
from sctreid.errors import ConfigError, DataError
from sctreid.manifests import PersonSample


def feature_sample(dim=6, value=0.0):
    return PersonSample("x0", np.full(dim, value, np.float32), 0, 0, "source")


def test_zero_input_bias_free_mlp_gives_zero_global():
    cfg = EncoderConfig(n=8, num_locals=2, input_dim=6, hidden_dim=8, bias=False)
    enc = build_encoder(cfg)
    with torch.no_grad():
        for p in enc.parameters():
            p.zero_()
    bundle = encode(enc, feature_sample())
    assert torch.all(bundle.global_feature == 0)


def test_eval_mode_determinism():
    cfg = EncoderConfig(n=8, num_locals=3, input_dim=6)
    enc = build_encoder(cfg)
    sample = feature_sample(value=0.7)
    a = encode(enc, sample)
    b = encode(enc, sample)
    assert torch.equal(a.global_feature, b.global_feature)
    assert torch.equal(a.local_features, b.local_features)


def test_bundle_shape_contract():
    torch.manual_seed(0)
    cfg = EncoderConfig(n=8, num_locals=2, input_dim=5)
    enc = build_encoder(cfg)
    bundle = encode(enc, feature_sample(dim=5, value=0.3))
    assert bundle.global_feature.shape == (8,)
    assert bundle.local_features.shape == (2, 8)
    assert bundle.source_sample_id == "x0"


def test_shape_mismatch_rejected():
    cfg = EncoderConfig(n=8, num_locals=0, input_dim=5)
    enc = build_encoder(cfg)
    with pytest.raises(DataError, match="expected input"):
        enc(torch.zeros(2, 7))


def test_odd_width_rejected():
    with pytest.raises(ConfigError, match="even"):
        build_encoder(EncoderConfig(n=7, input_dim=5))


def test_small_conv_contract():
    torch.manual_seed(0)
    cfg = EncoderConfig(n=8, num_locals=2, architecture="small-conv",
                        input_mode="image", image_shape=(6, 4, 1), hidden_dim=4)
    enc = build_encoder(cfg)
    g, l = enc(torch.randn(3, 6, 4, 1))
    assert g.shape == (3, 8) and l.shape == (3, 2, 8)


def test_transformer_stub_contract():
    torch.manual_seed(0)
    cfg = EncoderConfig(n=8, num_locals=4, architecture="transformer-stub",
                        input_dim=5)
    enc = build_encoder(cfg)
    g, l = enc(torch.randn(2, 5))
    assert g.shape == (2, 8) and l.shape == (2, 4, 8)
    enc.eval()
    x = torch.randn(2, 5)
    assert torch.equal(enc(x)[0], enc(x)[0])


def test_encode_all_matches_single(source_manifest):
    torch.manual_seed(1)
    cfg = EncoderConfig(n=8, num_locals=1, input_dim=8)
    enc = build_encoder(cfg)
    gs, ls = encode_all(enc, source_manifest.samples, batch_size=3)
    one = encode(enc, source_manifest.samples[5])
    assert torch.allclose(gs[5], one.global_feature, atol=1e-6)
    assert torch.allclose(ls[5], one.local_features, atol=1e-6)
