import numpy as np
import pytest
import torch

from sctreid.manifests import PersonSample, build_manifest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_feature_manifest(domain, num_identities, num_cameras, per_identity,
                          dim=8, seed=0, sct=False):
    """Small hand-rolled manifest; SCT assigns identity i to camera i % C."""
    gen = np.random.default_rng(seed)
    samples = []
    for y in range(num_identities):
        for i in range(per_identity):
            cam = (y if sct else i) % num_cameras
            samples.append(PersonSample(
                f"{domain[0]}{y:03d}_{i}", gen.normal(size=dim).astype(np.float32),
                y, cam, domain))
    return build_manifest(samples, domain, "feature", feature_dim=dim, sct=sct)


@pytest.fixture
def source_manifest():
    return make_feature_manifest("source", 4, 2, 4, seed=1)


@pytest.fixture
def target_manifest():
    return make_feature_manifest("target", 4, 2, 4, seed=2, sct=True)


@pytest.fixture
def dtype64():
    return torch.float64
