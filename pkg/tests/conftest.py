import numpy as np
import pytest

from clstack.models import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_config(variant="cnn-trans-enc", n_classes=3, dropout=0.0, **overrides):
    """Small-extent config used for gradient checks and fast training tests."""
    base = dict(
        n_classes=n_classes,
        variant=variant,
        hidden=32,
        d_m=12,
        heads=3,
        d_k=4,
        outdim=6,
        dropout=dropout,
    )
    base.update(overrides)
    return ModelConfig(**base)
