"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest

from src.core.hypernet.network import init_hypernetwork
from src.domain.records import TokenSequence
from tests.builders import ModelConfigBuilder, random_records, random_weights


@pytest.fixture
def tiny_config():
    """Two-block model small enough for exact gradient checks."""
    return ModelConfigBuilder().build()


@pytest.fixture
def micro_config():
    """Vocabulary 8, width 4, one editable layer."""
    return ModelConfigBuilder().micro().build()


@pytest.fixture
def tiny_weights(tiny_config):
    """Seeded random weights for the tiny model."""
    return random_weights(tiny_config, seed=0)


@pytest.fixture
def tiny_records(tiny_config):
    """Eight random records over the tiny vocabulary."""
    return random_records(8, tiny_config.vocab_size, seed=1)


@pytest.fixture
def tiny_hypernetwork(tiny_config):
    """Freshly initialised rank-4 hypernetwork for the tiny model."""
    return init_hypernetwork(tiny_config, rank=4, seed=0)


@pytest.fixture
def sample_sequences(tiny_config):
    """Three prompt/answer sequences of different lengths."""
    rng = np.random.default_rng(2)
    vocab = tiny_config.vocab_size
    return [
        TokenSequence.from_pair(rng.integers(0, vocab, size=3), rng.integers(0, vocab, size=1)),
        TokenSequence.from_pair(rng.integers(0, vocab, size=4), rng.integers(0, vocab, size=2)),
        TokenSequence.from_pair(rng.integers(0, vocab, size=2), rng.integers(0, vocab, size=3)),
    ]
