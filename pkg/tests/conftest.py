import numpy as np
import pytest

from prvr.corpus import CorpusSpec, generate_synthetic
from prvr.encoder import EncoderDims, EncoderParams


@pytest.fixture
def small_spec():
    return CorpusSpec(n_q=12, n_v=6, l_q=3, l_v=4, d_t=10, d_v=11, seed=42,
                      segments_per_video=2, ambiguity_rate=0.4, noise_scale=0.2)


@pytest.fixture
def small_corpus(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture
def tiny_dims():
    return EncoderDims(d_t=5, d_v=6, l_q=3, l_v=4, d=7)


@pytest.fixture
def tiny_params(tiny_dims):
    return EncoderParams.initialize(tiny_dims, seed=123)


def rng_for(seed):
    return np.random.default_rng(seed)
