import numpy as np
import pytest

from mcm import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scene():
    """One deterministic 128x128 scene with its semantic map."""
    return synthetic.scene(np.random.default_rng(7), size=128)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six 64x64 paired ppm/pgm files for CLI corpus commands."""
    d = tmp_path_factory.mktemp("corpus")
    synthetic.write_corpus(d, 6, size=64, seed=3)
    return d
