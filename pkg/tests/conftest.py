import numpy as np
import pytest

from spdmlr.core.config import Config
from spdmlr.harness.checks import random_spd
from spdmlr.harness.dataset import synth_generate
from .base import TEST_DIR, remove_and_create_dir


@pytest.fixture
def test_config():
    config = Config()
    config.set("widths", [4, 3])
    config.set("epochs", 3)
    config.set("batch", 10)
    config.set("synth.classes", 3)
    config.set("synth.per_class", 10)
    return config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def spd(rng):
    def make(n, size=None, condition=10.0):
        return random_spd(rng, n, size, condition)

    return make


@pytest.fixture
def small_dataset():
    return synth_generate(4, 3, 10, 0.1, seed=7)


@pytest.fixture
def test_dir():
    remove_and_create_dir(TEST_DIR)
    return TEST_DIR
