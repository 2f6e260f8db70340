"""Shared fixtures: tiny configs, synthetic samples and on-disk datasets"""
import numpy as np
import pytest

from src.core.models import ModelConfig
from src.data import synth_generate, write_dataset
from src.model import ChangeFormer


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig.from_preset("tiny", input_size=(32, 32))


@pytest.fixture
def tiny_model(tiny_config):
    """float64 tiny model for exact comparisons"""
    return ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")


@pytest.fixture
def samples32():
    return synth_generate(4, 32, seed=3)


@pytest.fixture
def dataset_dir(tmp_path):
    """LEVIR-layout tree with 4 train, 2 val and 2 test samples of 32x32"""
    root = tmp_path / "dataset"
    write_dataset(root, {
        "train": synth_generate(4, 32, seed=5, prefix="train"),
        "val": synth_generate(2, 32, seed=5, prefix="val", stream=1),
        "test": synth_generate(2, 32, seed=5, prefix="test", stream=2),
    })
    return root
