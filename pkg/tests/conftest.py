# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Shared pytest options and fixtures: long-running experiments are marked
``slow`` and only run with ``--runslow``; tiny networks and datasets keep the
training tests fast.
"""
import matplotlib
import pytest

matplotlib.use("Agg")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run experiments marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


"""Network and training settings small enough for unit tests"""
TINY = {"image_block": {"channels": [4]}, "tabular_block": {"hidden": [8, 8]},
        "fusion_block": {"hidden": [8]}, "epochs": 2, "batch_size": 8, "ae_latent": 4,
        "ae_epochs": 2, "defreeze_epoch": 1, "folds": 2, "seed": 3}


@pytest.fixture
def tiny_config():
    from multifix.parameters import PipelineConfig
    return PipelineConfig(TINY)


@pytest.fixture(scope="session")
def tiny_data():
    from multifix.synthdata import make_dataset
    return make_dataset("multiclass", n_samples=40, img_size=16, rng_seed=123456)


@pytest.fixture(scope="session")
def tiny_plan(tiny_data):
    from multifix.synthdata import kfold_split
    return kfold_split(tiny_data.labels, 2, 123456)
