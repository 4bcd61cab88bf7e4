# -*- coding: utf-8 -*-

"""
Test set for the Experiment class interface.

These tests check that the public interface of the experiment module can be
used as documented, not that results are good. Functional behaviour is
covered by the tests in ``tests/``.
"""

import matplotlib
import pytest

from multifix.errors import ConfigurationError
from multifix.experiment import Experiment

matplotlib.use("Agg")

QUICK = {"data": {"problem": "multiclass", "n_samples": 40, "img_size": 16, "seed": 1},
         "pipeline": {"image_block": {"channels": [4]}, "tabular_block": {"hidden": [8]},
                      "fusion_block": {"hidden": [8]}, "epochs": 1, "folds": 2},
         "gomea": {"depths": [2], "population_size": 8, "generations": 2,
                   "max_populations": 1, "n_seeds": 1}}


def test_empty_experiment():
    """An experiment needs no configuration"""
    Experiment()


def test_seeded_experiment():
    Experiment(seed=12)


@pytest.mark.parametrize('problem', ["multiclass", "multifeature", "xor", "xor3"])
def test_problems(problem):
    """Every synthetic problem can be configured"""
    Experiment({"data": {"problem": problem}})


@pytest.mark.parametrize('variant', ["fusion", "ae_fusion", "frozen_ae_fusion",
                                     "hpo_ae_fusion"])
def test_variants(variant):
    Experiment({"run": {"variant": variant}})


def test_invalid_problem():
    with pytest.raises(ValueError):
        Experiment({"data": {"problem": "mnist"}})


def test_invalid_section():
    with pytest.raises(ValueError):
        Experiment({"data": {"colour": "red"}})


def test_set_pipeline_parameters():
    Experiment().set_pipeline_parameters({"lr": 0.01, "epochs": 5})


def test_set_gomea_parameters():
    Experiment().set_gomea_parameters({"population_size": 32, "allow_xor": True})


@pytest.mark.parametrize('params', [{"lr": -1}, {"colour": 1}, {"epochs": 0}])
def test_invalid_pipeline_parameters(params):
    with pytest.raises(ConfigurationError):
        Experiment().set_pipeline_parameters(params)


def test_generate(tmp_path):
    Experiment(QUICK).generate(tmp_path / "data")


def test_train_distill_explain(tmp_path):
    """All stages run one after the other on the same run directory"""
    experiment = Experiment(QUICK)
    experiment.train(tmp_path / "run")
    experiment.distill(tmp_path / "run")
    experiment.explain(tmp_path / "run", samples=[0])
