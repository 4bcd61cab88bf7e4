# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Parameter classes for data generation, GP-GOMEA, the pipeline, the
hyper-parameter grids and explanation.

Every class keeps its defaults in a class-level table and is built from a
plain dictionary; unknown keys and invalid values raise
:py:class:`~multifix.errors.ConfigurationError`.
"""
import copy

from multifix.errors import ConfigurationError


def _positive(value):
    if value <= 0:
        raise ValueError("should be > 0")


def _non_negative(value):
    if value < 0:
        raise ValueError("should be >= 0")


def _int_at_least(minimum):
    def check(value):
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ValueError(f"should be an integer >= {minimum}")
    return check


def _one_of(*choices):
    def check(value):
        if value not in choices:
            raise ValueError(f"should be one of {choices}")
    return check


def _list_of(check):
    def check_all(value):
        if not isinstance(value, (list, tuple)) or not value:
            raise ValueError("should be a non-empty list")
        for item in value:
            check(item)
    return check_all


def _optional(check):
    def maybe(value):
        if value is not None:
            check(value)
    return maybe


def _dict(value):
    if not isinstance(value, dict):
        raise ValueError("should be a mapping")


def _any(value):
    pass


class Parameters:
    """
    Super class of all parameter sets.

    Children define ``defaults`` (key to default value) and ``checks``
    (key to a callable raising ``ValueError`` for invalid values).
    """

    defaults = {}
    checks = {}

    def __init__(self, params=None):
        for key, value in self.defaults.items():
            setattr(self, key, copy.deepcopy(value))
        if params:
            self.set_params(params)
        self.validate()

    def __repr__(self):
        return f"{type(self).__name__}({self.as_dict()})"

    def __eq__(self, other):
        return type(self) is type(other) and self.as_dict() == other.as_dict()

    def set_params(self, params: {}):
        """
        Change parameter values.

        Parameters
        ----------
        params: dict
            New values for a subset of the keys.

        Raises
        ------
        ConfigurationError
            If a key is unknown or a value is invalid.
        """
        for key, value in params.items():
            try:
                if key not in self.defaults:
                    raise AttributeError(f"unknown key, expected one of {sorted(self.defaults)}")
                self.checks.get(key, _any)(value)
                setattr(self, key, copy.deepcopy(value))
            except (AttributeError, ValueError, TypeError) as e:
                raise ConfigurationError(f"[{key}:{value}] is invalid, inner error: {e}") from e

    def validate(self):
        """Cross-key checks; children override."""

    def as_dict(self):
        return {key: copy.deepcopy(getattr(self, key)) for key in self.defaults}

    def replace(self, **changes):
        """Copy with some values changed."""
        return type(self)({**self.as_dict(), **changes})


class DataConfig(Parameters):
    """
    Which dataset to generate or load.

    ``data_dir`` loads a saved dataset. The ``external`` problem is ingested
    from ``image_dir`` and ``tabular_file`` with ``schema`` at ``resolution``.
    """

    defaults = {
        "problem": "multiclass",
        "n_samples": None,
        "img_size": None,
        "tab_sigma": 0.0,
        "seed": 0,
        "data_dir": None,
        "image_dir": None,
        "tabular_file": None,
        "schema": None,
        "resolution": 64,
    }
    checks = {
        "problem": _one_of("multiclass", "multifeature", "xor", "xor3", "external"),
        "n_samples": _optional(_int_at_least(5)),
        "img_size": _optional(_int_at_least(5)),
        "tab_sigma": _non_negative,
        "seed": _int_at_least(0),
        "schema": _optional(_dict),
        "resolution": _int_at_least(5),
    }


class GomeaConfig(Parameters):
    """
    GP-GOMEA settings.

    ``generations`` caps every population, ``max_evaluations`` (optional) the
    whole run; ``interleave`` is the number of generations a population runs
    for each generation of the next larger one.
    """

    defaults = {
        "depths": [2, 3, 4],
        "population_size": 64,
        "generations": 512,
        "max_populations": 4,
        "interleave": 4,
        "max_evaluations": None,
        "n_seeds": 5,
        "allow_xor": False,
        "use_ite": True,
        "p_constant": 0.25,
        "p_grow": 0.5,
        "threshold": 0.5,
        "threshold_sweep": False,
    }
    checks = {
        "depths": _list_of(_int_at_least(1)),
        "population_size": _int_at_least(2),
        "generations": _int_at_least(1),
        "max_populations": _int_at_least(1),
        "interleave": _int_at_least(1),
        "max_evaluations": _optional(_int_at_least(1)),
        "n_seeds": _int_at_least(1),
        "p_constant": _non_negative,
        "p_grow": _non_negative,
        "threshold": _positive,
    }

    def validate(self):
        if self.generations > 512:
            raise ConfigurationError(f"[generations:{self.generations}] is invalid, "
                                     f"inner error: at most 512 generations per population")
        if not 0 <= self.p_constant <= 1 or not 0 <= self.p_grow <= 1:
            raise ConfigurationError("p_constant and p_grow must lie in [0, 1]")


BLOCK_DEFAULTS = {
    "image": {"channels": [16, 32, 64], "hidden": [], "dropout": 0.0, "activation": "relu",
              "batchnorm": False},
    "tabular": {"hidden": [32, 32], "dropout": 0.0, "activation": "relu", "batchnorm": False},
    "fusion": {"hidden": [16], "dropout": [0.0], "activation": "relu", "batchnorm": False},
}


class PipelineConfig(Parameters):
    """
    Architecture and training settings of one MultiFIX model.

    ``freeze`` selects the encoder schedule when ``ae_pretrain`` is set:
    ``"none"`` trains the pretrained encoder from epoch 0, ``"defreeze"``
    unfreezes it at ``defreeze_epoch`` and ``"frozen"`` never does.
    """

    defaults = {
        "problem": "multiclass",
        "n_classes": 4,
        "n_i": 1,
        "n_t": 1,
        "image_block": BLOCK_DEFAULTS["image"],
        "tabular_block": BLOCK_DEFAULTS["tabular"],
        "fusion_block": BLOCK_DEFAULTS["fusion"],
        "lr": 1e-3,
        "wd": 0.0,
        "epochs": 100,
        "batch_size": 16,
        "ae_pretrain": False,
        "ae_latent": 16,
        "ae_epochs": 50,
        "freeze": "defreeze",
        "defreeze_epoch": 20,
        "folds": 5,
        "seed": 0,
    }
    checks = {
        "n_classes": _int_at_least(2),
        "n_i": _int_at_least(1),
        "n_t": _int_at_least(1),
        "image_block": _dict,
        "tabular_block": _dict,
        "fusion_block": _dict,
        "lr": _non_negative,
        "wd": _non_negative,
        "epochs": _int_at_least(1),
        "batch_size": _int_at_least(1),
        "ae_latent": _int_at_least(1),
        "ae_epochs": _int_at_least(1),
        "freeze": _one_of("none", "defreeze", "frozen"),
        "defreeze_epoch": _int_at_least(0),
        "folds": _int_at_least(2),
        "seed": _int_at_least(0),
    }

    def validate(self):
        for key in ("image_block", "tabular_block", "fusion_block"):
            merged = {**BLOCK_DEFAULTS[key.split("_")[0]], **getattr(self, key)}
            unknown = set(merged) - set(BLOCK_DEFAULTS[key.split("_")[0]])
            if unknown:
                raise ConfigurationError(f"[{key}:{getattr(self, key)}] is invalid, "
                                         f"inner error: unknown keys {sorted(unknown)}")
            setattr(self, key, merged)
        if not self.fusion_block["hidden"]:
            raise ConfigurationError("[fusion_block.hidden:[]] is invalid, inner error: "
                                     "the fusion block needs at least one hidden layer")
        if self.ae_pretrain:
            if self.ae_latent < self.n_i:
                raise ConfigurationError(f"[ae_latent:{self.ae_latent}] is invalid, inner "
                                         f"error: must be >= n_i={self.n_i}")
            if self.freeze == "defreeze" and self.defreeze_epoch >= self.epochs:
                raise ConfigurationError(f"[defreeze_epoch:{self.defreeze_epoch}] is invalid, "
                                         f"inner error: must be < epochs={self.epochs}")


class HpoGrid(Parameters):
    """Grid of learning rates, weight decays and optional de-freeze epochs."""

    defaults = {
        "lr": [1e-2, 5e-3, 1e-3, 5e-4],
        "wd": [1e-2, 1e-3, 0.0],
        "defreeze_epoch": None,
    }
    checks = {
        "lr": _list_of(_non_negative),
        "wd": _list_of(_non_negative),
        "defreeze_epoch": _optional(_list_of(_int_at_least(0))),
    }

    def cells(self):
        """Every grid cell as a dict of PipelineConfig overrides, lr-major order."""
        defreeze = self.defreeze_epoch or [None]
        cells = []
        for lr in self.lr:
            for wd in self.wd:
                for epoch in defreeze:
                    cell = {"lr": lr, "wd": wd}
                    if epoch is not None:
                        cell["defreeze_epoch"] = epoch
                    cells.append(cell)
        return cells


class NasSpace(Parameters):
    """
    Fusion-block search space.

    Per-layer dropout and width are chosen independently for every hidden
    layer. ``sample`` enumerates a random subset of that many candidates.
    """

    defaults = {
        "activation": ["relu", "sigmoid"],
        "hidden_layers": [1, 2],
        "dropout": [0.0, 0.125, 0.25],
        "width": [16, 32, 64],
        "batchnorm": [False],
        "sample": None,
    }
    checks = {
        "activation": _list_of(_one_of("relu", "sigmoid")),
        "hidden_layers": _list_of(_int_at_least(1)),
        "dropout": _list_of(_non_negative),
        "width": _list_of(_int_at_least(1)),
        "batchnorm": _list_of(_one_of(True, False)),
        "sample": _optional(_int_at_least(1)),
    }


class ExplainConfig(Parameters):
    """Grad-CAM layer and the samples to explain."""

    defaults = {
        "layer": 0,
        "samples": [],
        "per_class": 0,
    }
    checks = {
        "layer": _int_at_least(0),
        "samples": lambda v: [_int_at_least(0)(s) for s in v],
        "per_class": _int_at_least(0),
    }


class RunConfig(Parameters):
    """
    What an experiment run does beyond training one model.

    ``kind`` is the training kind of every fold; ``search`` selects the
    learning-rate/weight-decay grid, the fusion architecture search, both or
    neither before the final fit; ``widths`` runs a bottleneck-width sweep.
    """

    defaults = {
        "variant": "fusion",
        "kind": "fusion",
        "search": "none",
        "widths": None,
        "resolutions": [100, 50, 25, 20, 15, 10, 5],
        "sigmas": [0.0, 2.5, 5.0, 7.5, 10.0, 15.0, 20.0],
    }
    checks = {
        "variant": _one_of("fusion", "ae_fusion", "frozen_ae_fusion", "hpo_ae_fusion",
                           "frozen_encoder_image"),
        "kind": _one_of("fusion", "image", "tabular", "feature_image", "feature_tabular",
                        "frozen_encoder_image", "bypass_image", "bypass_tabular",
                        "bypass_both"),
        "search": _one_of("none", "hpo", "nas", "both"),
        "widths": _optional(_list_of(_int_at_least(1))),
        "resolutions": _list_of(_int_at_least(5)),
        "sigmas": _list_of(_non_negative),
    }
