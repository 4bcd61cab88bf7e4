# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Problem presets: bottleneck widths, truth-feature names and search grids.
"""
import copy

from multifix.errors import ConfigurationError
from multifix.parameters import PipelineConfig, HpoGrid, NasSpace, GomeaConfig

PRESETS = {
    "multiclass": {
        "pipeline": {"problem": "multiclass", "n_classes": 4, "n_i": 1, "n_t": 1},
        "hpo": {"lr": [1e-2, 5e-3, 1e-3, 5e-4], "wd": [1e-2, 1e-3, 0.0]},
        "nas": {},
        "image_features": ["square"],
        "tabular_features": ["A"],
        "variants": ["fusion"],
    },
    "multifeature": {
        "pipeline": {"problem": "multifeature", "n_classes": 2, "n_i": 2, "n_t": 3},
        "hpo": {"lr": [1e-2, 1e-3, 1e-4, 1e-5], "wd": [1e-2, 1e-3, 1e-4, 0.0]},
        "nas": None,
        "image_features": ["circle", "rectangle", "triangle"],
        "tabular_features": ["A", "B", "C"],
        "variants": ["fusion"],
    },
    "xor": {
        "pipeline": {"problem": "xor", "n_classes": 2, "n_i": 1, "n_t": 1,
                     "ae_latent": 16},
        "hpo": {"lr": [1e-2, 5e-3, 1e-3, 5e-4], "wd": [1e-2, 1e-3, 1e-4, 0.0],
                "defreeze_epoch": [20, 30, 40, 50]},
        "nas": None,
        "image_features": ["circle"],
        "tabular_features": ["A"],
        "variants": ["fusion", "ae_fusion", "frozen_ae_fusion", "hpo_ae_fusion",
                     "frozen_encoder_image"],
    },
    "xor3": {
        "pipeline": {"problem": "xor3", "n_classes": 2, "n_i": 2, "n_t": 1,
                     "ae_latent": 16},
        "hpo": {"lr": [1e-2, 5e-3, 1e-3, 5e-4], "wd": [1e-2, 1e-3, 1e-4, 0.0],
                "defreeze_epoch": [20, 30, 40, 50]},
        "nas": None,
        "image_features": ["circle", "triangle"],
        "tabular_features": ["A"],
        "variants": ["fusion", "hpo_ae_fusion"],
    },
}

VARIANTS = {
    "fusion": {"ae_pretrain": False},
    "ae_fusion": {"ae_pretrain": True, "freeze": "none"},
    "frozen_ae_fusion": {"ae_pretrain": True, "freeze": "frozen"},
    "hpo_ae_fusion": {"ae_pretrain": True, "freeze": "defreeze"},
    "frozen_encoder_image": {"ae_pretrain": True, "freeze": "frozen"},
}


def preset(problem):
    """Deep copy of the preset of ``problem``; unknown problems raise ConfigurationError."""
    if problem not in PRESETS:
        raise ConfigurationError(f"unknown problem {problem}, expected one of {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[problem])


def pipeline_config(problem, overrides=None, variant="fusion"):
    """
    PipelineConfig for ``problem`` with the variant's settings and ``overrides`` applied.

    Raises
    ------
    ConfigurationError
        On an unknown problem or variant, or invalid overrides.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant}, expected one of {sorted(VARIANTS)}")
    params = {**preset(problem)["pipeline"], **VARIANTS[variant], **(overrides or {})}
    return PipelineConfig(params)


def hpo_grid(problem, overrides=None):
    return HpoGrid({**preset(problem)["hpo"], **(overrides or {})})


def nas_space(problem, overrides=None):
    """NAS space of ``problem``, or None when the problem has no architecture search."""
    space = preset(problem)["nas"]
    if space is None and not overrides:
        return None
    return NasSpace({**(space or {}), **(overrides or {})})


def gomea_config(overrides=None):
    return GomeaConfig(overrides)
