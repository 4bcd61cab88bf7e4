# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the parameter classes and the problem presets.
"""
import pytest

from multifix.errors import ConfigurationError
from multifix.parameters import (DataConfig, GomeaConfig, HpoGrid, NasSpace, PipelineConfig,
                                 RunConfig)
from multifix.pipeline import PRESETS, VARIANTS, hpo_grid, nas_space, pipeline_config


def test_defaults():
    config = PipelineConfig()
    assert config.n_classes == 4 and config.folds == 5
    assert config.fusion_block["hidden"] == [16]
    assert GomeaConfig().depths == [2, 3, 4]
    assert GomeaConfig().allow_xor is False


def test_defaults_not_shared():
    """Mutating one instance leaves the class defaults untouched."""
    a = PipelineConfig()
    a.image_block["channels"].append(128)
    assert PipelineConfig().image_block["channels"] == [16, 32, 64]


@pytest.mark.parametrize('cls, params', [
    (PipelineConfig, {"n_classes": 1}),
    (PipelineConfig, {"lr": -1e-3}),
    (PipelineConfig, {"freeze": "sometimes"}),
    (PipelineConfig, {"epochs": 2.5}),
    (PipelineConfig, {"unknown": 1}),
    (PipelineConfig, {"fusion_block": {"hidden": []}}),
    (PipelineConfig, {"tabular_block": {"depth": 3}}),
    (PipelineConfig, {"ae_pretrain": True, "ae_latent": 1, "n_i": 2}),
    (PipelineConfig, {"ae_pretrain": True, "defreeze_epoch": 100, "epochs": 50}),
    (GomeaConfig, {"generations": 513}),
    (GomeaConfig, {"p_constant": 1.5}),
    (GomeaConfig, {"depths": []}),
    (DataConfig, {"problem": "melanoma"}),
    (DataConfig, {"n_samples": 2}),
    (DataConfig, {"schema": "id,label"}),
    (HpoGrid, {"lr": -1}),
    (NasSpace, {"activation": ["tanh"]}),
    (RunConfig, {"search": "random"}),
    (RunConfig, {"resolutions": [4]}),
])
def test_invalid_parameters(cls, params):
    """Unknown keys and invalid values raise ConfigurationError."""
    with pytest.raises(ConfigurationError):
        cls(params)


def test_error_message_names_key_and_value():
    with pytest.raises(ConfigurationError, match=r"\[lr:-1\] is invalid"):
        PipelineConfig({"lr": -1})


def test_block_settings_merge_with_defaults():
    """Partial block settings keep the remaining defaults."""
    config = PipelineConfig({"tabular_block": {"hidden": [8]}})
    assert config.tabular_block == {"hidden": [8], "dropout": 0.0, "activation": "relu",
                                    "batchnorm": False}


def test_replace_and_equality():
    config = PipelineConfig({"lr": 5e-3})
    other = config.replace(wd=1e-3)
    assert other.lr == 5e-3 and other.wd == 1e-3
    assert config != other
    assert config == PipelineConfig(config.as_dict())


def test_hpo_cells_lr_major():
    grid = HpoGrid({"lr": [1e-2, 1e-3], "wd": [0.0, 1e-2], "defreeze_epoch": [20, 30]})
    cells = grid.cells()
    assert len(cells) == 8
    assert cells[0] == {"lr": 1e-2, "wd": 0.0, "defreeze_epoch": 20}
    assert cells[-1] == {"lr": 1e-3, "wd": 1e-2, "defreeze_epoch": 30}


@pytest.mark.parametrize('problem, n_cells', [("multiclass", 12), ("multifeature", 16),
                                              ("xor", 64), ("xor3", 64)])
def test_preset_grid_sizes(problem, n_cells):
    """The search grids of every problem have the documented sizes."""
    assert len(hpo_grid(problem).cells()) == n_cells


@pytest.mark.parametrize('problem', sorted(PRESETS))
@pytest.mark.parametrize('variant', sorted(VARIANTS))
def test_every_preset_variant_validates(problem, variant):
    config = pipeline_config(problem, variant=variant)
    assert config.problem == problem
    assert config.n_i == PRESETS[problem]["pipeline"]["n_i"]


def test_xor_variant_ladder():
    assert pipeline_config("xor", variant="fusion").ae_pretrain is False
    assert pipeline_config("xor", variant="ae_fusion").freeze == "none"
    assert pipeline_config("xor", variant="frozen_ae_fusion").freeze == "frozen"
    assert pipeline_config("xor", variant="hpo_ae_fusion").freeze == "defreeze"


def test_preset_overrides():
    config = pipeline_config("multiclass", {"epochs": 3, "lr": 0.1})
    assert config.epochs == 3 and config.lr == 0.1 and config.n_classes == 4


def test_nas_space_only_for_multiclass():
    assert isinstance(nas_space("multiclass"), NasSpace)
    assert nas_space("xor") is None
    assert nas_space("xor", {"width": [8]}).width == [8]


@pytest.mark.parametrize('problem, variant', [("melanoma", "fusion"), ("xor", "magic")])
def test_preset_errors(problem, variant):
    with pytest.raises(ConfigurationError):
        pipeline_config(problem, variant=variant)
