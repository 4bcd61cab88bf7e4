# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for Grad-CAM heatmaps of the image features and their localisation
measure.
"""
import numpy as np
import pytest

from multifix.errors import ConfigurationError, DataError
from multifix.explain import Heatmap, explain_samples, grad_cam, pick_samples
from multifix.parameters import PipelineConfig
from multifix.pipeline import assemble

from conftest import TINY

"""Random seed for tests"""
SEED = 123456


@pytest.fixture(scope="module")
def model(tiny_data):
    config = PipelineConfig({**TINY, "image_block": {"channels": [4, 4]}, "n_i": 2})
    return assemble(config, tiny_data.image_shape, tiny_data.n_features,
                    np.random.default_rng(SEED))


@pytest.mark.parametrize('layer', [0, 1])
def test_heatmap_shape_and_range(model, tiny_data, layer):
    """Maps match the input size, lie in [0, 1] and peak at 1 unless empty."""
    heatmap = grad_cam(model, tiny_data.images[0], 1, layer, sample_id=7)
    assert heatmap.shape == tiny_data.image_shape
    assert heatmap.values.min() >= 0.0
    assert heatmap.values.max() in (0.0, pytest.approx(1.0))
    assert heatmap.name == "7_I2"
    assert heatmap.layer == layer


def test_heatmap_is_deterministic(model, tiny_data):
    first = grad_cam(model, tiny_data.images[3])
    second = grad_cam(model, tiny_data.images[3])
    assert np.array_equal(first.values, second.values)


def test_gradients_cleared(model, tiny_data):
    """Computing a heatmap leaves no gradient on the parameters."""
    grad_cam(model, tiny_data.images[0])
    for parameter in model.blocks["image"].parameters():
        assert parameter.grad is None or not np.any(parameter.grad)


@pytest.mark.parametrize('feature, layer', [(2, 0), (0, 2), (-1, 0)])
def test_out_of_range(model, tiny_data, feature, layer):
    with pytest.raises(ConfigurationError):
        grad_cam(model, tiny_data.images[0], feature, layer)


def test_wrong_image_shape(model):
    with pytest.raises(DataError):
        grad_cam(model, np.zeros((8, 8, 3)))


def test_needs_image_block(tiny_config, tiny_data):
    tabular_only = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features,
                            modalities=("tabular",))
    with pytest.raises(ConfigurationError):
        grad_cam(tabular_only, tiny_data.images[0])


def test_explain_samples_order(model, tiny_data):
    heatmaps = explain_samples(model, tiny_data, [4, 1])
    assert [(h.sample_id, h.feature_index) for h in heatmaps] == [(4, 0), (4, 1), (1, 0), (1, 1)]


def test_explain_samples_out_of_range(model, tiny_data):
    with pytest.raises(DataError):
        explain_samples(model, tiny_data, [len(tiny_data)])


@pytest.mark.parametrize('box, expected', [((0, 0, 2, 2), 1.0), ((2, 2, 4, 4), 0.0),
                                           ((0, 0, 1, 4), 0.5), ((0, 0, 4, 4), 1.0)])
def test_mass_inside(box, expected):
    values = np.zeros((4, 4))
    values[:2, :2] = 1.0
    assert Heatmap(values, 0, 0).mass_inside(box) == pytest.approx(expected)


def test_mass_inside_empty_map():
    assert Heatmap(np.zeros((3, 3)), 0, 0).mass_inside((0, 0, 3, 3)) == 0.0


def test_pick_samples(tiny_data):
    indices = np.arange(len(tiny_data))
    picked = pick_samples(tiny_data, indices, 1)
    assert picked == sorted(picked)
    assert sorted(tiny_data.labels[picked].tolist()) == list(range(tiny_data.n_classes))
    for label in range(tiny_data.n_classes):
        first = int(np.flatnonzero(tiny_data.labels == label)[0])
        assert first in picked
