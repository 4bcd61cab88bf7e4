# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for model assembly: block widths, the bottleneck range, bypassed and
replaced blocks, encoder reuse and checkpoints of whole models.
"""
import numpy as np
import pytest

from multifix.errors import ConfigurationError, DataError
from multifix.gpgomea import parse_infix
from multifix.nncore import Dense, LayerSequence
from multifix.parameters import PipelineConfig
from multifix.pipeline import PipelineModel, assemble
from multifix.pipeline.blocks import autoencoder

from conftest import TINY

"""Random seed for tests"""
SEED = 123456


@pytest.fixture
def model(tiny_config, tiny_data):
    return assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features,
                    np.random.default_rng(SEED))


def test_fusion_widths(model, tiny_data):
    """nI = nT = 1 with four classes: fusion reads 2 features and emits 4 logits."""
    spec = model.blocks["fusion"].spec()
    assert spec[0]["in_features"] == 2
    assert spec[-1]["out_features"] == 4
    assert model.logits(tiny_data, np.arange(5)).shape == (5, 4)


def test_fusion_widths_multifeature(tiny_data):
    config = PipelineConfig({**TINY, "n_i": 2, "n_t": 3, "n_classes": 2})
    model = assemble(config, tiny_data.image_shape, tiny_data.n_features)
    assert model.blocks["fusion"].spec()[0]["in_features"] == 5
    assert model.feature_names() == ["I1", "I2", "T1", "T2", "T3"]


def test_bottleneck_in_open_unit_interval(model, tiny_data):
    """Every intermediate feature passes a sigmoid."""
    values = model.bottleneck(tiny_data)
    assert values.shape == (len(tiny_data), 2)
    assert np.all(values > 0) and np.all(values < 1)


def test_binarized_bottleneck_uses_thresholds(model, tiny_data):
    values = model.bottleneck(tiny_data)
    model.thresholds = {"T1": 2.0}
    binary = model.binarized_bottleneck(tiny_data)
    assert np.array_equal(binary[:, 0], (values[:, 0] > 0.5).astype(float))
    assert not binary[:, 1].any()


def test_conv_outputs_index_relu(tiny_data):
    """Grad-CAM layers are the relus closing the convolution blocks."""
    plain = assemble(PipelineConfig(TINY), tiny_data.image_shape, tiny_data.n_features)
    normed = assemble(PipelineConfig({**TINY, "image_block": {"channels": [4, 4],
                                                              "batchnorm": True}}),
                      tiny_data.image_shape, tiny_data.n_features)
    assert plain.conv_outputs == [1]
    assert normed.conv_outputs == [2, 6]
    for i in normed.conv_outputs:
        assert normed.blocks["image"].layers[i].kind == "relu"


def test_single_modality_model(tiny_config, tiny_data):
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features,
                     modalities=("tabular",))
    assert set(model.blocks) == {"tabular", "fusion"}
    assert model.blocks["fusion"].spec()[0]["in_features"] == 1
    assert model.predict(tiny_data).shape == (len(tiny_data),)


def test_no_modality_rejected(tiny_config, tiny_data):
    with pytest.raises(ConfigurationError):
        assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features, modalities=())


def test_bypass_feeds_ground_truth(tiny_config, tiny_data):
    """Bypassed modalities feed their raw 0/1 truth features."""
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features,
                     bypass=("image", "tabular"))
    assert set(model.blocks) == {"fusion"}
    expected = np.column_stack([tiny_data.truth_matrix("image"), tiny_data.truth_matrix("tabular")])
    assert np.array_equal(model.bottleneck(tiny_data), expected)


def test_bypass_width_mismatch(tiny_data):
    model = assemble(PipelineConfig({**TINY, "n_i": 2}), tiny_data.image_shape,
                     tiny_data.n_features, bypass=("image",))
    with pytest.raises(DataError):
        model.bottleneck(tiny_data)


def test_standardizer_uses_training_rows(model, tiny_data):
    model.fit_standardizer(tiny_data.tabular[:20])
    scaled = model.tabular_tensor(tiny_data.tabular[:20]).data
    assert np.allclose(scaled.mean(axis=0), 0.0, atol=1e-5)


def test_replaced_blocks_predict_from_expressions(model, tiny_data):
    """A fusion expression over binarised features decides the class."""
    model.replacements["fusion"] = parse_infix("3 - T1 - 2*I1", ["I1", "T1"])
    binary = model.binarized_bottleneck(tiny_data)
    expected = np.clip(np.rint(3 - binary[:, 1] - 2 * binary[:, 0]), 0, 3)
    assert np.array_equal(model.predict(tiny_data), expected)


def test_replaced_tabular_block(model, tiny_data):
    model.replacements["tabular"] = [parse_infix("x0 > 0.5")]
    feats = model.features(tiny_data)
    assert np.array_equal(feats["tabular"].data[:, 0], (tiny_data.tabular[:, 0] > 0.5))
    assert model.blocks["tabular"] not in model.trainable_blocks()


def test_save_load(model, tiny_data, tmp_path):
    """A reloaded model predicts identically and keeps its expressions."""
    model.fit_standardizer(tiny_data.tabular)
    model.thresholds = {"I1": 0.4}
    model.save(tmp_path / "fold0.mfix", {"fold": 0, "bacc": 0.5})
    loaded, meta = PipelineModel.load(tmp_path / "fold0.mfix")
    assert meta["fold"] == 0 and meta["bacc"] == 0.5
    assert loaded.config == model.config
    assert loaded.thresholds == {"I1": 0.4}
    assert np.allclose(loaded.bottleneck(tiny_data), model.bottleneck(tiny_data), atol=1e-6)

    model.replacements["tabular"] = [parse_infix("x3 > 0.5")]
    model.replacements["fusion"] = parse_infix("IF(I1, 2 + T1, T1)", ["I1", "T1"])
    model.save(tmp_path / "hybrid.mfix")
    hybrid, _ = PipelineModel.load(tmp_path / "hybrid.mfix")
    assert hybrid.replacements["fusion"] == model.replacements["fusion"]
    assert np.array_equal(hybrid.predict(tiny_data), model.predict(tiny_data))


def test_encoder_layers_copied(tiny_config, tiny_data):
    """A pretrained encoder opens the image block with its own weights."""
    encoder, _ = autoencoder(tiny_config, tiny_data.image_shape, np.random.default_rng(SEED))
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features, encoder=encoder)
    assert model.n_encoder == len(encoder)
    for source, target in zip(encoder.layers, model.blocks["image"].layers):
        for key, tensor in source.parameters().items():
            assert np.array_equal(target.parameters()[key].data, tensor.data)


def test_encoder_mismatch(tiny_config, tiny_data):
    with pytest.raises(ConfigurationError):
        assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features,
                 encoder=LayerSequence([Dense(2, 2)]))


def test_freeze_encoder(tiny_config, tiny_data):
    encoder, _ = autoencoder(tiny_config, tiny_data.image_shape, np.random.default_rng(SEED))
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features, encoder=encoder)
    model.freeze_encoder()
    image = model.blocks["image"]
    assert not image.layers[0].weight.requires_grad
    assert image.layers[-2].weight.requires_grad
    model.unfreeze_encoder()
    assert image.layers[0].weight.requires_grad
