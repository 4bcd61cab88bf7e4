# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the training loops on tiny networks: determinism, the freeze
contract, numeric aborts, cross-validation and final re-training.
"""
import csv

import numpy as np
import pytest

from multifix.errors import DataError, NumericAbort
from multifix.nncore import Tensor
from multifix.pipeline import (PipelineModel, TrainingHistory, assemble, cross_validate,
                               fit_final, pretrain_autoencoder, run_fold, train_end_to_end,
                               train_single_modality, train_supervised_feature,
                               train_with_frozen_encoder)
from multifix.pipeline.training import job_rng, map_jobs
from multifix.synthdata import MultimodalDataset

"""Random seed for tests"""
SEED = 123456


def _fold(plan, i=0):
    return plan.train(i), plan.test(i)


def _snapshot(block, stop=None):
    return {k: p.data.copy() for k, p in block.named_parameters().items()
            if stop is None or int(k.split(".")[1]) < stop}


def test_end_to_end_history(tiny_config, tiny_data, tiny_plan):
    """One history row per epoch with finite losses."""
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features)
    model, history = train_end_to_end(model, tiny_data, _fold(tiny_plan), rng=job_rng(SEED))
    assert len(history) == tiny_config.epochs
    assert np.all(np.isfinite(history.train_loss))
    assert np.all(np.isfinite(history.val_loss))
    assert 0.0 <= history.final()["val_bacc"] <= 1.0


def test_zero_learning_rate_changes_nothing(tiny_config, tiny_data, tiny_plan):
    config = tiny_config.replace(lr=0.0, epochs=1)
    model = assemble(config, tiny_data.image_shape, tiny_data.n_features)
    before = {name: _snapshot(block) for name, block in model.blocks.items()}
    train_end_to_end(model, tiny_data, _fold(tiny_plan), config, job_rng(SEED))
    for name, block in model.blocks.items():
        for key, value in _snapshot(block).items():
            assert np.array_equal(value, before[name][key])


def test_run_fold_deterministic(tiny_config, tiny_data, tiny_plan):
    """The same (seed, cell, fold) reproduces scores and predictions."""
    first = run_fold("fusion", tiny_data, _fold(tiny_plan), 0, tiny_config)
    second = run_fold("fusion", tiny_data, _fold(tiny_plan), 0, tiny_config)
    assert first.bacc == second.bacc
    assert np.array_equal(first.model.predict(tiny_data), second.model.predict(tiny_data))
    assert first.history.train_loss == second.history.train_loss


def test_non_finite_loss_aborts(tiny_config, tiny_data, tiny_plan, mocker):
    """A NaN loss stops training with the epoch and learning rate."""
    mocker.patch("multifix.pipeline.training.cross_entropy",
                 return_value=Tensor(np.array(np.nan)))
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features)
    with pytest.raises(NumericAbort) as info:
        train_end_to_end(model, tiny_data, _fold(tiny_plan))
    assert info.value.epoch == 0
    assert info.value.lr == tiny_config.lr


def test_single_modality_baseline(tiny_config, tiny_data, tiny_plan):
    model, bacc = train_single_modality("image", tiny_data, _fold(tiny_plan), tiny_config)
    assert set(model.blocks) == {"image", "fusion"}
    assert 0.0 <= bacc <= 1.0


def test_supervised_feature_width(tiny_config, tiny_data, tiny_plan):
    """The supervised block predicts one output per truth feature."""
    model, bacc = train_supervised_feature("tabular", tiny_data, _fold(tiny_plan), tiny_config)
    assert model.config.n_t == tiny_data.truth_matrix("tabular").shape[1]
    assert 0.0 <= bacc <= 1.0


def test_supervised_feature_needs_truth(tiny_config, tiny_data, tiny_plan):
    bare = MultimodalDataset(tiny_data.images, tiny_data.tabular, tiny_data.labels, 4, "bare")
    with pytest.raises(DataError):
        train_supervised_feature("image", bare, _fold(tiny_plan), tiny_config)


def test_autoencoder_pretraining(tiny_config, tiny_data):
    pair, history = pretrain_autoencoder(tiny_data.images[:16], 4, tiny_config,
                                         job_rng(SEED))
    assert len(history) == tiny_config.ae_epochs
    assert pair.reconstruct(tiny_data.images[:3]).shape == (3, 16, 16, 3)
    latent = pair.encode(tiny_data.images[:2])
    assert latent.shape == (2, 4)
    assert np.linalg.norm(latent[0] - latent[1]) > 0


def test_autoencoder_latent_too_small(tiny_config, tiny_data):
    with pytest.raises(ValueError):
        pretrain_autoencoder(tiny_data.images, 1, tiny_config.replace(n_i=2))


def _encoder_model(config, data):
    pair, _ = pretrain_autoencoder(data.images, config.ae_latent, config, job_rng(SEED))
    return assemble(config, data.image_shape, data.n_features, job_rng(SEED, 1),
                    encoder=pair.encoder)


def test_frozen_encoder_is_bit_identical(tiny_config, tiny_data, tiny_plan):
    """Frozen encoder parameters never change; the rest of the block does."""
    config = tiny_config.replace(ae_pretrain=True, freeze="frozen")
    model = _encoder_model(config, tiny_data)
    encoder_before = _snapshot(model.blocks["image"], model.n_encoder)
    head_before = _snapshot(model.blocks["image"])
    train_with_frozen_encoder(model, tiny_data, _fold(tiny_plan), config, job_rng(SEED))
    after = _snapshot(model.blocks["image"])
    for key, value in encoder_before.items():
        assert np.array_equal(after[key], value)
    assert any(not np.array_equal(after[k], head_before[k]) for k in after
               if k not in encoder_before)


def test_defreeze_releases_encoder(tiny_config, tiny_data, tiny_plan):
    config = tiny_config.replace(ae_pretrain=True, freeze="defreeze", defreeze_epoch=1)
    model = _encoder_model(config, tiny_data)
    before = _snapshot(model.blocks["image"], model.n_encoder)
    train_with_frozen_encoder(model, tiny_data, _fold(tiny_plan), config, job_rng(SEED))
    after = _snapshot(model.blocks["image"], model.n_encoder)
    assert any(not np.array_equal(after[k], before[k]) for k in before)


def test_frozen_training_needs_encoder(tiny_config, tiny_data, tiny_plan):
    model = assemble(tiny_config, tiny_data.image_shape, tiny_data.n_features)
    with pytest.raises(ValueError):
        train_with_frozen_encoder(model, tiny_data, _fold(tiny_plan))


@pytest.mark.parametrize('kind, blocks', [("bypass_both", {"fusion"}),
                                          ("bypass_image", {"tabular", "fusion"}),
                                          ("tabular", {"tabular", "fusion"}),
                                          ("frozen_encoder_image", {"image", "fusion"})])
def test_run_fold_kinds(kind, blocks, tiny_config, tiny_data, tiny_plan):
    result = run_fold(kind, tiny_data, _fold(tiny_plan), 1, tiny_config)
    assert set(result.model.blocks) == blocks
    assert result.fold == 1


def test_run_fold_unknown_kind(tiny_config, tiny_data, tiny_plan):
    with pytest.raises(ValueError):
        run_fold("ensemble", tiny_data, _fold(tiny_plan), 0, tiny_config)


def test_cross_validate_report(tiny_config, tiny_data, tiny_plan):
    report, results = cross_validate("fusion", tiny_data, tiny_plan, tiny_config,
                                     {"resolution": 16})
    assert report.cell == {"kind": "fusion", "resolution": 16}
    assert len(report.fold_bacc) == 2 and len(results) == 2
    assert report.fold_bacc == [r.bacc for r in results]
    assert report.mean == pytest.approx(np.mean(report.fold_bacc))


def test_fit_final_writes_checkpoints(tiny_config, tiny_data, tiny_plan, tmp_path):
    """One checkpoint per fold and the histories of every fold."""
    report, results = fit_final(tiny_data, tiny_plan, tiny_config, tmp_path)
    assert report.cell["stage"] == "final"
    for r in results:
        model, meta = PipelineModel.load(tmp_path / f"fold{r.fold}.mfix")
        assert meta["bacc"] == r.bacc
        assert np.array_equal(model.predict(tiny_data), r.model.predict(tiny_data))
    with open(tmp_path / "history.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "val_bacc"]
    assert len(rows) == 1 + 2 * tiny_config.epochs


def test_history_appends(tmp_path):
    history = TrainingHistory()
    history.append(0, 1.0, 2.0)
    history.write_csv(tmp_path / "h.csv")
    history.write_csv(tmp_path / "h.csv")
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 3


def test_map_jobs_keeps_order():
    """Parallel and serial job maps agree."""
    jobs = [(2, 3), (3, 2), (5, 1)]
    assert map_jobs(pow, jobs, n_jobs=2) == map_jobs(pow, jobs) == [8, 9, 5]


def test_job_streams_are_independent():
    a = job_rng(SEED, 0, 0).random(3)
    assert np.array_equal(a, job_rng(SEED, 0, 0).random(3))
    assert not np.array_equal(a, job_rng(SEED, 0, 1).random(3))
