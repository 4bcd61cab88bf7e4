# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Full-scale experiments on the synthetic problems. Each one trains networks
at the default sample counts and takes minutes; run with ``--runslow``.
"""
import copy

import numpy as np
import pytest

from multifix.experiment import Experiment, reference_table
from multifix.explain import explain_samples, extract_truth_table, table_equivalence
from multifix.parameters import GomeaConfig
from multifix.pipeline import (cross_validate, distill, pipeline_config, run_degradation_sweep,
                               run_fold, significance_test)
from multifix.synthdata import kfold_split, make_dataset

pytestmark = pytest.mark.slow

"""Random seed for tests"""
SEED = 123456
"""Significance level for statistical tests"""
ALPHA = 0.05


@pytest.fixture(scope="module")
def multiclass():
    return make_dataset("multiclass", rng_seed=SEED)


@pytest.fixture(scope="module")
def multiclass_plan(multiclass):
    return kfold_split(multiclass.labels, 5, SEED)


@pytest.fixture(scope="module")
def clean_cell(multiclass, multiclass_plan):
    return cross_validate("fusion", multiclass, multiclass_plan, pipeline_config("multiclass"))


def test_multiclass_clean_cell(clean_cell, multiclass, multiclass_plan):
    """Fusion solves the clean cell and beats both single modalities."""
    report, _ = clean_cell
    assert report.mean >= 0.95
    config = pipeline_config("multiclass")
    for kind in ("image", "tabular"):
        single, _ = cross_validate(kind, multiclass, multiclass_plan, config)
        assert report.mean > single.mean


def test_degradation_trend():
    """Accuracy falls as the tabular noise grows."""
    sigmas = [0.0, 2.5, 5.0, 7.5, 10.0]
    result = run_degradation_sweep(pipeline_config("multiclass"), [100], sigmas,
                                   data_seed=SEED)
    assert result.trend(0) < 0


def test_supervised_tabular_at_high_noise():
    data = make_dataset("multiclass", tab_sigma=10.0, rng_seed=SEED)
    report, _ = cross_validate("feature_tabular", data, kfold_split(data.labels, 5, SEED),
                               pipeline_config("multiclass"))
    assert 0.40 <= report.mean <= 0.60


@pytest.mark.parametrize('kind, img_size, low, high', [("feature_image", 100, 0.98, 1.0),
                                                        ("feature_image", 10, 0.0, 0.65),
                                                        ("feature_tabular", 100, 0.90, 1.0)])
def test_supervised_feature_baselines(kind, img_size, low, high):
    data = make_dataset("multiclass", img_size=img_size, rng_seed=SEED)
    report, _ = cross_validate(kind, data, kfold_split(data.labels, 5, SEED),
                               pipeline_config("multiclass"))
    assert low <= report.mean <= high


def test_multifeature_synergy():
    data = make_dataset("multifeature", rng_seed=SEED)
    plan = kfold_split(data.labels, 5, SEED)
    config = pipeline_config("multifeature")
    fusion, _ = cross_validate("fusion", data, plan, config)
    singles = [cross_validate(kind, data, plan, config)[0] for kind in ("image", "tabular")]
    best = max(singles, key=lambda r: r.mean)
    assert fusion.mean - best.mean >= 0.10
    assert significance_test(fusion.fold_bacc, best.fold_bacc, "greater").pvalue < ALPHA


def test_xor_needs_pretrained_encoder(tmp_path):
    """Plain fusion stays at chance; the pretrained, de-frozen encoder solves XOR."""
    plain = Experiment({"data": {"problem": "xor"}}, seed=SEED).train(tmp_path / "plain")
    assert plain.mean <= 0.60
    pretrained = Experiment({"data": {"problem": "xor"},
                             "run": {"variant": "hpo_ae_fusion", "search": "hpo"}},
                            seed=SEED).train(tmp_path / "hpo")
    assert pretrained.mean >= 0.85


def test_three_gated_xor_stagnates(tmp_path):
    with pytest.warns(UserWarning, match="chance"):
        report = Experiment({"data": {"problem": "xor3"}}, seed=SEED).train(tmp_path / "run")
    assert report.mean <= 0.60
    assert report.stagnated


def test_distillation_recovers_rule(clean_cell, multiclass, multiclass_plan):
    """The hybrid model keeps its accuracy and its truth table is the labelling rule."""
    _, results = clean_cell
    fold = multiclass_plan.train(0), multiclass_plan.test(0)
    result = distill(copy.deepcopy(results[0].model), multiclass, fold, 0, GomeaConfig(), SEED)
    assert result.tabular[0].fidelity >= 0.95
    assert result.hybrid_bacc >= 0.95
    table = extract_truth_table(result.fusion.expression, 1, 1, 4)
    assert table_equivalence(table, reference_table("multiclass"))[0]


def test_gradcam_localises_shape(clean_cell, multiclass, multiclass_plan):
    """Most of the heat lies inside the drawn shape."""
    _, results = clean_cell
    samples = []
    for i, result in enumerate(results):
        samples += [(result.model, s) for s in multiclass_plan.test(i)[:10].tolist()]
    masses = []
    for model, sample in samples:
        heatmap = explain_samples(model, multiclass, [sample])[0]
        boxes = multiclass.boxes[sample].values()
        masses.append(min(1.0, sum(heatmap.mass_inside(box) for box in boxes)))
    assert len(masses) >= 50
    assert np.mean(masses) >= 0.5


def test_reruns_reproduce(multiclass, multiclass_plan):
    fold = multiclass_plan.train(0), multiclass_plan.test(0)
    config = pipeline_config("multiclass")
    first = run_fold("fusion", multiclass, fold, 0, config)
    second = run_fold("fusion", multiclass, fold, 0, config)
    assert first.bacc == pytest.approx(second.bacc, abs=1e-6)
    gp = {"n_seeds": 2}
    one = distill(first.model, multiclass, fold, 0, gp, SEED)
    two = distill(second.model, multiclass, fold, 0, gp, SEED)
    first_exprs = [b.expression.infix() for b in one.blocks]
    assert first_exprs == [b.expression.infix() for b in two.blocks]
