# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the explanation bundle of a hybrid model and its directory.
"""
import copy
import csv
import json

import numpy as np
import pytest

from multifix.errors import DataError
from multifix.explain import build_bundle, load_bundle, save_bundle
from multifix.parameters import PipelineConfig
from multifix.pipeline import distill, run_fold

from conftest import TINY

"""Random seed for tests"""
SEED = 123456

"""GP settings small enough for unit tests"""
QUICK_GP = {"depths": [2], "population_size": 16, "generations": 4, "max_populations": 1,
            "n_seeds": 1}


@pytest.fixture(scope="module")
def hybrid(tiny_data, tiny_plan):
    fold = tiny_plan.train(0), tiny_plan.test(0)
    model = run_fold("fusion", tiny_data, fold, 0, PipelineConfig(TINY)).model
    result = distill(model, tiny_data, fold, 0, QUICK_GP, SEED)
    return model, result


@pytest.fixture(scope="module")
def bundle(hybrid, tiny_data):
    model, result = hybrid
    return build_bundle(model, result, tiny_data, samples=[0, 5])


def test_bundle_contents(bundle, hybrid):
    _, result = hybrid
    assert len(bundle.heatmaps) == 2
    assert set(bundle.images) == {0, 5}
    assert [b.name for b in bundle.blocks] == ["T1", "fusion"]
    assert bundle.truth_table.names == ["I1", "T1"]
    assert len(bundle.truth_table) == 4
    assert bundle.hybrid_bacc == result.hybrid_bacc


def test_truth_table_matches_fusion_expression(bundle):
    inputs = bundle.truth_table.inputs.astype(float)
    outputs = np.clip(np.rint(bundle.fusion.expression.evaluate(inputs)), 0, 3)
    assert np.array_equal(bundle.truth_table.labels, outputs)


def test_replay_fidelity(bundle):
    """Stored expressions re-evaluated on stored data give the stored numbers."""
    replayed = bundle.replay_fidelity()
    for name, value in bundle.fidelity.items():
        assert replayed[name] == pytest.approx(value)
    assert replayed["hybrid_bacc"] == pytest.approx(bundle.hybrid_bacc)


def test_expressions_only_bundle(hybrid, tiny_data):
    model, result = hybrid
    assert build_bundle(model, result, tiny_data).heatmaps == []


def test_bundle_needs_fusion_expression(hybrid, tiny_data):
    model, result = hybrid
    model = copy.deepcopy(model)
    del model.replacements["fusion"]
    with pytest.raises(DataError):
        build_bundle(model, result, tiny_data)


def test_bundle_needs_tabular_expression(hybrid, tiny_data):
    model, result = hybrid
    partial = copy.copy(result)
    partial.tabular = []
    with pytest.raises(DataError):
        build_bundle(model, partial, tiny_data)


def test_saved_layout(bundle, tmp_path):
    save_bundle(bundle, tmp_path / "bundle")
    root = tmp_path / "bundle"
    assert sorted(p.name for p in (root / "heatmaps").iterdir()) == \
        ["0_I1.png", "0_I1_overlay.png", "5_I1.png", "5_I1_overlay.png"]
    for name in ("expressions.txt", "truth_table.csv", "fidelity.csv", "bundle.json"):
        assert (root / name).is_file()
    with open(root / "fidelity.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["block"] for r in rows] == ["T1", "fusion"]
    assert rows[1]["threshold"] == ""
    with open(root / "bundle.json", encoding="utf-8") as fh:
        assert json.load(fh)["fold"] == 0
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".bundle-")]


def test_round_trip(bundle, tmp_path):
    """A reloaded bundle replays to the same fidelities and table."""
    save_bundle(bundle, tmp_path / "bundle")
    loaded = load_bundle(tmp_path / "bundle")
    assert loaded.truth_table == bundle.truth_table
    assert loaded.fusion.expression == bundle.fusion.expression
    assert loaded.replay_fidelity() == pytest.approx(bundle.replay_fidelity())
    for original, restored in zip(bundle.heatmaps, loaded.heatmaps):
        assert restored.name == original.name
        assert np.allclose(restored.values, original.values, atol=1 / 255 + 1e-6)


def test_load_missing_bundle(tmp_path):
    with pytest.raises(DataError):
        load_bundle(tmp_path)
