# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the degradation and bottleneck sweeps and the result files.
"""
import csv

import numpy as np
import pytest

from multifix.parameters import PipelineConfig
from multifix.pipeline import (EvalReport, cell_text, flag_stagnation, run_bottleneck_sweep,
                               run_degradation_sweep, significance_test, write_reports,
                               write_significance)

from conftest import TINY

"""Random seed for tests"""
SEED = 123456


@pytest.fixture(scope="module")
def sweep():
    return run_degradation_sweep(PipelineConfig(TINY), resolutions=[16, 8], sigmas=[0.0, 5.0],
                                 n_samples=40, data_seed=SEED)


def test_matrix_shape(sweep):
    """Resolutions and sigmas plus the bypass and single-modality lines."""
    assert sweep.shape == (4, 4)
    assert sweep.row_labels == ["16", "8", "I", "tabular only"]
    assert sweep.col_labels == ["0", "5", "T", "image only"]
    assert len(sweep.reports) == 13


def test_cell_kinds(sweep):
    assert sweep.report(0, 0).cell["kind"] == "fusion"
    assert sweep.report(1, 2).cell["kind"] == "bypass_tabular"
    assert sweep.report(0, 3).cell["kind"] == "image"
    assert sweep.report(2, 1).cell["kind"] == "bypass_image"
    assert sweep.report(3, 0).cell["kind"] == "tabular"
    assert sweep.report(2, 2).cell["kind"] == "bypass_both"


def test_empty_corners(sweep):
    means = sweep.mean_matrix()
    for row, col in [(2, 3), (3, 2), (3, 3)]:
        assert sweep.report(row, col) is None
        assert np.isnan(means[row, col])
    assert np.isfinite(means[:2, :2]).all()


def test_fusion_vs_single(sweep):
    comparison = sweep.fusion_vs_single(0, 0)
    assert set(comparison) == {"image", "tabular"}
    expected = significance_test(sweep.report(0, 0).fold_bacc, sweep.report(0, 3).fold_bacc,
                                 "greater")
    assert comparison["image"].pvalue == expected.pvalue


def test_trend_is_a_correlation(sweep):
    trend = sweep.trend(0)
    assert np.isnan(trend) or -1.0 <= trend <= 1.0


def test_cell_names(sweep):
    names = [report.cell["cell"] for report in sweep.all_reports()]
    assert names[0] == "16|0"
    assert "I|T" in names


def test_bottleneck_sweep(tiny_config, tiny_data, tiny_plan):
    best, reports = run_bottleneck_sweep(tiny_data, tiny_config, tiny_plan, widths=(1, 2))
    assert best in (1, 2)
    assert [r.cell["width"] for r in reports] == [1, 2]
    losses = [r.mean_loss for r in reports]
    assert best == (1, 2)[int(np.argmin(losses))]


def test_stagnation_warns():
    stuck = EvalReport("xor3", {"variant": "fusion"}, [0.5, 0.48, 0.52])
    with pytest.warns(UserWarning, match="chance"):
        assert flag_stagnation(stuck)
    assert not flag_stagnation(EvalReport("xor", {}, [0.9, 0.95]))


def test_result_files(tmp_path):
    """results.csv has one row per fold; summary.csv one row per cell."""
    reports = [EvalReport("multiclass", {"kind": "fusion", "row": 0}, [0.9, 1.0], [0.2, 0.1], 4),
               EvalReport("multiclass", {"kind": "image", "row": 0}, [0.5, 0.5], None, 4)]
    write_reports(reports, tmp_path / "out")
    with open(tmp_path / "out" / "results.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert rows[0]["cell"] == "kind=fusion;row=0"
    assert rows[0]["bacc"] == "0.900000" and rows[0]["loss"] == "0.200000"
    assert rows[3]["loss"] == ""
    with open(tmp_path / "out" / "summary.csv", newline="", encoding="utf-8") as fh:
        summary = list(csv.DictReader(fh))
    assert [s["mean_bacc"] for s in summary] == ["0.950000", "0.500000"]
    assert summary[1]["stagnated"] == "0"


def test_cell_text_sorted():
    assert cell_text(EvalReport("x", {"sigma": 5.0, "res": 10}, [0.5])) == "res=10;sigma=5.0"


def test_significance_file(tmp_path):
    comparisons = {"fusion>image": significance_test([0.9, 0.8, 0.95], [0.5, 0.6, 0.55],
                                                     "greater")}
    write_significance(comparisons, tmp_path / "significance.csv")
    with open(tmp_path / "significance.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["comparison"] == "fusion>image"
    assert float(rows[0]["pvalue"]) == pytest.approx(1 / 8)
