# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for balanced accuracy, the paired significance tests, trend
statistics and evaluation reports.
"""
import math

import numpy as np
import pytest
from scipy import stats

from multifix.errors import DataError
from multifix.pipeline import EvalReport, balanced_accuracy, significance_test, spearman_trend

"""Random seed for tests"""
SEED = 123456
"""Significance level for statistical tests"""
ALPHA = 0.01


@pytest.mark.parametrize('preds, labels, expected', [
    ([0, 1, 1, 0], [0, 1, 1, 0], 1.0),
    ([0, 0, 0, 0], [0, 0, 1, 1], 0.5),
    ([0, 0, 0, 0, 0, 1], [0, 0, 0, 0, 1, 1], 0.75),
    ([3, 2, 1, 0], [0, 1, 2, 3], 0.0),
    ([0, 0, 1, 0, 2, 2], [0, 0, 1, 1, 2, 2], 2.5 / 3),
])
def test_balanced_accuracy(preds, labels, expected):
    assert balanced_accuracy(preds, labels) == pytest.approx(expected)


def test_balanced_accuracy_ignores_imbalance():
    """Always predicting the majority class scores 1/n_classes."""
    labels = np.array([0] * 90 + [1] * 10)
    assert balanced_accuracy(np.zeros(100, dtype=int), labels) == pytest.approx(0.5)


@pytest.mark.parametrize('preds, labels, n_classes', [([], [], None), ([0, 1], [0], None),
                                                      ([0, 1], [0, 2], 2)])
def test_balanced_accuracy_errors(preds, labels, n_classes):
    with pytest.raises(DataError):
        balanced_accuracy(preds, labels, n_classes)


def test_permutation_p_values_for_five_folds():
    """Five folds where a always wins give the smallest attainable p-values."""
    a = [0.9, 0.92, 0.95, 0.91, 0.97]
    b = [0.5, 0.55, 0.45, 0.52, 0.48]
    assert significance_test(a, b).pvalue == pytest.approx(1 / 16)
    assert significance_test(a, b, alternative="greater").pvalue == pytest.approx(1 / 32)
    assert significance_test(a, b, alternative="less").pvalue == pytest.approx(1.0)


def test_constant_shift_reaches_smallest_p():
    """A shift without spread is as significant as five pairs allow."""
    b = np.array([0.5, 0.25, 0.75, 0.125, 0.375])
    result = significance_test(b + 0.5, b)
    assert result.pvalue == pytest.approx(1 / 16)
    assert math.isnan(result.ttest_pvalue)


def test_identical_scores():
    """Identical vectors are not significant and the t-test is undefined."""
    result = significance_test([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
    assert result.pvalue == 1.0
    assert math.isnan(result.ttest_pvalue)
    assert result.mean_difference == 0.0


def test_ttest_matches_scipy():
    rng = np.random.default_rng(SEED)
    a = rng.normal(0.8, 0.05, 10)
    b = rng.normal(0.7, 0.05, 10)
    result = significance_test(a, b)
    assert result.ttest_pvalue == pytest.approx(stats.ttest_rel(a, b).pvalue)
    assert result.pvalue < ALPHA


def test_permutation_test_under_null():
    """Scores from the same distribution are rarely significant."""
    rng = np.random.default_rng(SEED)
    rejections = sum(significance_test(rng.normal(size=8), rng.normal(size=8)).pvalue < 0.05
                     for _ in range(200))
    assert rejections / 200 < 0.12


@pytest.mark.parametrize('a, b', [([0.1, 0.2], [0.1]), ([0.1], [0.2])])
def test_significance_errors(a, b):
    with pytest.raises(DataError):
        significance_test(a, b)


@pytest.mark.parametrize('values, expected', [([1.0, 0.9, 0.8, 0.5, 0.5], -1.0),
                                              ([0.1, 0.2, 0.3], 1.0)])
def test_spearman_trend_sign(values, expected):
    assert np.sign(spearman_trend(values)) == expected


def test_spearman_trend_constant():
    assert math.isnan(spearman_trend([0.5, 0.5, 0.5]))


def test_report_statistics():
    report = EvalReport("multiclass", {"resolution": 100, "sigma": 0.0}, [0.9, 1.0, 0.95],
                        [0.3, 0.1, 0.2], n_classes=4)
    assert report.mean == pytest.approx(0.95)
    assert report.std == pytest.approx(np.std([0.9, 1.0, 0.95]))
    assert report.mean_loss == pytest.approx(0.2)
    assert not report.stagnated
    rows = list(report.rows())
    assert [r["fold"] for r in rows] == [0, 1, 2]
    assert rows[0]["resolution"] == 100 and rows[0]["loss"] == 0.3


@pytest.mark.parametrize('baccs, n_classes, stagnated', [([0.5, 0.52], 2, True),
                                                         ([0.65, 0.62], 2, False),
                                                         ([0.3, 0.28], 4, True)])
def test_stagnation_flag(baccs, n_classes, stagnated):
    """Stagnation means a mean within 0.1 of chance."""
    assert EvalReport("xor", {}, baccs, n_classes=n_classes).stagnated == stagnated


def test_report_without_losses():
    report = EvalReport("xor", {"variant": "fusion"}, [0.5, 0.5])
    assert math.isnan(report.mean_loss)
    assert [r["loss"] for r in report.rows()] == ["", ""]
