# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Scores and significance tests on fold results.
"""
import numpy as np
from scipy import stats
from statsmodels.stats.weightstats import DescrStatsW

from multifix.errors import DataError


def balanced_accuracy(preds, labels, n_classes=None):
    """
    Mean recall over the classes present in ``labels``.

    Parameters
    ----------
    preds, labels: array_like of int
    n_classes: int, optional
        Only used to validate the label range.

    Raises
    ------
    DataError
        On empty or unequal-length inputs.
    """
    preds = np.asarray(preds).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise DataError("balanced accuracy of an empty set")
    if preds.size != labels.size:
        raise DataError(f"{preds.size} predictions for {labels.size} labels")
    if n_classes is not None and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"labels must lie in [0, {n_classes})")
    recalls = [np.mean(preds[labels == c] == c) for c in np.unique(labels)]
    return float(np.mean(recalls))


class SignificanceResult:
    """
    Paired comparison of two fold-score vectors.

    Attributes
    ----------
    pvalue: float
        Exact sign-flip permutation p-value.
    ttest_pvalue: float
        Paired t-test p-value; NaN when the differences have no spread.
    mean_difference: float
    alternative: str
    """

    def __init__(self, pvalue, ttest_pvalue, mean_difference, alternative):
        self.pvalue = pvalue
        self.ttest_pvalue = ttest_pvalue
        self.mean_difference = mean_difference
        self.alternative = alternative

    def __repr__(self):
        return (f"SignificanceResult(p={self.pvalue:.4f}, t-test p={self.ttest_pvalue:.4f}, "
                f"diff={self.mean_difference:+.4f}, {self.alternative})")

    def as_dict(self):
        return {"pvalue": self.pvalue, "ttest_pvalue": self.ttest_pvalue,
                "mean_difference": self.mean_difference, "alternative": self.alternative}


def _mean_difference(x, y, axis):
    return np.mean(x - y, axis=axis)


def significance_test(scores_a, scores_b, alternative="two-sided"):
    """
    Exact paired permutation test on per-fold scores.

    Every one of the ``2**n`` sign patterns of the paired differences is
    enumerated. With 5 folds the smallest attainable p-value is 1/16 for the
    two-sided test and 1/32 for ``alternative="greater"``.

    Parameters
    ----------
    scores_a, scores_b: array_like
        Paired scores, same length.
    alternative: str
        ``"two-sided"``, ``"greater"`` (a beats b) or ``"less"``.

    Returns
    -------
    SignificanceResult

    Raises
    ------
    DataError
        On unequal lengths or fewer than 2 pairs.
    """
    a = np.asarray(scores_a, dtype=np.float64).reshape(-1)
    b = np.asarray(scores_b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise DataError(f"paired test needs equal lengths, got {a.size} and {b.size}")
    if a.size < 2:
        raise DataError(f"paired test needs at least 2 pairs, got {a.size}")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative}")

    diff = a - b
    if np.all(diff == 0):
        pvalue = 1.0
    else:
        result = stats.permutation_test((a, b), _mean_difference, permutation_type="samples",
                                        n_resamples=np.inf, alternative=alternative,
                                        vectorized=True)
        pvalue = float(np.clip(result.pvalue, 0.0, 1.0))

    if np.ptp(diff) == 0:
        ttest_p = float("nan")
    else:
        larger = {"two-sided": "two-sided", "greater": "larger", "less": "smaller"}[alternative]
        _, ttest_p, _ = DescrStatsW(diff).ttest_mean(0.0, alternative=larger)
        ttest_p = float(ttest_p)
    return SignificanceResult(pvalue, ttest_p, float(diff.mean()), alternative)


def spearman_trend(values):
    """Spearman correlation between position and value; NaN for constant input."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2 or np.ptp(values) == 0:
        return float("nan")
    return float(stats.spearmanr(np.arange(values.size), values)[0])


def mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


class EvalReport:
    """
    Cross-validated result of one experiment cell.

    Parameters
    ----------
    problem: str
    cell: dict
        Axis name to value, e.g. ``{"variant": "fusion", "resolution": 100}``.
    fold_bacc: list of float
    fold_loss: list of float, optional
    n_classes: int

    Attributes
    ----------
    significance: dict
        Comparison name to :py:meth:`SignificanceResult.as_dict`.
    """

    def __init__(self, problem, cell, fold_bacc, fold_loss=None, n_classes=2):
        self.problem = problem
        self.cell = dict(cell)
        self.fold_bacc = [float(v) for v in fold_bacc]
        self.fold_loss = [float(v) for v in fold_loss] if fold_loss is not None else []
        self.n_classes = n_classes
        self.significance = {}

    def __repr__(self):
        return f"EvalReport({self.problem}, {self.cell}, {self.mean:.3f} ± {self.std:.3f})"

    @property
    def mean(self):
        return mean_std(self.fold_bacc)[0]

    @property
    def std(self):
        return mean_std(self.fold_bacc)[1]

    @property
    def mean_loss(self):
        return mean_std(self.fold_loss)[0] if self.fold_loss else float("nan")

    @property
    def std_loss(self):
        return mean_std(self.fold_loss)[1] if self.fold_loss else float("nan")

    @property
    def stagnated(self):
        """Mean balanced accuracy within 0.1 of chance."""
        return abs(self.mean - 1.0 / self.n_classes) < 0.1

    def rows(self):
        """One ``results.csv`` row per fold."""
        for fold, bacc in enumerate(self.fold_bacc):
            loss = self.fold_loss[fold] if self.fold_loss else ""
            yield {"problem": self.problem, **self.cell, "fold": fold, "bacc": bacc,
                   "loss": loss}

    def summary(self):
        return {"problem": self.problem, **self.cell, "mean_bacc": self.mean,
                "std_bacc": self.std, "stagnated": self.stagnated}
