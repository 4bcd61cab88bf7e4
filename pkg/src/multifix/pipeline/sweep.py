# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Degradation and bottleneck sweeps, and the CSV files they produce.
"""
import csv
import logging
import warnings
from pathlib import Path

import numpy as np

from multifix.pipeline.metrics import significance_test, spearman_trend
from multifix.pipeline.training import cross_validate
from multifix.synthdata import make_multiclass_dataset, kfold_split
from multifix.synthdata.problems import RESOLUTIONS, TABULAR_SIGMAS

logger = logging.getLogger(__name__)

RESULTS_HEADER = ["problem", "cell", "fold", "bacc", "loss", "n_classes"]
SUMMARY_HEADER = ["problem", "cell", "mean_bacc", "std_bacc", "stagnated"]
SIGNIFICANCE_HEADER = ["comparison", "alternative", "mean_difference", "pvalue", "ttest_pvalue"]


class DegradationResult:
    """
    Result matrix of a degradation sweep.

    Rows are the image resolutions, then ``"I"`` (ground-truth image
    features) and ``"tabular only"``; columns are the tabular sigmas, then
    ``"T"`` (ground-truth tabular feature) and ``"image only"``. The two
    corner cells pairing a bypass with a single-modality line hold no report.
    """

    def __init__(self, resolutions, sigmas, reports):
        self.resolutions = list(resolutions)
        self.sigmas = list(sigmas)
        self.row_labels = [str(r) for r in resolutions] + ["I", "tabular only"]
        self.col_labels = [f"{s:g}" for s in sigmas] + ["T", "image only"]
        self.reports = reports

    @property
    def shape(self):
        return len(self.row_labels), len(self.col_labels)

    def report(self, row, col):
        return self.reports.get((row, col))

    def _matrix(self, attribute):
        out = np.full(self.shape, np.nan)
        for (row, col), report in self.reports.items():
            out[row, col] = getattr(report, attribute)
        return out

    def mean_matrix(self):
        return self._matrix("mean")

    def std_matrix(self):
        return self._matrix("std")

    def trend(self, row=0):
        """Spearman correlation of mean BAcc with increasing sigma along ``row``."""
        return spearman_trend(self.mean_matrix()[row, :len(self.sigmas)])

    def fusion_vs_single(self, row=0, col=0, alternative="greater"):
        """
        Compare a fusion cell with both single-modality baselines of its line.

        Returns
        -------
        dict
            ``"image"`` and ``"tabular"`` to :py:class:`SignificanceResult`.
        """
        fusion = self.reports[(row, col)].fold_bacc
        image = self.reports[(row, len(self.sigmas) + 1)].fold_bacc
        tabular = self.reports[(len(self.resolutions) + 1, col)].fold_bacc
        return {"image": significance_test(fusion, image, alternative),
                "tabular": significance_test(fusion, tabular, alternative)}

    def cell_name(self, row, col):
        return f"{self.row_labels[row]}|{self.col_labels[col]}"

    def all_reports(self):
        for key in sorted(self.reports):
            report = self.reports[key]
            report.cell["cell"] = self.cell_name(*key)
            yield report


def _cell_kind(row, col, n_res, n_sig):
    image_line = row < n_res
    tabular_line = col < n_sig
    match (image_line, tabular_line, row == n_res, col == n_sig):
        case (True, True, _, _):
            return "fusion"
        case (True, False, _, True):
            return "bypass_tabular"
        case (True, False, _, False):
            return "image"
        case (False, True, True, _):
            return "bypass_image"
        case (False, True, False, _):
            return "tabular"
        case (False, False, True, True):
            return "bypass_both"
    return None


def run_degradation_sweep(config, resolutions=RESOLUTIONS, sigmas=TABULAR_SIGMAS,
                          n_samples=200, data_seed=0, folds=None, n_jobs=1):
    """
    Multiclass result matrix over image resolution and tabular noise.

    Every cell draws the same samples (same ``data_seed``) at its own
    resolution and sigma and is scored with the same fold plan.

    Parameters
    ----------
    config: PipelineConfig
    resolutions: sequence of int
    sigmas: sequence of float
    n_samples: int
    data_seed: int
    folds: int, optional
        Defaults to ``config.folds``.

    Returns
    -------
    DegradationResult
        Shape ``(len(resolutions) + 2, len(sigmas) + 2)``.
    """
    n_res, n_sig = len(resolutions), len(sigmas)
    datasets = {}

    def dataset(resolution, sigma):
        key = (resolution, sigma)
        if key not in datasets:
            datasets[key] = make_multiclass_dataset(n_samples, resolution, sigma, data_seed)
        return datasets[key]

    base = dataset(resolutions[0], sigmas[0])
    plan = kfold_split(base.labels, folds or config.folds, config.seed)
    reports = {}
    for row in range(n_res + 2):
        for col in range(n_sig + 2):
            kind = _cell_kind(row, col, n_res, n_sig)
            if kind is None:
                continue
            resolution = resolutions[row] if row < n_res else resolutions[-1]
            sigma = sigmas[col] if col < n_sig else sigmas[0]
            cell_id = row * (n_sig + 2) + col
            report, _ = cross_validate(kind, dataset(resolution, sigma), plan, config,
                                       {"row": row, "col": col}, cell_id, n_jobs)
            reports[(row, col)] = report
    result = DegradationResult(resolutions, sigmas, reports)
    logger.info("degradation sweep: sigma trend at %s px is %.3f", resolutions[0],
                result.trend(0))
    return result


def run_bottleneck_sweep(dataset, config, plan, widths=(1, 2, 3, 4, 5), n_jobs=1):
    """
    Cross-validate ``n_i = n_t = w`` for every width.

    Returns
    -------
    best: int
        Width with the lowest mean validation loss, ties to the smaller width.
    reports: list of EvalReport
    """
    reports = []
    for cell_id, width in enumerate(widths):
        report, _ = cross_validate("fusion", dataset, plan, config.replace(n_i=width, n_t=width),
                                   {"width": width}, cell_id, n_jobs)
        reports.append(report)
    losses = [r.mean_loss if np.isfinite(r.mean_loss) else np.inf for r in reports]
    best = widths[int(np.argmin(losses))]
    logger.info("bottleneck sweep: best width %d", best)
    return best, reports


def flag_stagnation(report):
    """Warn when ``report`` is within 0.1 of chance; returns the flag."""
    if report.stagnated:
        message = (f"{report.problem} {report.cell}: mean BAcc {report.mean:.3f} is near "
                   f"chance level {1.0 / report.n_classes:.3f}")
        warnings.warn(message)
        logger.warning(message)
    return report.stagnated


def cell_text(report):
    return ";".join(f"{k}={v}" for k, v in sorted(report.cell.items()))


def write_results(reports, path):
    """``results.csv``: one row per cell and fold."""
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, delimiter=",")
        writer.writerow(RESULTS_HEADER)
        for report in reports:
            for row in report.rows():
                writer.writerow([report.problem, cell_text(report), row["fold"],
                                 f"{row['bacc']:.6f}",
                                 "" if row["loss"] == "" else f"{row['loss']:.6f}",
                                 report.n_classes])


def write_summary(reports, path):
    """``summary.csv``: mean and standard deviation per cell."""
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, delimiter=",")
        writer.writerow(SUMMARY_HEADER)
        for report in reports:
            writer.writerow([report.problem, cell_text(report), f"{report.mean:.6f}",
                             f"{report.std:.6f}", int(report.stagnated)])


def write_reports(reports, out_dir):
    """Write ``results.csv`` and ``summary.csv`` to ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = list(reports)
    write_results(reports, out_dir / "results.csv")
    write_summary(reports, out_dir / "summary.csv")


def write_significance(comparisons, path):
    """``significance.csv``: one row per named comparison."""
    with open(path, "w", newline="", encoding="utf-8") as csvfile:
        writer = csv.writer(csvfile, delimiter=",")
        writer.writerow(SIGNIFICANCE_HEADER)
        for name, result in comparisons.items():
            writer.writerow([name, result.alternative, f"{result.mean_difference:.6f}",
                             f"{result.pvalue:.6f}", f"{result.ttest_pvalue:.6f}"])
