# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Hyper-parameter grid search and fusion-block architecture enumeration.

Both evaluate every candidate with k-fold cross-validation and pick the
lowest mean validation loss, then the lowest standard deviation, then the
earliest candidate.
"""
import itertools
import logging

import numpy as np
from prettytable import PrettyTable

from multifix.parameters import HpoGrid, NasSpace
from multifix.pipeline.training import cross_validate

logger = logging.getLogger(__name__)


class SearchResult:
    """
    Outcome of a search.

    Attributes
    ----------
    best: dict
        Winning candidate.
    best_config: PipelineConfig
    cells: list of dict
        One row per candidate: the candidate plus mean/std loss and BAcc.
    reports: list of EvalReport
    """

    def __init__(self, best, best_config, cells, reports):
        self.best = best
        self.best_config = best_config
        self.cells = cells
        self.reports = reports

    def __len__(self):
        return len(self.cells)

    def table(self):
        keys = [k for k in self.cells[0] if k not in ("mean_loss", "std_loss", "mean_bacc",
                                                      "std_bacc")]
        table = PrettyTable(keys + ["val loss", "BAcc"])
        for cell in self.cells:
            table.add_row([cell[k] for k in keys]
                          + [f"{cell['mean_loss']:.4f} ± {cell['std_loss']:.4f}",
                             f"{cell['mean_bacc']:.3f} ± {cell['std_bacc']:.3f}"])
        return table


def _select(cells):
    def rank(item):
        i, cell = item
        loss = cell["mean_loss"] if np.isfinite(cell["mean_loss"]) else np.inf
        return loss, cell["std_loss"], cell.get("lr", 0.0), i
    return min(enumerate(cells), key=rank)[0]


def _evaluate(candidates, to_config, dataset, plan, kind, n_jobs, label):
    cells, reports = [], []
    for cell_id, candidate in enumerate(candidates):
        config = to_config(candidate)
        report, _ = cross_validate(kind, dataset, plan, config, {label: cell_id}, cell_id,
                                   n_jobs)
        cells.append({**candidate, "mean_loss": report.mean_loss, "std_loss": report.std_loss,
                      "mean_bacc": report.mean, "std_bacc": report.std})
        reports.append(report)
    best = _select(cells)
    logger.info("%s: best of %d candidates is %s", label, len(cells), candidates[best])
    return best, cells, reports


def hpo_grid_search(grid, dataset, config, plan, kind="fusion", n_jobs=1):
    """
    Cross-validate every learning-rate / weight-decay (/ de-freeze epoch) cell.

    Parameters
    ----------
    grid: HpoGrid or dict
    dataset: MultimodalDataset
    config: PipelineConfig
        Settings shared by all cells.
    plan: FoldPlan
    kind: str
        Training kind, see :py:func:`~multifix.pipeline.training.run_fold`.

    Returns
    -------
    SearchResult
        Ties on mean loss go to the lower standard deviation, then the lower
        learning rate.
    """
    grid = grid if isinstance(grid, HpoGrid) else HpoGrid(grid)
    candidates = grid.cells()
    best, cells, reports = _evaluate(candidates, lambda c: config.replace(**c), dataset, plan,
                                     kind, n_jobs, "hpo")
    return SearchResult(candidates[best], config.replace(**candidates[best]), cells, reports)


def enumerate_architectures(space, rng=None):
    """
    Every fusion-block specification in ``space``.

    Width and dropout are chosen independently per hidden layer, so a space
    with w widths and d dropouts has ``(w*d)**n`` candidates with n layers.
    With ``space.sample`` set, a random subset of that size is returned in
    enumeration order.
    """
    space = space if isinstance(space, NasSpace) else NasSpace(space)
    candidates = []
    for activation in space.activation:
        for batchnorm in space.batchnorm:
            for n_layers in space.hidden_layers:
                layer_options = list(itertools.product(space.width, space.dropout))
                for layers in itertools.product(layer_options, repeat=n_layers):
                    candidates.append({"activation": activation, "batchnorm": batchnorm,
                                       "hidden": [w for w, _ in layers],
                                       "dropout": [d for _, d in layers]})
    if space.sample is not None and space.sample < len(candidates):
        rng = rng if rng is not None else np.random.default_rng(0)
        keep = np.sort(rng.choice(len(candidates), space.sample, replace=False))
        candidates = [candidates[i] for i in keep]
    return candidates


def nas_enumerate(space, dataset, config, plan, kind="fusion", n_jobs=1, rng=None):
    """
    Cross-validate every fusion architecture of ``space``.

    Returns
    -------
    SearchResult
        ``best`` is the winning ``fusion_block`` specification.
    """
    candidates = enumerate_architectures(space, rng)

    def to_config(candidate):
        return config.replace(fusion_block={**config.fusion_block, **candidate})

    flat = [{**c, "hidden": str(c["hidden"]), "dropout": str(c["dropout"])} for c in candidates]
    best, cells, reports = _evaluate(candidates, to_config, dataset, plan, kind, n_jobs, "nas")
    for cell, row in zip(cells, flat):
        cell.update(row)
    return SearchResult(candidates[best], to_config(candidates[best]), cells, reports)
