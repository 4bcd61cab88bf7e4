# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Replacement of trained blocks by symbolic expressions.

The targets of every expression are the trained network's own outputs, not
ground-truth features: tabular features are the tabular block's bottleneck
thresholded at θ, the fusion target is the network's predicted class. The
expressions are fitted on the training fold and scored on the test fold.
"""
import logging
import warnings

import numpy as np

from multifix.errors import ConfigurationError
from multifix.gpgomea import (Const, GpDataset, fit_multiseed, make_operator_set,
                              predict_classes, simplify)
from multifix.nncore import Tensor, no_grad
from multifix.parameters import GomeaConfig
from multifix.pipeline.metrics import balanced_accuracy
from multifix.pipeline.training import map_jobs

logger = logging.getLogger(__name__)

THRESHOLDS = tuple(np.round(np.arange(0.30, 0.7001, 0.05), 2))


class DistilledBlock:
    """
    One expression and how well it reproduces its network counterpart.

    Attributes
    ----------
    name: str
        ``T1``.. for a tabular feature, ``fusion`` for the fusion block.
    expression: Expr
    threshold: float or None
        θ used to binarise the teacher output (tabular features only).
    train_fitness: float
        Balanced accuracy against the teacher on the training fold.
    fidelity: float
        Agreement rate with the teacher on the test fold.
    degenerate: bool
        The teacher was constant on the training fold.
    seed_fitness: list of float
    test_inputs, test_targets: numpy.ndarray
        Expression inputs and teacher targets of the test fold.
    n_classes: int
    """

    def __init__(self, name, expression, threshold, train_fitness, fidelity, degenerate=False,
                 seed_fitness=(), test_inputs=None, test_targets=None, n_classes=2):
        self.name = name
        self.expression = expression
        self.threshold = threshold
        self.train_fitness = train_fitness
        self.fidelity = fidelity
        self.degenerate = degenerate
        self.seed_fitness = list(seed_fitness)
        self.test_inputs = test_inputs
        self.test_targets = test_targets
        self.n_classes = n_classes

    def __repr__(self):
        return f"DistilledBlock({self.name}: '{self.expression}', fidelity={self.fidelity:.3f})"

    def replay(self):
        """Fidelity recomputed from the stored test-fold data."""
        return _agreement(self.expression, self.test_inputs, np.asarray(self.test_targets),
                          self.n_classes)

    def as_dict(self):
        return {"name": self.name, "infix": self.expression.infix(),
                "prefix": self.expression.prefix(), "threshold": self.threshold,
                "train_fitness": self.train_fitness, "fidelity": self.fidelity,
                "degenerate": self.degenerate}


class DistillationResult:
    """
    Everything distilled from one fold model.

    Attributes
    ----------
    fold: int
    tabular: list of DistilledBlock
    fusion: DistilledBlock or None
    nn_bacc: float
        Test-fold balanced accuracy of the network before replacement.
    hybrid_bacc: float
        Test-fold balanced accuracy after all replacements.
    thresholds: dict
        Feature name to θ used for the fusion inputs.
    predictions, labels: numpy.ndarray
        Hybrid predictions and true labels of the test fold.
    """

    def __init__(self, fold, tabular, fusion, nn_bacc, hybrid_bacc, thresholds, predictions=None,
                 labels=None):
        self.fold = fold
        self.tabular = tabular
        self.fusion = fusion
        self.nn_bacc = nn_bacc
        self.hybrid_bacc = hybrid_bacc
        self.thresholds = dict(thresholds)
        self.predictions = predictions
        self.labels = labels

    def __repr__(self):
        return (f"DistillationResult(fold={self.fold}, nn={self.nn_bacc:.3f}, "
                f"hybrid={self.hybrid_bacc:.3f})")

    @property
    def blocks(self):
        return self.tabular + ([self.fusion] if self.fusion is not None else [])


def _gp_fit(x_train, target, names, n_classes, config, base_seed, boolean_variables=()):
    """Multi-seed GP fit; a constant target short-cuts to a constant expression."""
    target = np.asarray(target, dtype=np.int64)
    if np.unique(target).size == 1:
        return Const(float(target[0])), 1.0, True, []
    dataset = GpDataset(x_train, target, "classification", n_classes)
    op_set = make_operator_set(names, config, boolean_variables)
    best, per_seed = fit_multiseed(dataset, op_set, config, base_seed=base_seed)
    return simplify(best.tree.to_expression()), best.fitness, False, per_seed


def _agreement(expression, inputs, target, n_classes):
    if target.size == 0:
        return float("nan")
    return float(np.mean(predict_classes(expression.evaluate(inputs), n_classes) == target))


def _warn_degenerate(name, value):
    message = f"teacher of {name} is constant ({value}) on the training fold"
    warnings.warn(message)
    logger.warning(message)


def distill_tabular(model, dataset, fold, config=None, base_seed=0):
    """
    Fit one expression per tabular bottleneck feature and replace the tabular block.

    Parameters
    ----------
    model: PipelineModel
        Trained model with a tabular block.
    dataset: MultimodalDataset
    fold: tuple
        ``(train_indices, test_indices)``.
    config: GomeaConfig or dict, optional
        ``threshold`` is the default θ; per-feature values in
        ``model.thresholds`` take precedence.
    base_seed: int

    Returns
    -------
    list of DistilledBlock
        One per ``T_j``, in feature order. Expressions read the raw tabular
        columns as ``x0..x{F-1}``.

    Raises
    ------
    ConfigurationError
        If the model has no trainable tabular block.
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    if "tabular" not in model.blocks or "tabular" in model.replacements:
        raise ConfigurationError("[block:tabular] is invalid, inner error: the model has no "
                                 "trained tabular block to distil")
    train_idx, test_idx = (np.asarray(i, dtype=np.int64) for i in fold)
    names = model.feature_names()
    columns = [i for i, name in enumerate(names) if name.startswith("T")]
    values = model.bottleneck(dataset)
    variables = [f"x{j}" for j in range(dataset.n_features)]

    distilled = []
    for j, column in enumerate(columns):
        name = names[column]
        theta = model.thresholds.get(name, config.threshold)
        target = (values[:, column] > theta).astype(np.int64)
        expression, train_fitness, degenerate, seeds = _gp_fit(
            dataset.tabular[train_idx], target[train_idx], variables, 2, config,
            base_seed + 100 * j)
        if degenerate:
            _warn_degenerate(name, int(target[train_idx][0]))
        fidelity = _agreement(expression, dataset.tabular[test_idx], target[test_idx], 2)
        logger.info("%s: '%s' fidelity %.3f", name, expression, fidelity)
        distilled.append(DistilledBlock(name, expression, theta, train_fitness, fidelity,
                                        degenerate, seeds, dataset.tabular[test_idx],
                                        target[test_idx], 2))
    model.replacements["tabular"] = [d.expression for d in distilled]
    return distilled


def _hybrid_predictions(model, binary_inputs):
    """Classes from binarised features: the fusion expression if present, else the network."""
    if "fusion" in model.replacements:
        return predict_classes(model.replacements["fusion"].evaluate(binary_inputs),
                               model.config.n_classes)
    with no_grad():
        logits = model.blocks["fusion"](Tensor(binary_inputs, dtype=np.float32), "eval")
    return logits.data.argmax(1)


def select_thresholds(model, dataset, train_idx, candidates=THRESHOLDS):
    """
    Per-feature θ maximising the training-fold BAcc of the hybrid model.

    The hybrid model thresholds every bottleneck feature at its θ and feeds the
    binary vector to the fusion expression, or to the network's fusion block
    while no expression replaces it. Features are swept one at a time in
    ``I1.., T1..`` order, starting from ``model.thresholds`` and keeping
    earlier choices; ties go to the θ closest to 0.5. Features already
    produced by expressions are binary and keep no threshold.

    Returns
    -------
    dict
        Feature name to θ.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    names = model.feature_names()
    values = model.bottleneck(dataset, train_idx)
    labels = dataset.labels[train_idx]
    order = sorted(candidates, key=lambda t: (abs(t - 0.5), t))
    thresholds = {name: model.thresholds.get(name, 0.5) for name in names
                  if not (name.startswith("T") and "tabular" in model.replacements)}
    for name in names:
        if name not in thresholds:
            continue
        best, best_score = thresholds[name], -np.inf
        for theta in order:
            trial = {**thresholds, name: theta}
            theta_row = np.array([trial.get(n, 0.5) for n in names])
            preds = _hybrid_predictions(model, (values > theta_row).astype(np.float64))
            score = balanced_accuracy(preds, labels)
            if score > best_score:
                best, best_score = theta, score
        thresholds[name] = float(best)
    logger.debug("selected thresholds %s", thresholds)
    return thresholds


def distill_fusion(model, dataset, fold, config=None, base_seed=0):
    """
    Fit an expression from the binarised bottleneck to the network's predicted
    class and replace the fusion block.

    With ``config.threshold_sweep`` the per-feature θ is chosen first by
    :py:func:`select_thresholds`.

    Returns
    -------
    DistilledBlock
        Expression over the Boolean variables ``I1..``, ``T1..``.
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    train_idx, test_idx = (np.asarray(i, dtype=np.int64) for i in fold)
    model.replacements.pop("fusion", None)
    if config.threshold_sweep:
        model.thresholds.update(select_thresholds(model, dataset, train_idx))
    teacher = model.predict(dataset)
    inputs = model.binarized_bottleneck(dataset)
    names = model.feature_names()
    n_classes = model.config.n_classes
    expression, train_fitness, degenerate, seeds = _gp_fit(
        inputs[train_idx], teacher[train_idx], names, n_classes, config, base_seed, names)
    if degenerate:
        _warn_degenerate("fusion", int(teacher[train_idx][0]))
    fidelity = _agreement(expression, inputs[test_idx], teacher[test_idx], n_classes)
    logger.info("fusion: '%s' fidelity %.3f", expression, fidelity)
    model.replacements["fusion"] = expression
    return DistilledBlock("fusion", expression, None, train_fitness, fidelity, degenerate, seeds,
                          inputs[test_idx], teacher[test_idx], n_classes)


def distill(model, dataset, fold, fold_id=0, config=None, base_seed=0):
    """
    Distil the tabular block (when the model has one) and then the fusion block.

    With ``config.threshold_sweep`` every θ, tabular ones included, is
    selected before any block is replaced.

    Returns
    -------
    DistillationResult
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    test_idx = np.asarray(fold[1], dtype=np.int64)
    labels = dataset.labels[test_idx]
    nn_bacc = balanced_accuracy(model.predict(dataset, test_idx), labels)
    tabular = []
    if "tabular" in model.blocks and "tabular" not in model.replacements:
        if config.threshold_sweep:
            model.replacements.pop("fusion", None)
            model.thresholds.update(select_thresholds(model, dataset, fold[0]))
            config = config.replace(threshold_sweep=False)
        tabular = distill_tabular(model, dataset, fold, config, base_seed)
    fusion = distill_fusion(model, dataset, fold, config, base_seed + 1000)
    predictions = model.predict(dataset, test_idx)
    hybrid_bacc = balanced_accuracy(predictions, labels)
    logger.info("fold %d: network bacc %.3f, hybrid bacc %.3f", fold_id, nn_bacc, hybrid_bacc)
    thresholds = {name: model.thresholds.get(name, config.threshold)
                  for name in model.feature_names()}
    return DistillationResult(fold_id, tabular, fusion, nn_bacc, hybrid_bacc, thresholds,
                              predictions, labels)


def _distill_job(model, dataset, fold, fold_id, config, base_seed):
    result = distill(model, dataset, fold, fold_id, config, base_seed)
    return model, result


def distill_folds(models, dataset, plan, config=None, base_seed=0, n_jobs=1):
    """
    :py:func:`distill` every fold model on its own fold.

    Returns
    -------
    models: list of PipelineModel
        Hybrid models, with their replacements set.
    results: list of DistillationResult
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    jobs = [(model, dataset, (plan.train(i), plan.test(i)), i, config, base_seed)
            for i, model in enumerate(models)]
    pairs = map_jobs(_distill_job, jobs, n_jobs)
    return [m for m, _ in pairs], [r for _, r in pairs]


def write_expressions(results, path):
    """
    ``expressions.txt``: one block per fold with the infix and prefix forms,
    threshold and fidelity of every expression.
    """
    with open(path, "w", encoding="utf-8") as file:
        for result in results:
            file.write(f"# fold {result.fold}: network bacc {result.nn_bacc:.6f}, "
                       f"hybrid bacc {result.hybrid_bacc:.6f}\n")
            for block in result.blocks:
                theta = "" if block.threshold is None else f" threshold={block.threshold:g}"
                file.write(f"{block.name} = {block.expression.infix()}\n")
                file.write(f"{block.name} prefix = {block.expression.prefix()}\n")
                file.write(f"{block.name} fidelity={block.fidelity:.6f}{theta}\n")
