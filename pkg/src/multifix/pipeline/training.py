# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Training loops: end-to-end fusion, single modality, supervised features,
autoencoder pretraining with encoder freezing, and cross-validation.

Every job draws its randomness from
``numpy.random.SeedSequence([seed, cell, fold])``, so results do not depend on
the order or the process in which jobs run.
"""
import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from multifix.errors import DataError, GradientError, NumericAbort
from multifix.nncore import (AdamState, adam_step, backward, bce_with_logits, cross_entropy,
                             mse_loss, no_grad)
from multifix.parameters import PipelineConfig
from multifix.pipeline.blocks import assemble, autoencoder, image_tensor
from multifix.pipeline.metrics import balanced_accuracy, EvalReport

logger = logging.getLogger(__name__)

HISTORY_HEADER = ["epoch", "train_loss", "val_loss", "val_bacc"]
BYPASS = {"bypass_image": ("image",), "bypass_tabular": ("tabular",),
          "bypass_both": ("image", "tabular")}


class TrainingHistory:
    """Per-epoch losses; written as CSV with one row per epoch."""

    def __init__(self):
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def append(self, epoch, train_loss, val_loss, val_bacc=float("nan")):
        self.rows.append([epoch, train_loss, val_loss, val_bacc])

    @property
    def train_loss(self):
        return [row[1] for row in self.rows]

    @property
    def val_loss(self):
        return [row[2] for row in self.rows]

    def final(self):
        return dict(zip(HISTORY_HEADER, self.rows[-1])) if self.rows else {}

    def write_csv(self, path):
        new_file = not Path(path).exists()
        with open(path, "a", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile, delimiter=",")
            if new_file:
                writer.writerow(HISTORY_HEADER)
            writer.writerows(self.rows)


def job_rng(seed, cell=0, fold=0):
    """Generator of the job identified by (seed, cell, fold)."""
    return np.random.default_rng(np.random.SeedSequence([seed, cell, fold]))


def map_jobs(function, jobs, n_jobs=1):
    """
    Apply ``function`` to every argument tuple in ``jobs``.

    Results come back in job order for any ``n_jobs``.
    """
    if n_jobs <= 1 or len(jobs) <= 1:
        return [function(*args) for args in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(function, *zip(*jobs)))


def _unpack(fold):
    train_idx, test_idx = fold
    return np.asarray(train_idx, dtype=np.int64), np.asarray(test_idx, dtype=np.int64)


def _batched_loss(objective, model, dataset, idx, batch_size=64):
    total = 0.0
    with no_grad():
        for start in range(0, idx.size, batch_size):
            batch = idx[start:start + batch_size]
            total += objective(model, dataset, batch, "eval").item() * batch.size
    return total / max(idx.size, 1)


def _fit(model, dataset, train_idx, val_idx, config, rng, objective, epoch_hook=None,
         score=None, epochs=None):
    """
    Adam loop shared by every trainer.

    Parameters
    ----------
    objective: callable
        ``objective(model, dataset, batch, mode)`` returning a scalar loss Tensor.
    epoch_hook: callable, optional
        Called with the epoch index before the epoch starts.
    score: callable, optional
        ``score(model, dataset, idx)`` giving the validation BAcc per epoch.

    Raises
    ------
    NumericAbort
        If a loss or gradient becomes non-finite.
    """
    state = AdamState(config.lr, config.wd)
    history = TrainingHistory()
    epochs = epochs or config.epochs
    for epoch in range(epochs):
        if epoch_hook is not None:
            epoch_hook(epoch)
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss = objective(model, dataset, batch, "train")
            value = loss.item()
            if not np.isfinite(value):
                raise NumericAbort("training loss is not finite", epoch, config.lr)
            if loss.requires_grad:
                parameters = model.named_parameters()
                backward(loss, parameters.values())
                try:
                    adam_step(state, parameters)
                except GradientError as e:
                    raise NumericAbort(f"{e}", epoch, config.lr) from e
            total += value * batch.size
        val_loss = _batched_loss(objective, model, dataset, val_idx) if val_idx.size else \
            float("nan")
        val_bacc = score(model, dataset, val_idx) if score and val_idx.size else float("nan")
        history.append(epoch, total / order.size, val_loss, val_bacc)
        logger.debug("epoch %d: train loss %.4f, val loss %.4f, val bacc %.4f", epoch,
                     total / order.size, val_loss, val_bacc)
    return history


def _label_objective(model, dataset, batch, mode):
    return cross_entropy(model.logits(dataset, batch, mode), dataset.labels[batch])


def _label_score(model, dataset, idx):
    return balanced_accuracy(model.predict(dataset, idx), dataset.labels[idx])


def _setup(model, dataset, train_idx):
    model.fit_standardizer(dataset.tabular[train_idx])
    return model


def train_end_to_end(model, dataset, fold, config=None, rng=None):
    """
    Train every block of ``model`` on the final label only.

    Parameters
    ----------
    model: PipelineModel
    dataset: MultimodalDataset
    fold: tuple
        (train indices, test indices); the test fold is the validation set.
    config: PipelineConfig, optional
        Defaults to the model's config.
    rng: numpy.random.Generator, optional

    Returns
    -------
    model: PipelineModel
    history: TrainingHistory
    """
    config = config or model.config
    rng = rng if rng is not None else job_rng(config.seed)
    train_idx, val_idx = _unpack(fold)
    _setup(model, dataset, train_idx)
    history = _fit(model, dataset, train_idx, val_idx, config, rng, _label_objective,
                   score=_label_score)
    return model, history


def train_single_modality(modality, dataset, fold, config, rng=None):
    """
    Baseline: one feature-inducing block plus a classification head.

    Returns
    -------
    model: PipelineModel
    bacc: float
        Balanced accuracy on the test fold.
    """
    rng = rng if rng is not None else job_rng(config.seed)
    model = assemble(config, dataset.image_shape, dataset.n_features, rng, modalities=(modality,))
    model, _ = train_end_to_end(model, dataset, fold, config, rng)
    test_idx = _unpack(fold)[1]
    return model, _label_score(model, dataset, test_idx)


def _feature_score(truth):
    def score(model, dataset, idx):
        values = model.bottleneck(dataset, idx)
        return float(np.mean([balanced_accuracy(values[:, j] > 0.5, truth[idx, j])
                              for j in range(truth.shape[1])]))
    return score


def train_supervised_feature(modality, dataset, fold, config, rng=None):
    """
    Train one block directly on the generator's truth features.

    The block's bottleneck width becomes the number of truth features and
    the loss is binary cross-entropy on the pre-sigmoid outputs.

    Returns
    -------
    model: PipelineModel
    bacc: float
        Mean over truth features of the test-fold balanced accuracy of
        ``output > 0.5``.

    Raises
    ------
    DataError
        If the dataset has no truth features for ``modality``.
    """
    truth = dataset.truth_matrix(modality)
    width = {"n_i": truth.shape[1]} if modality == "image" else {"n_t": truth.shape[1]}
    config = config.replace(**width)
    rng = rng if rng is not None else job_rng(config.seed)
    model = assemble(config, dataset.image_shape, dataset.n_features, rng, modalities=(modality,))
    block = model.blocks[modality]
    logit_index = len(block) - 2

    def objective(model, dataset, batch, mode):
        capture = {logit_index: None}
        inputs = image_tensor(dataset.images[batch]) if modality == "image" else \
            model.tabular_tensor(dataset.tabular[batch])
        block(inputs, mode, capture)
        return bce_with_logits(capture[logit_index], truth[batch])

    train_idx, test_idx = _unpack(fold)
    _setup(model, dataset, train_idx)
    _fit(model, dataset, train_idx, test_idx, config, rng, objective)
    return model, _feature_score(truth)(model, dataset, test_idx)


class AutoEncoder:
    """Encoder and decoder trained together on reconstruction."""

    def __init__(self, encoder, decoder):
        self.encoder = encoder
        self.decoder = decoder

    def __call__(self, x, mode="eval"):
        return self.decoder(self.encoder(x, mode), mode)

    def named_parameters(self):
        return {**self.encoder.named_parameters(), **self.decoder.named_parameters()}

    def encode(self, images):
        with no_grad():
            return self.encoder(image_tensor(images)).data

    def reconstruct(self, images):
        """(N, H, W, 3) reconstructions of ``images``."""
        with no_grad():
            return np.transpose(self(image_tensor(images)).data, (0, 2, 3, 1))


def pretrain_autoencoder(images, latent_dim, config, rng=None):
    """
    Train a convolutional autoencoder on ``images`` with MSE reconstruction.

    Parameters
    ----------
    images: numpy.ndarray
        (N, H, W, 3) training images.
    latent_dim: int
        Must be at least ``config.n_i``.
    config: PipelineConfig

    Returns
    -------
    autoencoder: AutoEncoder
        Its ``encoder`` opens the image block of later models.
    history: TrainingHistory
    """
    if latent_dim < config.n_i:
        raise ValueError(f"[ae_latent:{latent_dim}] is invalid, inner error: must be >= "
                         f"n_i={config.n_i}")
    if len(images) == 0:
        raise DataError("autoencoder pretraining needs at least one image")
    config = config.replace(ae_latent=latent_dim)
    rng = rng if rng is not None else job_rng(config.seed)
    pair = AutoEncoder(*autoencoder(config, images.shape[1:3], rng))

    def objective(model, data, batch, mode):
        x = image_tensor(data[batch])
        return mse_loss(model(x, mode), x)

    idx = np.arange(len(images))
    history = _fit(pair, images, idx, np.zeros(0, np.int64), config, rng, objective,
                   epochs=config.ae_epochs)
    logger.info("autoencoder: final reconstruction loss %.5f", history.train_loss[-1])
    return pair, history


def train_with_frozen_encoder(model, dataset, fold, config=None, rng=None):
    """
    End-to-end training of a model whose image block opens with a pretrained encoder.

    ``config.freeze`` selects the schedule: ``"frozen"`` keeps the encoder
    fixed throughout, ``"defreeze"`` releases it at ``defreeze_epoch`` and
    ``"none"`` trains it from the start.

    Returns
    -------
    model: PipelineModel
    history: TrainingHistory
    """
    config = config or model.config
    rng = rng if rng is not None else job_rng(config.seed)
    if not model.n_encoder:
        raise ValueError("model has no pretrained encoder")

    def schedule(epoch):
        if config.freeze == "frozen" or (config.freeze == "defreeze"
                                         and epoch < config.defreeze_epoch):
            model.freeze_encoder()
        else:
            if epoch == config.defreeze_epoch and config.freeze == "defreeze":
                logger.debug("encoder released at epoch %d", epoch)
            model.unfreeze_encoder()

    train_idx, val_idx = _unpack(fold)
    _setup(model, dataset, train_idx)
    history = _fit(model, dataset, train_idx, val_idx, config, rng, _label_objective,
                   epoch_hook=schedule, score=_label_score)
    return model, history


class FoldResult:
    """Trained model and scores of one fold."""

    def __init__(self, fold, model, bacc, val_loss, history):
        self.fold = fold
        self.model = model
        self.bacc = bacc
        self.val_loss = val_loss
        self.history = history


def run_fold(kind, dataset, fold, fold_id, config, cell=0):
    """
    Train and score one fold.

    Parameters
    ----------
    kind: str
        ``"fusion"``, ``"image"``, ``"tabular"`` (single modality),
        ``"feature_image"``, ``"feature_tabular"`` (supervised features),
        ``"bypass_image"``, ``"bypass_tabular"``, ``"bypass_both"`` (ground truth in place of a
        block) or ``"frozen_encoder_image"``.
    """
    rng = job_rng(config.seed, cell, fold_id)
    train_idx, test_idx = _unpack(fold)
    history = None
    match kind:
        case "image" | "tabular":
            model, bacc = train_single_modality(kind, dataset, fold, config, rng)
        case "feature_image" | "feature_tabular":
            model, bacc = train_supervised_feature(kind.split("_")[1], dataset, fold, config, rng)
        case ("fusion" | "frozen_encoder_image" | "bypass_image" | "bypass_tabular"
              | "bypass_both"):
            bypass = BYPASS.get(kind, ())
            modalities = ("image",) if kind == "frozen_encoder_image" else ("image", "tabular")
            if kind == "frozen_encoder_image":
                config = config.replace(ae_pretrain=True, freeze="frozen")
            encoder = None
            if config.ae_pretrain and "image" not in bypass:
                pair, _ = pretrain_autoencoder(dataset.images[train_idx], config.ae_latent,
                                               config, rng)
                encoder = pair.encoder
            model = assemble(config, dataset.image_shape, dataset.n_features, rng, modalities,
                             bypass, encoder)
            if encoder is not None:
                model, history = train_with_frozen_encoder(model, dataset, fold, config, rng)
            else:
                model, history = train_end_to_end(model, dataset, fold, config, rng)
            bacc = _label_score(model, dataset, test_idx)
        case other:
            raise ValueError(f"unknown training kind {other}")
    val_loss = history.final()["val_loss"] if history else float("nan")
    logger.debug("%s fold %d: bacc %.4f", kind, fold_id, bacc)
    return FoldResult(fold_id, model, bacc, val_loss, history)


def cross_validate(kind, dataset, plan, config, cell=None, cell_id=0, n_jobs=1):
    """
    Run :py:func:`run_fold` on every fold of ``plan``.

    Returns
    -------
    report: EvalReport
    results: list of FoldResult
    """
    config = config if isinstance(config, PipelineConfig) else PipelineConfig(config)
    jobs = [(kind, dataset, (plan.train(i), plan.test(i)), i, config, cell_id)
            for i in range(plan.k)]
    results = map_jobs(run_fold, jobs, n_jobs)
    report = EvalReport(dataset.problem_id, {"kind": kind, **(cell or {})},
                        [r.bacc for r in results], [r.val_loss for r in results],
                        dataset.n_classes)
    logger.info("%s %s: bacc %.3f ± %.3f", dataset.problem_id, report.cell, report.mean,
                report.std)
    return report, results


def fit_final(dataset, plan, config, out_dir=None, kind="fusion", n_jobs=1):
    """
    Re-train with the selected configuration and keep one model per fold.

    With ``out_dir`` the models are written as ``fold<i>.mfix`` checkpoints
    and the histories appended to ``history.csv``.

    Returns
    -------
    report: EvalReport
    results: list of FoldResult
        Trained model and history of every fold.
    """
    report, results = cross_validate(kind, dataset, plan, config, {"stage": "final"},
                                     n_jobs=n_jobs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            r.model.save(out_dir / f"fold{r.fold}.mfix", {"fold": r.fold, "bacc": r.bacc})
            if r.history is not None:
                r.history.write_csv(out_dir / "history.csv")
    return report, results
