# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
The explanation bundle: heatmaps, expressions, truth table and fidelity of
one hybrid model, and its on-disk ``bundle/`` directory.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np
from matplotlib import image as mpimg

from multifix.errors import DataError
from multifix.explain.gradcam import Heatmap, explain_samples
from multifix.explain.truth_table import TruthTable, extract_truth_table
from multifix.gpgomea import parse_prefix
from multifix.pipeline.distill import DistilledBlock
from multifix.pipeline.metrics import balanced_accuracy
from multifix.synthdata.storage import atomic_directory
from multifix.visualization import heatmap_image, overlay_image, save_png

logger = logging.getLogger(__name__)

FIDELITY_HEADER = ["block", "fidelity", "threshold", "train_fitness", "degenerate"]


class ExplanationBundle:
    """
    Everything needed to read a hybrid model.

    Attributes
    ----------
    heatmaps: list of Heatmap
    images: dict
        Sample id to the (H, W, 3) input the heatmaps were computed on.
    tabular: list of DistilledBlock
    fusion: DistilledBlock
    truth_table: TruthTable
    fidelity: dict
        Block name to fidelity on the held-out fold.
    hybrid_bacc: float
    predictions, labels: numpy.ndarray
        Hybrid predictions and true labels behind ``hybrid_bacc``.
    """

    def __init__(self, heatmaps, images, tabular, fusion, truth_table, hybrid_bacc, predictions,
                 labels, fold=0):
        self.heatmaps = list(heatmaps)
        self.images = dict(images)
        self.tabular = list(tabular)
        self.fusion = fusion
        self.truth_table = truth_table
        self.hybrid_bacc = hybrid_bacc
        self.predictions = np.asarray(predictions, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.fold = fold

    def __repr__(self):
        return (f"ExplanationBundle({len(self.heatmaps)} heatmaps, {len(self.tabular)} tabular "
                f"expressions, fusion '{self.fusion.expression}')")

    @property
    def blocks(self):
        return self.tabular + [self.fusion]

    @property
    def fidelity(self):
        return {block.name: block.fidelity for block in self.blocks}

    def replay_fidelity(self):
        """
        Fidelity of every stored expression re-evaluated on the stored fold data,
        plus the hybrid BAcc under ``"hybrid_bacc"``.
        """
        replayed = {block.name: block.replay() for block in self.blocks}
        replayed["hybrid_bacc"] = balanced_accuracy(self.predictions, self.labels)
        return replayed


def build_bundle(model, distilled, dataset, samples=(), layer=0):
    """
    Assemble the bundle of a distilled fold model.

    Parameters
    ----------
    model: PipelineModel
        The hybrid model, replacements set.
    distilled: DistillationResult
    dataset: MultimodalDataset
    samples: sequence of int
        Samples to compute Grad-CAM heatmaps for; empty gives expressions only.
    layer: int
        Convolution block used by Grad-CAM.

    Returns
    -------
    ExplanationBundle

    Raises
    ------
    DataError
        If a block that must be replaced has no distilled expression.
    """
    if distilled.fusion is None or "fusion" not in model.replacements:
        raise DataError("the bundle needs a distilled fusion expression")
    if "tabular" in model.blocks and not distilled.tabular:
        raise DataError("the model has a tabular block but no distilled tabular expression")
    samples = list(samples)
    heatmaps, images = [], {}
    if samples:
        if "image" not in model.blocks:
            raise DataError("heatmaps were requested but the model has no image block")
        heatmaps = explain_samples(model, dataset, samples, layer)
        images = {s: dataset.images[s] for s in samples}
    names = model.feature_names()
    n_i = sum(name.startswith("I") for name in names)
    table = extract_truth_table(distilled.fusion.expression, n_i, len(names) - n_i,
                                model.config.n_classes)
    bundle = ExplanationBundle(heatmaps, images, distilled.tabular, distilled.fusion, table,
                               distilled.hybrid_bacc, distilled.predictions, distilled.labels,
                               distilled.fold)
    logger.info("bundle of fold %d: %d heatmaps, fidelity %s", distilled.fold, len(heatmaps),
                {k: round(v, 3) for k, v in bundle.fidelity.items()})
    return bundle


def _block_record(block):
    return {**block.as_dict(), "n_classes": block.n_classes,
            "test_inputs": np.asarray(block.test_inputs).tolist(),
            "test_targets": np.asarray(block.test_targets).tolist()}


def save_bundle(bundle, out_dir):
    """
    Write the ``bundle/`` directory atomically.

    Layout: ``heatmaps/<sample>_<feature>.png`` and ``..._overlay.png``,
    ``expressions.txt``, ``truth_table.csv``, ``fidelity.csv`` and
    ``bundle.json``.
    """
    with atomic_directory(out_dir) as tmp:
        (tmp / "heatmaps").mkdir()
        for heatmap in bundle.heatmaps:
            save_png(tmp / "heatmaps" / f"{heatmap.name}.png", heatmap_image(heatmap))
            save_png(tmp / "heatmaps" / f"{heatmap.name}_overlay.png",
                     overlay_image(bundle.images[heatmap.sample_id], heatmap))
        with open(tmp / "expressions.txt", "w", encoding="utf-8") as file:
            for block in bundle.blocks:
                file.write(f"{block.name} = {block.expression.infix()}\n")
                file.write(f"{block.name} prefix = {block.expression.prefix()}\n")
        bundle.truth_table.write_csv(tmp / "truth_table.csv")
        with open(tmp / "fidelity.csv", "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile, delimiter=",")
            writer.writerow(FIDELITY_HEADER)
            for block in bundle.blocks:
                writer.writerow([block.name, f"{block.fidelity:.6f}",
                                 "" if block.threshold is None else block.threshold,
                                 f"{block.train_fitness:.6f}", int(block.degenerate)])
        manifest = {
            "fold": bundle.fold,
            "hybrid_bacc": bundle.hybrid_bacc,
            "predictions": bundle.predictions.tolist(),
            "labels": bundle.labels.tolist(),
            "truth_table": {"names": bundle.truth_table.names,
                            "labels": bundle.truth_table.labels.tolist()},
            "tabular": [_block_record(b) for b in bundle.tabular],
            "fusion": _block_record(bundle.fusion),
            "heatmaps": [{"file": f"heatmaps/{h.name}.png", "sample": h.sample_id,
                          "feature": h.feature_index, "layer": h.layer}
                         for h in bundle.heatmaps],
        }
        with open(tmp / "bundle.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    logger.info("saved bundle to %s", out_dir)


def _read_block(record, variable_names):
    expression = parse_prefix(record["prefix"], variable_names,
                              variable_names if record["name"] == "fusion" else ())
    return DistilledBlock(record["name"], expression, record["threshold"],
                          record["train_fitness"], record["fidelity"], record["degenerate"],
                          (), np.asarray(record["test_inputs"], dtype=np.float64),
                          np.asarray(record["test_targets"], dtype=np.int64),
                          record["n_classes"])


def load_bundle(bundle_dir):
    """
    Read a directory written by :py:func:`save_bundle`.

    Heatmaps come back from the grayscale PNGs; the input images are not kept.

    Raises
    ------
    DataError
        If ``bundle.json`` is missing.
    """
    bundle_dir = Path(bundle_dir)
    try:
        with open(bundle_dir / "bundle.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as e:
        raise DataError(f"{bundle_dir} is not a bundle directory, inner error: {e}") from e
    table = TruthTable(manifest["truth_table"]["names"], manifest["truth_table"]["labels"])
    tabular = []
    for record in manifest["tabular"]:
        n_inputs = np.asarray(record["test_inputs"]).shape[1]
        tabular.append(_read_block(record, [f"x{j}" for j in range(n_inputs)]))
    fusion = _read_block(manifest["fusion"], table.names)
    heatmaps = []
    for item in manifest["heatmaps"]:
        values = mpimg.imread(bundle_dir / item["file"])[:, :, 0]
        heatmaps.append(Heatmap(values, item["sample"], item["feature"], item["layer"]))
    return ExplanationBundle(heatmaps, {}, tabular, fusion, table, manifest["hybrid_bacc"],
                             manifest["predictions"], manifest["labels"], manifest["fold"])
