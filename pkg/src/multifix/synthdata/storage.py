# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
On-disk dataset container.

Layout::

    DIR/manifest.json          problem, seed, counts, feature names, provenance
    DIR/images/00000.png       one RGB PNG per sample
    DIR/tabular.csv            id,f0,f1,...
    DIR/labels.csv             id,label
    DIR/truth_features.csv     id,image.<name>...,tabular.<name>...   (generated data only)
"""
import contextlib
import csv
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np
from matplotlib import image as mpimg

from multifix.errors import DataError
from multifix.synthdata.dataset import MultimodalDataset
from multifix.synthdata.ingest import read_image

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def atomic_directory(out_dir):
    """
    Yield a temporary sibling of ``out_dir`` that replaces it on success.

    The temporary directory is removed if the body raises.
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(tmp, out_dir)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=",", lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def save_dataset(dataset, out_dir):
    """Write ``dataset`` to ``out_dir`` atomically, replacing any previous content."""
    with atomic_directory(out_dir) as tmp:
        (tmp / "images").mkdir()
        for i, pixels in enumerate(dataset.images):
            mpimg.imsave(tmp / "images" / f"{i:05d}.png", np.clip(pixels, 0.0, 1.0),
                         format="png", metadata={"Software": None})
        _write_csv(tmp / "tabular.csv", ["id"] + [f"f{j}" for j in range(dataset.n_features)],
                   [[i] + [repr(float(v)) for v in row] for i, row in enumerate(dataset.tabular)])
        _write_csv(tmp / "labels.csv", ["id", "label"],
                   [[i, int(y)] for i, y in enumerate(dataset.labels)])
        if dataset.image_truth or dataset.tabular_truth:
            names = [f"image.{k}" for k in dataset.image_truth] + \
                    [f"tabular.{k}" for k in dataset.tabular_truth]
            columns = list(dataset.image_truth.values()) + list(dataset.tabular_truth.values())
            _write_csv(tmp / "truth_features.csv", ["id"] + names,
                       [[i] + [int(c[i]) for c in columns] for i in range(len(dataset))])
        manifest = {
            "problem_id": dataset.problem_id,
            "n_classes": dataset.n_classes,
            "n_samples": len(dataset),
            "seed": dataset.provenance.get("seed"),
            "image_shape": list(dataset.image_shape),
            "n_features": dataset.n_features,
            "image_features": list(dataset.image_truth),
            "tabular_features": list(dataset.tabular_truth),
            "class_counts": np.bincount(dataset.labels, minlength=dataset.n_classes).tolist(),
            "provenance": dataset.provenance,
            "boxes": [{k: list(v) for k, v in b.items()} for b in dataset.boxes],
        }
        with open(tmp / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    logger.info("saved %s dataset with %d samples to %s", dataset.problem_id, len(dataset),
                out_dir)


def load_dataset(data_dir):
    """
    Read a dataset written by :py:func:`save_dataset`.

    Raises
    ------
    DataError
        If the directory or one of its files is missing or inconsistent.
    """
    data_dir = Path(data_dir)
    if not (data_dir / "manifest.json").is_file():
        raise DataError(f"no dataset at {data_dir}: manifest.json not found")
    try:
        with open(data_dir / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
        n = manifest["n_samples"]
        images = np.stack([read_image(data_dir / "images" / f"{i:05d}.png") for i in range(n)])
        _, rows = _read_csv(data_dir / "tabular.csv")
        tabular = np.array([[float(v) for v in row[1:]] for row in rows])
        _, rows = _read_csv(data_dir / "labels.csv")
        labels = np.array([int(row[1]) for row in rows])
        image_truth, tabular_truth = {}, {}
        if (data_dir / "truth_features.csv").exists():
            header, rows = _read_csv(data_dir / "truth_features.csv")
            table = np.array([[int(v) for v in row[1:]] for row in rows], dtype=np.int64)
            for j, name in enumerate(header[1:]):
                modality, feature = name.split(".", 1)
                target = image_truth if modality == "image" else tabular_truth
                target[feature] = table[:, j]
    except (OSError, KeyError, ValueError) as e:
        raise DataError(f"corrupt dataset at {data_dir}, inner error: {e}") from e
    boxes = [{k: tuple(v) for k, v in b.items()} for b in manifest.get("boxes", [{}] * n)]
    return MultimodalDataset(images, tabular, labels, manifest["n_classes"],
                             manifest["problem_id"], image_truth, tabular_truth, boxes,
                             manifest.get("provenance"))
