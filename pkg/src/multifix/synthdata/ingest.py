# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Ingestion of external image + tabular datasets.

The tabular file is a UTF-8 CSV with a header row. The schema names the id
column (matching image file stems), the label column and the numeric and
categorical feature columns, e.g.::

    {"id": "id", "label": "diagnosis",
     "numeric": ["age"], "categorical": ["site"]}
"""
import csv
import logging
from pathlib import Path

import numpy as np
from matplotlib import image as mpimg

from multifix.errors import DataError
from multifix.synthdata.dataset import MultimodalDataset
from multifix.synthdata.shapes import resample_pixels

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm")


def read_image(path):
    """Read a PNG or PPM file as float32 RGB in [0, 1]."""
    try:
        pixels = mpimg.imread(path)
    except (OSError, ValueError, SyntaxError) as e:
        raise DataError(f"cannot read image {path}, inner error: {e}") from e
    pixels = np.asarray(pixels)
    if pixels.dtype == np.uint8:
        pixels = pixels.astype(np.float32) / 255.0
    if pixels.ndim == 2:
        pixels = np.stack([pixels] * 3, axis=-1)
    return pixels[..., :3].astype(np.float32)


def center_crop(pixels):
    """Largest centred square of an (H, W, C) array."""
    height, width = pixels.shape[:2]
    side = min(height, width)
    top, left = (height - side) // 2, (width - side) // 2
    return pixels[top:top + side, left:left + side]


def _find_image(image_dir, sample_id):
    for suffix in IMAGE_SUFFIXES:
        candidate = image_dir / f"{sample_id}{suffix}"
        if candidate.exists():
            return candidate
    return None


def ingest_external(image_dir, tabular_file, schema, resolution=64):
    """
    Build a dataset from an image directory and a CSV table.

    Categorical columns are one-hot encoded in sorted value order. Images are
    centre-cropped to a square and resampled to ``resolution``.

    Parameters
    ----------
    image_dir: str or Path
    tabular_file: str or Path
    schema: dict
        Keys ``id``, ``label``, ``numeric`` and ``categorical``.
    resolution: int

    Returns
    -------
    MultimodalDataset
        ``problem_id`` is ``"external"``; the provenance lists the feature
        column names and the label values in class order.

    Raises
    ------
    DataError
        If a column is missing, a numeric cell does not parse (the message
        names the row) or images are missing (the message lists the ids).
    """
    image_dir, tabular_file = Path(image_dir), Path(tabular_file)
    id_col, label_col = schema["id"], schema["label"]
    numeric = list(schema.get("numeric", []))
    categorical = list(schema.get("categorical", []))
    try:
        with open(tabular_file, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise DataError(f"cannot read {tabular_file}, inner error: {e}") from e
    if not rows:
        raise DataError(f"{tabular_file} has no data rows")
    missing_cols = [c for c in [id_col, label_col] + numeric + categorical if c not in rows[0]]
    if missing_cols:
        raise DataError(f"{tabular_file} lacks columns {missing_cols}")

    values = np.empty((len(rows), len(numeric)))
    for r, row in enumerate(rows):
        for c, name in enumerate(numeric):
            try:
                values[r, c] = float(row[name])
            except ValueError as e:
                raise DataError(f"row {r + 2} of {tabular_file}: column {name} value "
                                f"{row[name]!r} is not numeric") from e

    blocks, columns = [values], list(numeric)
    for name in categorical:
        levels = sorted({row[name] for row in rows})
        blocks.append(np.array([[row[name] == level for level in levels] for row in rows],
                               dtype=np.float64))
        columns += [f"{name}={level}" for level in levels]
    tabular = np.hstack(blocks)

    paths = [_find_image(image_dir, row[id_col]) for row in rows]
    missing = [row[id_col] for row, p in zip(rows, paths) if p is None]
    if missing:
        raise DataError(f"no image in {image_dir} for ids {missing}")
    images = np.stack([resample_pixels(center_crop(read_image(p)), (resolution, resolution))
                       for p in paths])

    raw_labels = [row[label_col] for row in rows]
    classes = sorted(set(raw_labels), key=lambda v: (not v.lstrip("-").isdigit(),
                                                     int(v) if v.lstrip("-").isdigit() else 0, v))
    labels = np.array([classes.index(v) for v in raw_labels])
    logger.info("ingested %d samples, %d tabular columns, %d classes from %s",
                len(rows), tabular.shape[1], len(classes), tabular_file)
    provenance = {"generator": "external", "image_dir": str(image_dir),
                  "tabular_file": str(tabular_file), "schema": schema, "columns": columns,
                  "classes": classes, "ids": [row[id_col] for row in rows],
                  "img_size": [resolution, resolution]}
    return MultimodalDataset(images, tabular, labels, max(len(classes), 2), "external",
                             provenance=provenance)
