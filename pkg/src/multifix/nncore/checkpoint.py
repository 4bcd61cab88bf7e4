# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
MFIX1 checkpoint container.

Layout::

    b"MFIX1"
    uint32 little-endian length of the manifest
    UTF-8 JSON manifest
    little-endian float32 blobs, in manifest order

The manifest lists every block as a list of layer specs, then one entry per
blob with its name and shape. Parameters come first, BatchNorm running
statistics after them.
"""
import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from multifix.errors import DataError
from multifix.nncore.layers import LayerSequence, build_layer

logger = logging.getLogger(__name__)

MAGIC = b"MFIX1"


def _blobs(blocks):
    params, buffers = [], []
    for block_name, seq in blocks.items():
        for i, layer in enumerate(seq.layers):
            for key, tensor in layer.parameters().items():
                params.append((f"{block_name}/{i}.{layer.kind}.{key}", tensor.data))
            for key, array in layer.buffers().items():
                buffers.append((f"{block_name}/{i}.{layer.kind}.{key}", array))
    return params + buffers


def save_checkpoint(path, blocks, meta=None):
    """
    Write ``blocks`` (name to :py:class:`LayerSequence`) to ``path``.

    Parameters
    ----------
    path: str or Path
    blocks: dict
    meta: dict, optional
        JSON-serialisable extras stored in the manifest.
    """
    path = Path(path)
    blobs = _blobs(blocks)
    manifest = {
        "blocks": {name: seq.spec() for name, seq in blocks.items()},
        "tensors": [{"name": name, "shape": list(array.shape)} for name, array in blobs],
        "meta": meta or {},
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, array in blobs:
            fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
    os.replace(tmp, path)
    logger.debug("checkpoint with %d tensors written to %s", len(blobs), path)


def load_checkpoint(path):
    """
    Read a checkpoint written by :py:func:`save_checkpoint`.

    Returns
    -------
    blocks: dict
        Block name to rebuilt :py:class:`LayerSequence`.
    meta: dict

    Raises
    ------
    DataError
        If the file is missing, has the wrong magic or is truncated.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}, inner error: {e}") from e
    if raw[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not an MFIX1 checkpoint")
    offset = len(MAGIC)
    (length,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        manifest = json.loads(raw[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"corrupt manifest in {path}, inner error: {e}") from e
    offset += length

    blocks = {name: LayerSequence([build_layer(spec) for spec in specs], name=name)
              for name, specs in manifest["blocks"].items()}
    targets = dict(_blobs(blocks))
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"]))
        if offset + 4 * count > len(raw):
            raise DataError(f"{path} is truncated at tensor {entry['name']}")
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        targets[entry["name"]][...] = values.reshape(entry["shape"])
        offset += 4 * count
    return blocks, manifest["meta"]
