# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Gradient-weighted class activation maps for the image features ``I_j``.
"""
import logging

import numpy as np
from scipy import ndimage

from multifix.errors import ConfigurationError, DataError
from multifix.nncore import Tensor
from multifix.pipeline.blocks import image_tensor

logger = logging.getLogger(__name__)


class Heatmap:
    """
    Relevance of every input pixel for one image feature.

    Attributes
    ----------
    values: numpy.ndarray
        (H, W) in [0, 1]; the maximum is 1 unless the map is all zero.
    sample_id: int
    feature_index: int
        ``j`` of the explained feature ``I_{j+1}``.
    layer: int
        Convolution block the activations were taken from.
    """

    def __init__(self, values, sample_id, feature_index, layer=0):
        self.values = np.asarray(values, dtype=np.float64)
        self.sample_id = sample_id
        self.feature_index = feature_index
        self.layer = layer

    def __repr__(self):
        return (f"Heatmap(sample={self.sample_id}, I{self.feature_index + 1}, "
                f"shape={self.values.shape})")

    @property
    def shape(self):
        return self.values.shape

    @property
    def name(self):
        return f"{self.sample_id}_I{self.feature_index + 1}"

    def mass_inside(self, box):
        """
        Fraction of the total heat inside ``box`` = (row0, col0, row1, col1).

        Pixels count when their centre lies in the box; an all-zero map gives 0.
        """
        total = self.values.sum()
        if total == 0:
            return 0.0
        rows = np.arange(self.values.shape[0]) + 0.5
        cols = np.arange(self.values.shape[1]) + 0.5
        inside = np.outer((rows >= box[0]) & (rows <= box[2]),
                          (cols >= box[1]) & (cols <= box[3]))
        return float(self.values[inside].sum() / total)


def _normalize(cam):
    cam = np.maximum(cam, 0.0)
    peak = cam.max()
    return cam / peak if peak > 0 else np.zeros_like(cam)


def grad_cam(model, image, feature_index=0, layer=0, sample_id=0):
    """
    Grad-CAM map of ``I_{feature_index+1}`` for one image.

    The target is the pre-sigmoid logit of the feature. Channel weights are
    the spatial mean of its gradient with respect to the activations of
    convolution block ``layer``; the weighted sum of the activations is
    rectified, bilinearly resized to the input and divided by its maximum.

    Parameters
    ----------
    model: PipelineModel
    image: numpy.ndarray
        (H, W, 3) pixels.
    feature_index: int
    layer: int
        Index into the convolution blocks, 0 is the first.
    sample_id: int

    Returns
    -------
    Heatmap

    Raises
    ------
    ConfigurationError
        If the model has no image block or ``layer`` / ``feature_index`` is out
        of range.
    """
    if "image" not in model.blocks:
        raise ConfigurationError("[block:image] is invalid, inner error: the model has no "
                                 "trained image block")
    if not 0 <= layer < len(model.conv_outputs):
        raise ConfigurationError(f"[layer:{layer}] is invalid, inner error: the image block "
                                 f"has {len(model.conv_outputs)} convolution blocks")
    if not 0 <= feature_index < model.config.n_i:
        raise ConfigurationError(f"[feature:{feature_index}] is invalid, inner error: the "
                                 f"model has {model.config.n_i} image features")
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[:2] != tuple(model.image_shape):
        raise DataError(f"image of shape {image.shape} does not fit the model input "
                        f"{model.image_shape}")

    block = model.blocks["image"]
    conv_index = model.conv_outputs[layer]
    logit_index = len(block) - 2
    capture = {conv_index: None, logit_index: None}
    x = Tensor(image_tensor(image[None]).data, requires_grad=True)
    block(x, "eval", capture)
    logits = capture[logit_index]
    seed = np.zeros(logits.shape, dtype=logits.dtype)
    seed[0, feature_index] = 1.0
    logits.backward(seed)
    activations = capture[conv_index]
    grad = activations.grad
    block.zero_grad()
    if grad is None:
        cam = np.zeros(activations.shape[2:])
    else:
        weights = grad[0].mean(axis=(1, 2))
        cam = np.tensordot(weights, activations.data[0], axes=1)
    cam = np.maximum(cam, 0.0)
    height, width = model.image_shape
    zoom = (height / cam.shape[0], width / cam.shape[1])
    cam = ndimage.zoom(cam.astype(np.float64), zoom, order=1, mode="nearest", grid_mode=True)
    return Heatmap(_normalize(cam[:height, :width]), sample_id, feature_index, layer)


def explain_samples(model, dataset, samples, layer=0):
    """
    Heatmaps of every image feature for every sample index.

    Returns
    -------
    list of Heatmap
        Sample-major, then feature order.
    """
    heatmaps = []
    for sample in samples:
        if not 0 <= sample < len(dataset):
            raise DataError(f"sample {sample} outside [0, {len(dataset)})")
        for j in range(model.config.n_i):
            heatmaps.append(grad_cam(model, dataset.images[sample], j, layer, sample))
    logger.debug("computed %d heatmaps", len(heatmaps))
    return heatmaps


def pick_samples(dataset, indices, per_class):
    """First ``per_class`` samples of every class among ``indices``, in index order."""
    indices = np.asarray(indices, dtype=np.int64)
    picked = []
    for label in range(dataset.n_classes):
        picked += indices[dataset.labels[indices] == label][:per_class].tolist()
    return sorted(picked)
