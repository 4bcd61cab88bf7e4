# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Sample and dataset containers shared by the generators, the ingestion path
and the pipeline.
"""
import numpy as np

from multifix.errors import DataError


class ImageSample:
    """
    One RGB image.

    Attributes
    ----------
    pixels: numpy.ndarray
        Shape (H, W, 3), float32 values in [0, 1].
    truth_features: dict
        Shape name to 0/1, known only for generated images.
    boxes: dict
        Shape name to ``(row0, col0, row1, col1)`` bounding box in pixels.
    """

    def __init__(self, pixels, truth_features=None, boxes=None):
        pixels = np.asarray(pixels, dtype=np.float32)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DataError(f"image pixels must have shape (H, W, 3), got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise DataError(f"image must be at least 1x1, got {pixels.shape}")
        self.pixels = pixels
        self.truth_features = dict(truth_features or {})
        self.boxes = dict(boxes or {})

    def __repr__(self):
        return f"ImageSample({self.height}x{self.width}, truth={self.truth_features})"

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def copy(self, pixels=None, boxes=None):
        return ImageSample(self.pixels.copy() if pixels is None else pixels,
                           self.truth_features,
                           self.boxes if boxes is None else boxes)


class TabularSample:
    """
    One row of continuous features with optional ground-truth features.
    """

    def __init__(self, features, truth_features=None):
        self.features = np.asarray(features, dtype=np.float64).reshape(-1)
        self.truth_features = dict(truth_features or {})

    def __repr__(self):
        return f"TabularSample({self.features.size} features, truth={self.truth_features})"

    def copy(self, features=None):
        return TabularSample(self.features.copy() if features is None else features,
                             self.truth_features)


class MultimodalDataset:
    """
    Paired image and tabular samples with one label each.

    Stored column-wise so blocks can be trained on whole arrays.

    Parameters
    ----------
    images: numpy.ndarray
        Shape (N, H, W, 3).
    tabular: numpy.ndarray
        Shape (N, F).
    labels: numpy.ndarray
        Integer class per sample, in ``[0, n_classes)``.
    n_classes: int
    problem_id: str
    image_truth, tabular_truth: dict, optional
        Feature name to (N,) array of 0/1 ground truth.
    boxes: list of dict, optional
        Per-sample shape bounding boxes.
    provenance: dict, optional
        Generator settings and seed.
    """

    def __init__(self, images, tabular, labels, n_classes, problem_id,
                 image_truth=None, tabular_truth=None, boxes=None, provenance=None):
        self.images = np.asarray(images, dtype=np.float32)
        self.tabular = np.asarray(tabular, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        self.n_classes = int(n_classes)
        self.problem_id = problem_id
        self.image_truth = {k: np.asarray(v, dtype=np.int64)
                            for k, v in (image_truth or {}).items()}
        self.tabular_truth = {k: np.asarray(v, dtype=np.int64)
                              for k, v in (tabular_truth or {}).items()}
        self.boxes = list(boxes) if boxes is not None else [{} for _ in range(len(self.labels))]
        self.provenance = dict(provenance or {})

        n = len(self.labels)
        if len(self.images) != n or len(self.tabular) != n or len(self.boxes) != n:
            raise DataError(f"paired lists differ in length: images {len(self.images)}, "
                            f"tabular {len(self.tabular)}, labels {n}")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        for name, values in {**self.image_truth, **self.tabular_truth}.items():
            if len(values) != n:
                raise DataError(f"truth feature {name} has {len(values)} values for {n} samples")

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return (f"MultimodalDataset({self.problem_id}, n={len(self)}, "
                f"image={self.image_shape}, tabular={self.n_features}, "
                f"classes={self.n_classes})")

    def __getitem__(self, i):
        image = ImageSample(self.images[i], {k: int(v[i]) for k, v in self.image_truth.items()},
                            self.boxes[i])
        row = TabularSample(self.tabular[i], {k: int(v[i]) for k, v in self.tabular_truth.items()})
        return image, row, int(self.labels[i])

    @property
    def samples(self):
        return [self[i] for i in range(len(self))]

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:3])

    @property
    def n_features(self):
        return self.tabular.shape[1]

    @property
    def has_truth(self):
        return bool(self.image_truth) and bool(self.tabular_truth)

    def truth_matrix(self, modality):
        """
        Ground-truth features of one modality as an (N, k) 0/1 matrix.

        Raises
        ------
        DataError
            If the dataset carries no ground truth for ``modality``.
        """
        truth = self.image_truth if modality == "image" else self.tabular_truth
        if not truth:
            raise DataError(f"dataset {self.problem_id} has no {modality} truth features")
        return np.stack([truth[k] for k in truth], axis=1)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return MultimodalDataset(self.images[indices], self.tabular[indices],
                                 self.labels[indices], self.n_classes, self.problem_id,
                                 {k: v[indices] for k, v in self.image_truth.items()},
                                 {k: v[indices] for k, v in self.tabular_truth.items()},
                                 [self.boxes[i] for i in indices], self.provenance)
