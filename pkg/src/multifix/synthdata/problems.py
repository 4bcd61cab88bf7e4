# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
The four synthetic multimodal problems.

Every generator derives one independent random stream per sample from
``numpy.random.SeedSequence(rng_seed)``, so a (settings, seed) pair always
produces the same dataset.
"""
import logging

import numpy as np

from multifix.errors import ConfigurationError
from multifix.synthdata.dataset import MultimodalDataset
from multifix.synthdata.shapes import (render_shape_image, add_pixel_noise, add_gaussian_noise,
                                       resample_image)
from multifix.synthdata.tabular import make_tabular_classification, threshold_features

logger = logging.getLogger(__name__)

PROBLEMS = ("multiclass", "multifeature", "xor", "xor3")
IMAGE_FEATURES = {
    "multiclass": ("square",),
    "multifeature": ("circle", "rectangle", "triangle"),
    "xor": ("circle",),
    "xor3": ("circle", "triangle"),
}
TABULAR_FEATURES = {
    "multiclass": ("A",),
    "multifeature": ("A", "B", "C"),
    "xor": ("A",),
    "xor3": ("A",),
}
RESOLUTIONS = (100, 50, 25, 20, 15, 10, 5)
TABULAR_SIGMAS = (0.0, 2.5, 5.0, 7.5, 10.0, 15.0, 20.0)


def _square(size):
    return (size, size) if np.isscalar(size) else tuple(size)


def _half_split(groups, rng, n):
    """Mark exactly half of every index group with 1."""
    flags = np.zeros(n, dtype=np.int64)
    for idx in groups:
        flags[rng.choice(idx, len(idx) // 2, replace=False)] = 1
    return flags


def _balanced_uniform_rows(n, n_features, rng):
    """Uniform [0, 1) rows, exactly half of them with feature A set."""
    quota = {0: n - n // 2, 1: n // 2}
    kept = {0: [], 1: []}
    while len(kept[0]) < quota[0] or len(kept[1]) < quota[1]:
        rows = rng.uniform(0.0, 1.0, (2 * n, n_features))
        a = threshold_features(rows)[0]
        for value in (0, 1):
            need = quota[value] - len(kept[value])
            if need > 0:
                kept[value].extend(rows[a == value][:need])
    rows = np.array(kept[0] + kept[1])
    return rows[rng.permutation(n)]


def make_multiclass_dataset(n=200, img_size=100, tab_sigma=0.0, rng_seed=0, render_size=100,
                            image_sigma_range=(0.02, 0.10)):
    """
    Star/square images paired with a two-cluster table; 4 classes.

    The label is ``2 * square + A``. Images are rendered at ``render_size``,
    blurred with Gaussian noise of a per-image sigma drawn from
    ``image_sigma_range`` and resampled to ``img_size``. Each of the four
    (square, A) cells holds a quarter of the samples.

    Parameters
    ----------
    n: int
    img_size: int or tuple
    tab_sigma: float
        Standard deviation of the noise added to the tabular features.
    rng_seed: int
    render_size: int
    image_sigma_range: tuple

    Returns
    -------
    MultimodalDataset
    """
    root = np.random.SeedSequence(rng_seed)
    tab_seq, pair_seq, noise_seq, image_seq = root.spawn(4)
    features, ft_a, taxonomy = make_tabular_classification(
        n, rng_seed=np.random.default_rng(tab_seq))
    ft_square = _half_split([np.flatnonzero(ft_a == a) for a in (0, 1)],
                            np.random.default_rng(pair_seq), n)
    features = add_gaussian_noise(features, tab_sigma, np.random.default_rng(noise_seq))

    target = _square(img_size)
    images, boxes, sigmas = [], [], []
    for i, seq in enumerate(image_seq.spawn(n)):
        rng = np.random.default_rng(seq)
        shape = "square" if ft_square[i] else "star"
        img = render_shape_image({shape}, _square(render_size), rng,
                                 vocabulary=IMAGE_FEATURES["multiclass"])
        sigma = rng.uniform(*image_sigma_range)
        img = resample_image(add_gaussian_noise(img, sigma, rng), target)
        images.append(img.pixels)
        boxes.append(img.boxes)
        sigmas.append(round(float(sigma), 6))

    provenance = {"generator": "multiclass", "seed": rng_seed, "n": n, "img_size": list(target),
                  "tab_sigma": tab_sigma, "render_size": render_size,
                  "image_sigma_range": list(image_sigma_range), "image_sigmas": sigmas,
                  "taxonomy": taxonomy}
    logger.debug("multiclass dataset: n=%d img=%s tab_sigma=%s", n, target, tab_sigma)
    return MultimodalDataset(np.stack(images), features, 2 * ft_square + ft_a, 4, "multiclass",
                             {"square": ft_square}, {"A": ft_a}, boxes, provenance)


def _noisy_images(flags, names, target, noise_fraction, seqs):
    images, boxes = [], []
    n_pixels = int(round(noise_fraction * target[0] * target[1]))
    for i, seq in enumerate(seqs):
        rng = np.random.default_rng(seq)
        present = {name for name, column in zip(names, flags) if column[i]}
        img = render_shape_image(present, target, rng, vocabulary=names)
        img = add_pixel_noise(img, n_pixels, rng)
        images.append(img.pixels)
        boxes.append(img.boxes)
    return np.stack(images), boxes


def make_multifeature_dataset(n=1000, rng_seed=0, img_size=64, noise_fraction=0.25):
    """
    Circle/rectangle/triangle images with a uniform 10-feature table.

    Each shape is present with probability 0.5. The binary label is
    ``AND(AND(circle, A), OR(rectangle, B))``.
    """
    target = _square(img_size)
    shape_seq, tab_seq, image_seq = np.random.SeedSequence(rng_seed).spawn(3)
    names = ("rectangle", "circle", "triangle")
    present = np.random.default_rng(shape_seq).random((3, n)) < 0.5
    flags = present.astype(np.int64)
    rectangle, circle, triangle = flags
    features = np.random.default_rng(tab_seq).uniform(0.0, 1.0, (n, 10))
    ft_a, ft_b, ft_c = threshold_features(features)
    labels = circle & ft_a & (rectangle | ft_b)
    images, boxes = _noisy_images(flags, names, target, noise_fraction, image_seq.spawn(n))

    provenance = {"generator": "multifeature", "seed": rng_seed, "n": n,
                  "img_size": list(target), "noise_fraction": noise_fraction}
    return MultimodalDataset(images, features, labels, 2, "multifeature",
                             {"circle": circle, "rectangle": rectangle, "triangle": triangle},
                             {"A": ft_a, "B": ft_b, "C": ft_c}, boxes, provenance)


def make_xor_dataset(n=1000, gates=2, rng_seed=0, img_size=64, noise_fraction=0.25):
    """
    XOR of image shapes and tabular feature A.

    ``gates=2``: every image holds either a rectangle or a circle, the table
    has 15 uniform features and the label is ``XOR(circle, A)``; each of the
    four (circle, A) cells holds a quarter of the samples.

    ``gates=3``: multifeature-style images and a 10-feature table, label
    ``XOR(circle, triangle, A)``.
    """
    if gates not in (2, 3):
        raise ConfigurationError(f"gates must be 2 or 3, got {gates}")
    target = _square(img_size)
    shape_seq, tab_seq, image_seq = np.random.SeedSequence(rng_seed).spawn(3)
    shape_rng = np.random.default_rng(shape_seq)
    features = _balanced_uniform_rows(n, 15 if gates == 2 else 10,
                                      np.random.default_rng(tab_seq))
    ft_a = threshold_features(features)[0]
    provenance = {"generator": "xor", "gates": gates, "seed": rng_seed, "n": n,
                  "img_size": list(target), "noise_fraction": noise_fraction}

    if gates == 2:
        circle = _half_split([np.flatnonzero(ft_a == a) for a in (0, 1)], shape_rng, n)
        flags = np.stack([1 - circle, circle])
        images, boxes = _noisy_images(flags, ("rectangle", "circle"), target, noise_fraction,
                                      image_seq.spawn(n))
        return MultimodalDataset(images, features, circle ^ ft_a, 2, "xor",
                                 {"circle": circle}, {"A": ft_a}, boxes, provenance)

    flags = (shape_rng.random((3, n)) < 0.5).astype(np.int64)
    rectangle, circle, triangle = flags
    images, boxes = _noisy_images(flags, ("rectangle", "circle", "triangle"), target,
                                  noise_fraction, image_seq.spawn(n))
    return MultimodalDataset(images, features, circle ^ triangle ^ ft_a, 2, "xor3",
                             {"circle": circle, "triangle": triangle}, {"A": ft_a}, boxes,
                             provenance)


def make_dataset(problem, n_samples=None, img_size=None, tab_sigma=0.0, rng_seed=0):
    """
    Dispatch to the generator of ``problem`` with its default sizes.

    Raises
    ------
    ConfigurationError
        If the problem is unknown.
    """
    match problem:
        case "multiclass":
            return make_multiclass_dataset(n_samples or 200, img_size or 100, tab_sigma, rng_seed)
        case "multifeature":
            return make_multifeature_dataset(n_samples or 1000, rng_seed, img_size or 64)
        case "xor":
            return make_xor_dataset(n_samples or 1000, 2, rng_seed, img_size or 64)
        case "xor3":
            return make_xor_dataset(n_samples or 1000, 3, rng_seed, img_size or 64)
        case _:
            raise ConfigurationError(f"unknown problem {problem}, expected one of {PROBLEMS}")
