# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Shape rendering and the image degradation transforms.

Shapes are rasterised by testing pixel centres against a
:py:class:`matplotlib.path.Path`, so the rendering is exact and does not
depend on a drawing backend.
"""
import numpy as np
from matplotlib.path import Path
from scipy import ndimage

from multifix.errors import DataError
from multifix.synthdata.dataset import ImageSample, TabularSample

SHAPES = ("star", "square", "rectangle", "circle", "triangle")
MIN_SHAPE_PIXELS = 3


def _rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def _random_colour(rng):
    """Uniform RGB colour, redrawn while too dark to stand out from black."""
    while True:
        colour = rng.uniform(0.0, 1.0, 3)
        if colour.max() >= 0.25:
            return colour


def _outline(shape, row0, col0, side, rng):
    """Return the polygon path of ``shape`` and its bounding box."""
    cy, cx = row0 + side / 2, col0 + side / 2
    match shape:
        case "square":
            box = (row0, col0, row0 + side, col0 + side)
        case "rectangle":
            height = side * rng.uniform(0.4, 0.7)
            top = row0 + (side - height) / 2
            box = (top, col0, top + height, col0 + side)
        case "circle":
            return Path.circle((cx, cy), side / 2), (row0, col0, row0 + side, col0 + side)
        case "triangle":
            vertices = [(col0, row0 + side), (col0 + side, row0 + side), (cx, row0)]
            return Path(vertices + [vertices[0]], closed=True), \
                (row0, col0, row0 + side, col0 + side)
        case "star":
            outer = side / 2
            angles = -np.pi / 2 + np.arange(10) * np.pi / 5
            radii = np.where(np.arange(10) % 2 == 0, outer, 0.382 * outer)
            vertices = np.column_stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)])
            return Path(np.vstack([vertices, vertices[:1]]), closed=True), \
                (row0, col0, row0 + side, col0 + side)
        case _:
            raise DataError(f"unknown shape {shape}, expected one of {SHAPES}")
    top, left, bottom, right = box
    corners = [(left, top), (right, top), (right, bottom), (left, bottom), (left, top)]
    return Path(corners, closed=True), box


def _overlaps(box, others):
    return any(box[0] < o[2] and o[0] < box[2] and box[1] < o[3] and o[1] < box[3]
               for o in others)


def render_shape_image(shapes, size=(100, 100), rng_seed=None, size_range=None,
                       vocabulary=SHAPES, max_tries=500):
    """
    Draw the requested shapes in random sizes and colours on a black canvas.

    Parameters
    ----------
    shapes: iterable of str
        Subset of :py:data:`SHAPES`; drawn in sorted order without overlap.
    size: tuple
        Canvas (H, W).
    rng_seed: int or numpy.random.Generator
    size_range: tuple, optional
        Side length as a fraction of the shorter canvas side. Defaults to
        (0.3, 0.7) for a single shape and (0.2, 0.4) for several.
    vocabulary: tuple
        Shape names reported in ``truth_features``.

    Returns
    -------
    ImageSample

    Raises
    ------
    DataError
        If the canvas is smaller than 5x5, a shape would be smaller than
        three pixels, or the shapes cannot be placed without overlap.
    """
    shapes = sorted(set(shapes))
    for shape in shapes:
        if shape not in SHAPES:
            raise DataError(f"unknown shape {shape}, expected one of {SHAPES}")
    height, width = size
    if height < 5 or width < 5:
        raise DataError(f"canvas {height}x{width} is too small, minimum is 5x5")
    if size_range is None:
        size_range = (0.3, 0.7) if len(shapes) <= 1 else (0.2, 0.4)
    short = min(height, width)
    if size_range[0] * short < MIN_SHAPE_PIXELS:
        raise DataError(f"canvas {height}x{width} cannot hold shapes of "
                        f"{size_range[0]:.0%} of its side")

    rng = _rng(rng_seed)
    pixels = np.zeros((height, width, 3), dtype=np.float32)
    rows, cols = np.mgrid[0:height, 0:width]
    centres = np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5])
    boxes = {}
    for shape in shapes:
        for _ in range(max_tries):
            side = rng.uniform(*size_range) * short
            row0 = rng.uniform(0, height - side)
            col0 = rng.uniform(0, width - side)
            path, box = _outline(shape, row0, col0, side, rng)
            if not _overlaps(box, boxes.values()):
                break
        else:
            raise DataError(f"could not place {shapes} on a {height}x{width} canvas")
        inside = path.contains_points(centres).reshape(height, width)
        pixels[inside] = _random_colour(rng)
        boxes[shape] = tuple(float(v) for v in box)

    truth = {name: int(name in shapes) for name in vocabulary}
    return ImageSample(pixels, truth, boxes)


def add_pixel_noise(img, n_pixels, rng_seed=None):
    """
    Recolour exactly ``n_pixels`` distinct pixels with uniform random colours.

    Raises
    ------
    DataError
        If ``n_pixels`` exceeds the pixel count.
    """
    height, width = img.height, img.width
    if not 0 <= n_pixels <= height * width:
        raise DataError(f"n_pixels={n_pixels} outside [0, {height * width}]")
    rng = _rng(rng_seed)
    pixels = img.pixels.copy()
    flat = pixels.reshape(-1, 3)
    chosen = rng.choice(height * width, size=n_pixels, replace=False)
    flat[chosen] = rng.uniform(0.0, 1.0, (n_pixels, 3))
    return img.copy(pixels=pixels)


def add_gaussian_noise(x, sigma, rng_seed=None):
    """
    Add i.i.d. N(0, sigma^2) noise to every element.

    Images are clipped back to [0, 1]. Accepts an :py:class:`ImageSample`, a
    :py:class:`TabularSample` or a plain array.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rng = _rng(rng_seed)
    match x:
        case ImageSample():
            if sigma == 0:
                return x.copy()
            noisy = x.pixels + rng.normal(0.0, sigma, x.pixels.shape)
            return x.copy(pixels=np.clip(noisy, 0.0, 1.0).astype(np.float32))
        case TabularSample():
            if sigma == 0:
                return x.copy()
            return x.copy(features=x.features + rng.normal(0.0, sigma, x.features.shape))
        case _:
            x = np.asarray(x, dtype=np.float64)
            return x.copy() if sigma == 0 else x + rng.normal(0.0, sigma, x.shape)


def resample_image(img, target):
    """
    Bilinear resize of ``img`` to ``target`` = (H', W').

    Bounding boxes are scaled along. An unchanged size returns a copy.
    """
    new_h, new_w = target
    if new_h < 1 or new_w < 1:
        raise DataError(f"target size must be at least 1x1, got {target}")
    if (new_h, new_w) == (img.height, img.width):
        return img.copy()
    pixels = resample_pixels(img.pixels, (new_h, new_w))
    fy, fx = new_h / img.height, new_w / img.width
    boxes = {k: (b[0] * fy, b[1] * fx, b[2] * fy, b[3] * fx) for k, b in img.boxes.items()}
    return img.copy(pixels=pixels, boxes=boxes)


def resample_pixels(pixels, target):
    """Array form of :py:func:`resample_image` for (H, W, C) arrays."""
    height, width = pixels.shape[:2]
    zoom = (target[0] / height, target[1] / width) + (1,) * (pixels.ndim - 2)
    out = ndimage.zoom(pixels, zoom, order=1, mode="nearest", grid_mode=True)
    if out.shape[:2] != tuple(target):
        out = out[:target[0], :target[1]]
    return np.clip(out, 0.0, 1.0).astype(np.float32)
