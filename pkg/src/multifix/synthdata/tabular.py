# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Tabular generators: the two-cluster classification table and the threshold
features ``A``, ``B`` and ``C``.
"""
import numpy as np

from multifix.errors import DataError


def make_tabular_classification(n_samples, n_features=20, n_informative=10, n_redundant=5,
                                n_random=5, rng_seed=None, class_sep=1.0):
    """
    Two-class table with informative, redundant and random columns.

    The informative block holds unit-variance Gaussian clusters around two
    hypercube vertices at distance ``class_sep`` from the origin per
    coordinate; the second vertex flips half of the first one's coordinates.
    Redundant columns are random linear combinations of the informative ones,
    random columns are standard normal. Columns are shuffled.

    Parameters
    ----------
    n_samples: int
    n_features, n_informative, n_redundant, n_random: int
        Column taxonomy; the last three must add up to ``n_features``.
    rng_seed: int or numpy.random.Generator
    class_sep: float

    Returns
    -------
    features: numpy.ndarray
        Shape (n_samples, n_features).
    labels: numpy.ndarray
        Balanced 0/1 labels (feature ``A``).
    taxonomy: dict
        Column indices per kind after shuffling.
    """
    if n_informative + n_redundant + n_random != n_features:
        raise DataError(f"{n_informative} informative + {n_redundant} redundant + "
                        f"{n_random} random != {n_features} features")
    if n_informative < 2:
        raise DataError("at least two informative features are needed")
    rng = np.random.default_rng(rng_seed) if not isinstance(
        rng_seed, np.random.Generator) else rng_seed

    first = rng.choice([-1.0, 1.0], n_informative) * class_sep
    second = first.copy()
    flipped = rng.choice(n_informative, n_informative // 2, replace=False)
    second[flipped] *= -1.0

    labels = np.zeros(n_samples, dtype=np.int64)
    labels[n_samples // 2:] = 1
    labels = rng.permutation(labels)

    informative = rng.normal(0.0, 1.0, (n_samples, n_informative))
    informative += np.where(labels[:, None] == 0, first, second)
    mixing = rng.uniform(-1.0, 1.0, (n_informative, n_redundant))
    redundant = informative @ mixing
    noise = rng.normal(0.0, 1.0, (n_samples, n_random))

    stacked = np.hstack([informative, redundant, noise])
    order = rng.permutation(n_features)
    features = stacked[:, order]
    position = np.argsort(order)
    taxonomy = {
        "informative": sorted(position[:n_informative].tolist()),
        "redundant": sorted(position[n_informative:n_informative + n_redundant].tolist()),
        "random": sorted(position[n_informative + n_redundant:].tolist()),
    }
    return features, labels, taxonomy


def threshold_features(x):
    """
    Threshold features of the uniform tables.

    ``A = x0 + x1 + x2 > 1.5``, ``B = x3 + 2 x4 + x5 > 2`` and
    ``C = x6 + 3 x7 + x8 > 2.5``; all strict.

    Parameters
    ----------
    x: array_like
        One row of at least nine values or a matrix of such rows.

    Returns
    -------
    tuple
        ``(A, B, C)`` as ints for one row, as int arrays for a matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 9:
        raise DataError(f"need at least 9 features, got {x.shape[-1]}")
    a = (x[..., 0] + x[..., 1] + x[..., 2] > 1.5).astype(np.int64)
    b = (x[..., 3] + 2 * x[..., 4] + x[..., 5] > 2).astype(np.int64)
    c = (x[..., 6] + 3 * x[..., 7] + x[..., 8] > 2.5).astype(np.int64)
    if x.ndim == 1:
        return int(a), int(b), int(c)
    return a, b, c
