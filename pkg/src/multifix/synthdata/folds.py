# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Stratified k-fold partitioning.
"""
import numpy as np

from multifix.errors import DataError


class FoldPlan:
    """
    Train/test index lists for k folds.

    Attributes
    ----------
    k: int
    folds: list of tuple
        ``(train_indices, test_indices)`` per fold, sorted.
    """

    def __init__(self, folds):
        self.folds = [(np.sort(np.asarray(tr, dtype=np.int64)),
                       np.sort(np.asarray(te, dtype=np.int64))) for tr, te in folds]
        self.k = len(self.folds)

    def __len__(self):
        return self.k

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, i):
        return self.folds[i]

    def train(self, i):
        return self.folds[i][0]

    def test(self, i):
        return self.folds[i][1]

    def to_dict(self):
        return {"k": self.k, "test": [te.tolist() for _, te in self.folds]}

    @classmethod
    def from_dict(cls, data):
        tests = [np.asarray(t, dtype=np.int64) for t in data["test"]]
        every = np.concatenate(tests)
        return cls([(np.setdiff1d(every, te), te) for te in tests])


def kfold_split(labels, k=5, rng_seed=0):
    """
    Stratified partition of the sample indices into ``k`` test folds.

    Each class is shuffled and dealt round-robin over the folds; the dealing
    continues where the previous class stopped so fold sizes differ by at
    most one.

    Parameters
    ----------
    labels: array_like or MultimodalDataset
    k: int
    rng_seed: int or numpy.random.Generator

    Returns
    -------
    FoldPlan

    Raises
    ------
    DataError
        If there are fewer than ``k`` samples or a class has fewer than ``k``
        members.
    """
    labels = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    n = len(labels)
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if n < k:
        raise DataError(f"cannot split {n} samples into {k} folds")
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < k]
    if small.size:
        raise DataError(f"classes {small.tolist()} have fewer than {k} members")

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    assignment = np.empty(n, dtype=np.int64)
    offset = 0
    for cls in classes:
        members = rng.permutation(np.flatnonzero(labels == cls))
        assignment[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    every = np.arange(n)
    return FoldPlan([(every[assignment != f], every[assignment == f]) for f in range(k)])
