# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Linkage-tree learning over template node positions.
"""
import numpy as np
from numba import njit
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform


@njit(cache=True)
def _mutual_information(symbols, n_symbols):
    n_rows, n_pos = symbols.shape
    entropy = np.zeros(n_pos)
    counts = np.zeros(n_symbols)
    for i in range(n_pos):
        counts[:] = 0.0
        for k in range(n_rows):
            counts[symbols[k, i]] += 1.0
        h = 0.0
        for c in counts:
            if c > 0:
                q = c / n_rows
                h -= q * np.log(q)
        entropy[i] = h
    mi = np.zeros((n_pos, n_pos))
    joint = np.zeros(n_symbols * n_symbols)
    for i in range(n_pos):
        for j in range(i + 1, n_pos):
            for k in range(n_rows):
                joint[symbols[k, i] * n_symbols + symbols[k, j]] += 1.0
            h = 0.0
            for k in range(n_rows):
                cell = symbols[k, i] * n_symbols + symbols[k, j]
                c = joint[cell]
                if c > 0:
                    q = c / n_rows
                    h -= q * np.log(q)
                    joint[cell] = 0.0
            value = entropy[i] + entropy[j] - h
            mi[i, j] = value
            mi[j, i] = value
    return mi


class LinkageTree:
    """
    Family of subsets over node positions.

    Attributes
    ----------
    subsets: list of numpy.ndarray
        Singletons first, then every merge in clustering order; the last
        subset is the full index set.
    merges: list of tuple
        Indices into ``subsets`` of the two children of each merged subset.
    mutual_information: numpy.ndarray
    """

    def __init__(self, subsets, merges, mutual_information):
        self.subsets = subsets
        self.merges = merges
        self.mutual_information = mutual_information
        self.n_positions = len(subsets) - len(merges)

    def __len__(self):
        return len(self.subsets)

    def mixing_subsets(self):
        """All subsets except the root."""
        return self.subsets[:-1]

    def check(self):
        """
        Raise ``AssertionError`` unless leaves are the singletons, the root is
        the full set and every merged subset is the union of its children.
        """
        n = self.n_positions
        for i in range(n):
            assert self.subsets[i].tolist() == [i], f"leaf {i} is {self.subsets[i]}"
        assert sorted(self.subsets[-1].tolist()) == list(range(n)), "root is not the full set"
        for offset, (left, right) in enumerate(self.merges):
            union = np.union1d(self.subsets[left], self.subsets[right])
            assert np.array_equal(np.sort(self.subsets[n + offset]), union), \
                f"subset {n + offset} is not the union of {left} and {right}"


def learn_linkage_tree(symbols, n_symbols=None):
    """
    Cluster node positions by mutual information of their symbols.

    Parameters
    ----------
    symbols: numpy.ndarray
        Shape (population, positions) of integer symbol codes.
    n_symbols: int, optional
        Size of the symbol alphabet; inferred when omitted.

    Returns
    -------
    LinkageTree
        Built with UPGMA on the distance ``max(MI) - MI``, so the most
        dependent positions merge first.
    """
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    if symbols.shape[0] < 2:
        raise ValueError(f"linkage learning needs at least 2 individuals, got {symbols.shape[0]}")
    n_pos = symbols.shape[1]
    n_symbols = int(symbols.max()) + 1 if n_symbols is None else n_symbols
    mi = np.maximum(_mutual_information(symbols, n_symbols), 0.0)
    subsets = [np.array([i]) for i in range(n_pos)]
    merges = []
    if n_pos > 1:
        distance = mi.max() - mi
        np.fill_diagonal(distance, 0.0)
        tree = linkage(squareform(distance, checks=False), method="average")
        for left, right, _, _ in tree:
            left, right = int(left), int(right)
            subsets.append(np.sort(np.concatenate([subsets[left], subsets[right]])))
            merges.append((left, right))
    return LinkageTree(subsets, merges, mi)
