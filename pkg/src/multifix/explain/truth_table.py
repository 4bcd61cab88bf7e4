# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Truth tables of fusion expressions over binary features, and their
equivalence up to inverted inputs and relabelled outputs.
"""
import csv
import itertools

import numpy as np
from prettytable import PrettyTable

from multifix.errors import DataError
from multifix.gpgomea import predict_classes

MAX_INPUTS = 16


class TruthTable:
    """
    Label of every combination of binary inputs.

    Row ``r`` holds the bits of ``r`` with the first input as the most
    significant bit, so rows are complete, ordered and free of duplicates.

    Attributes
    ----------
    names: list of str
    labels: numpy.ndarray
        (2**k,) integer labels.
    """

    def __init__(self, names, labels):
        self.names = list(names)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if self.labels.size != 2 ** len(self.names):
            raise DataError(f"{len(self.names)} inputs need {2 ** len(self.names)} rows, got "
                            f"{self.labels.size}")

    def __len__(self):
        return self.labels.size

    def __eq__(self, other):
        return (isinstance(other, TruthTable) and self.names == other.names
                and np.array_equal(self.labels, other.labels))

    def __str__(self):
        table = PrettyTable(self.names + ["label"])
        for bits, label in zip(self.inputs, self.labels):
            table.add_row(list(bits) + [int(label)])
        return str(table)

    @property
    def arity(self):
        return len(self.names)

    @property
    def inputs(self):
        """(2**k, k) matrix of the input bits."""
        return input_combinations(self.arity)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.writer(csvfile, delimiter=",")
            writer.writerow(self.names + ["label"])
            for bits, label in zip(self.inputs, self.labels):
                writer.writerow([int(b) for b in bits] + [int(label)])


def input_combinations(k):
    rows = np.arange(2 ** k)[:, None]
    return (rows >> np.arange(k - 1, -1, -1)) & 1


def _check_arity(k):
    if k > MAX_INPUTS:
        raise DataError(f"a truth table of {k} inputs has {2 ** k} rows; at most {MAX_INPUTS} "
                        f"inputs are supported")


def feature_names(n_i, n_t):
    return [f"I{j + 1}" for j in range(n_i)] + [f"T{j + 1}" for j in range(n_t)]


def extract_truth_table(expression, n_i, n_t, n_classes=None):
    """
    Evaluate ``expression`` on every binary assignment of ``I1..I{n_i}, T1..T{n_t}``.

    Labels are the outputs rounded to the nearest integer and, with
    ``n_classes``, clamped to ``[0, n_classes - 1]``.

    Raises
    ------
    DataError
        If ``n_i + n_t`` exceeds 16.
    """
    _check_arity(n_i + n_t)
    inputs = input_combinations(n_i + n_t).astype(np.float64)
    outputs = expression.evaluate(inputs)
    if n_classes is None:
        labels = np.rint(outputs).astype(np.int64)
    else:
        labels = predict_classes(outputs, n_classes)
    return TruthTable(feature_names(n_i, n_t), labels)


def table_from_function(function, names):
    """Truth table of a Python function taking one 0/1 argument per name."""
    _check_arity(len(names))
    labels = [int(function(*bits)) for bits in input_combinations(len(names))]
    return TruthTable(names, labels)


def _label_map(source, target):
    mapping = {}
    for a, b in zip(source.tolist(), target.tolist()):
        if mapping.setdefault(a, b) != b:
            return None
    if len(set(mapping.values())) != len(mapping):
        return None
    return mapping


def table_equivalence(t1, t2):
    """
    Whether some set of inverted inputs plus a label bijection maps ``t1`` onto ``t2``.

    Input names are not compared, only positions.

    Returns
    -------
    equivalent: bool
    witness: dict or None
        ``{"flips": [bool per input], "labels": {t1 label: t2 label}}`` for
        the first match, trying fewer flips first.

    Raises
    ------
    DataError
        If the arities differ.
    """
    if t1.arity != t2.arity:
        raise DataError(f"cannot compare tables of {t1.arity} and {t2.arity} inputs")
    if sorted(np.unique(t1.labels, return_counts=True)[1]) != \
            sorted(np.unique(t2.labels, return_counts=True)[1]):
        return False, None
    k = t1.arity
    rows = np.arange(2 ** k)
    for n_flips in range(k + 1):
        for flipped in itertools.combinations(range(k), n_flips):
            mask = sum(1 << (k - 1 - i) for i in flipped)
            mapping = _label_map(t1.labels, t2.labels[rows ^ mask])
            if mapping is not None:
                flips = [i in flipped for i in range(k)]
                return True, {"flips": flips, "labels": mapping}
    return False, None
