# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for truth tables of fusion expressions and their equivalence.
"""
import csv

import numpy as np
import pytest

from multifix.errors import DataError
from multifix.explain import (TruthTable, extract_truth_table, input_combinations,
                              table_equivalence, table_from_function)
from multifix.gpgomea import parse_infix


def test_input_order():
    """The first input is the most significant bit."""
    assert input_combinations(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert input_combinations(3).shape == (8, 3)


def test_multiclass_rule():
    expression = parse_infix("3 - T1 - 2*I1", ["I1", "T1"], ["I1", "T1"])
    table = extract_truth_table(expression, 1, 1, 4)
    assert table.names == ["I1", "T1"]
    assert table.labels.tolist() == [3, 2, 1, 0]


def test_labels_rounded_and_clamped():
    expression = parse_infix("5*I1 - 0.4", ["I1"])
    assert extract_truth_table(expression, 1, 0).labels.tolist() == [0, 5]
    assert extract_truth_table(expression, 1, 0, 2).labels.tolist() == [0, 1]


def test_complete_rows():
    expression = parse_infix("I1 AND (T1 XOR T2)", ["I1", "T1", "T2"], ["I1", "T1", "T2"])
    table = extract_truth_table(expression, 1, 2, 2)
    assert len(table) == 8
    assert table.labels.tolist() == [0, 0, 0, 0, 0, 1, 1, 0]


def test_too_many_inputs():
    with pytest.raises(DataError):
        extract_truth_table(parse_infix("1"), 9, 8)


def test_row_count_checked():
    with pytest.raises(DataError):
        TruthTable(["a", "b"], [0, 1, 0])


def test_from_function():
    table = table_from_function(lambda a, b: a ^ b, ["a", "b"])
    assert table.labels.tolist() == [0, 1, 1, 0]
    assert table == TruthTable(["a", "b"], [0, 1, 1, 0])


def test_xor_equivalent_to_xnor():
    xor = table_from_function(lambda a, b: a ^ b, ["a", "b"])
    xnor = table_from_function(lambda a, b: 1 - (a ^ b), ["a", "b"])
    equivalent, witness = table_equivalence(xor, xnor)
    assert equivalent
    assert witness["flips"] == [False, False]
    assert witness["labels"] == {0: 1, 1: 0}


def test_and_equivalent_to_or():
    """De Morgan: AND with both inputs and the output inverted is OR."""
    t_and = table_from_function(lambda a, b: a & b, ["a", "b"])
    t_or = table_from_function(lambda a, b: a | b, ["a", "b"])
    equivalent, witness = table_equivalence(t_and, t_or)
    assert equivalent
    assert witness == {"flips": [True, True], "labels": {0: 1, 1: 0}}


def test_fewest_flips_preferred():
    first = TruthTable(["a", "b"], [0, 0, 1, 1])
    second = TruthTable(["a", "b"], [1, 1, 0, 0])
    assert table_equivalence(first, second)[1]["flips"] == [False, False]


def test_and_not_equivalent_to_xor():
    t_and = table_from_function(lambda a, b: a & b, ["a", "b"])
    t_xor = table_from_function(lambda a, b: a ^ b, ["a", "b"])
    assert table_equivalence(t_and, t_xor) == (False, None)


def test_multiclass_relabelling():
    first = TruthTable(["I1", "T1"], [0, 1, 2, 3])
    second = TruthTable(["I1", "T1"], [0, 2, 1, 3])
    equivalent, witness = table_equivalence(first, second)
    assert equivalent
    assert witness["labels"] == {0: 0, 1: 2, 2: 1, 3: 3}


def test_names_ignored():
    assert table_equivalence(TruthTable(["a"], [0, 1]), TruthTable(["I1"], [1, 0]))[0]


def test_arity_mismatch():
    with pytest.raises(DataError):
        table_equivalence(TruthTable(["a"], [0, 1]), TruthTable(["a", "b"], [0, 1, 1, 0]))


def test_write_csv(tmp_path):
    table = TruthTable(["I1", "T1"], [3, 2, 1, 0])
    table.write_csv(tmp_path / "truth_table.csv")
    with open(tmp_path / "truth_table.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["I1", "T1", "label"]
    assert rows[1:] == [["0", "0", "3"], ["0", "1", "2"], ["1", "0", "1"], ["1", "1", "0"]]


def test_printed_table():
    text = str(TruthTable(["I1"], np.array([0, 1])))
    assert "I1" in text and "label" in text
