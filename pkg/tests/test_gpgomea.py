# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors

"""
Test set for the expression-tree engine: template encoding, protected
evaluation, fitness, linkage learning, gene-pool optimal mixing and the
interleaved multistart scheme.
"""
import itertools

import numpy as np
import pytest

from multifix.errors import ConfigurationError, DataError
from multifix.gpgomea import (ExpressionTree, GpDataset, OperatorSet, Population, evaluate_tree,
                              fit_multiseed, fitness, forced_improvement, gom_step,
                              learn_linkage_tree, make_operator_set, random_tree, run_ims,
                              template_size)
from multifix.gpgomea.operators import ADD, SUB, MUL, DIV, CONST, VAR0

"""Random seed for tests"""
SEED = 123456

"""Small search settings for fast tests"""
QUICK = {"depths": [2], "population_size": 16, "generations": 20, "max_populations": 2,
         "n_seeds": 2}

BINARY_INPUTS = np.array(list(itertools.product([0, 1], repeat=2)), dtype=float)


def _binary_set(names=("x0", "x1")):
    return make_operator_set(list(names), {"use_ite": False})


def _tree(genes, constants, op_set, depth):
    return ExpressionTree(genes, constants, depth, op_set)


@pytest.mark.parametrize('depth, branching, expected', [(1, 2, (3, 1)), (2, 2, (7, 3)),
                                                        (2, 3, (13, 4)), (4, 3, (121, 40))])
def test_template_size(depth, branching, expected):
    assert template_size(depth, branching) == expected


def test_operator_on_last_level_rejected():
    op_set = _binary_set()
    with pytest.raises(ValueError):
        _tree([ADD, VAR0, ADD], np.zeros(3), op_set, 1)


def test_wrong_template_length_rejected():
    with pytest.raises(ValueError):
        _tree([ADD, VAR0], np.zeros(2), _binary_set(), 1)


def test_operator_outside_set_rejected():
    """An operator the set does not contain is an unknown symbol."""
    op_set = make_operator_set(["x0"], {"use_ite": False})
    with pytest.raises(ValueError):
        _tree([13, VAR0, VAR0], np.zeros(3), op_set, 1)


def test_operator_set_errors():
    with pytest.raises(ConfigurationError):
        OperatorSet(["x0"], ["add", "pow"])
    with pytest.raises(ConfigurationError):
        OperatorSet([], ["add"])


def test_xor_is_optional():
    """XOR is excluded unless allowed; ite decides the branching factor."""
    assert "xor" not in [op.name for op in make_operator_set(["a"]).operators]
    assert "xor" in [op.name for op in make_operator_set(["a"], {"allow_xor": True}).operators]
    assert make_operator_set(["a"]).max_arity == 3
    assert _binary_set().max_arity == 2


def test_hand_built_tree():
    """3 - T - 2I on a depth-2 binary template."""
    op_set = _binary_set(["T", "I"])
    tree = _tree([SUB, SUB, MUL, CONST, VAR0, CONST, VAR0 + 1], [0, 0, 0, 3, 0, 2, 0], op_set, 2)
    assert evaluate_tree(tree, [[0, 0], [1, 1], [1, 0]]).tolist() == [3.0, 0.0, 2.0]
    assert str(tree) == "(3 - T) - (2 * I)"
    assert tree.n_active == 7


def test_protected_division():
    op_set = _binary_set()
    tree = _tree([DIV, VAR0, CONST], [0, 0, 0], op_set, 1)
    assert evaluate_tree(tree, [[5.0, 0.0], [0.0, 0.0]]).tolist() == [1.0, 1.0]


@pytest.mark.parametrize('seed', range(20))
def test_evaluation_always_finite(seed):
    """Random trees on extreme inputs never produce a non-finite value."""
    rng = np.random.default_rng([SEED, seed])
    op_set = OperatorSet(["a", "b", "c"], allow_xor=True)
    tree = random_tree(op_set, 4, rng, full=seed % 2 == 0)
    x = np.concatenate([rng.normal(0, 1e6, (50, 3)), np.zeros((5, 3)),
                        np.full((5, 3), 1e12), np.full((5, 3), -1e12)])
    assert np.all(np.isfinite(evaluate_tree(tree, x)))


def test_boolean_root_outputs_zero_or_one():
    op_set = OperatorSet(["a", "b"])
    rng = np.random.default_rng(SEED)
    x = rng.normal(size=(100, 2))
    for _ in range(20):
        tree = random_tree(op_set, 3, rng)
        if tree.to_expression().kind == "boolean":
            assert set(np.unique(evaluate_tree(tree, x))) <= {0.0, 1.0}


def test_missing_variable_column():
    tree = _tree([ADD, VAR0, VAR0 + 1], np.zeros(3), _binary_set(), 1)
    with pytest.raises(DataError):
        evaluate_tree(tree, np.zeros((3, 1)))


def test_fitness_perfect_and_constant():
    """Reproducing the labels scores 1.0; a constant 0 scores 0.5 on balanced labels."""
    op_set = _binary_set()
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0])
    assert fitness(_tree([ADD, VAR0, CONST], np.zeros(3), op_set, 1), data) == 1.0
    assert fitness(_tree([CONST, VAR0, VAR0], np.zeros(3), op_set, 1), data) == 0.5


def test_fitness_multiclass_truth_table():
    """3 - T - 2I reproduces the four-class table with inverted features."""
    op_set = _binary_set(["T", "I"])
    tree = _tree([SUB, SUB, MUL, CONST, VAR0, CONST, VAR0 + 1], [0, 0, 0, 3, 0, 2, 0], op_set, 2)
    labels = 3 - BINARY_INPUTS[:, 0] - 2 * BINARY_INPUTS[:, 1]
    assert fitness(tree, GpDataset(BINARY_INPUTS, labels, n_classes=4)) == 1.0


def test_fitness_regression():
    op_set = _binary_set()
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0] + 1.0, task="regression")
    assert fitness(_tree([ADD, VAR0, CONST], [0, 0, 1.0], op_set, 1), data) == 0.0
    assert fitness(_tree([CONST, VAR0, VAR0], np.zeros(3), op_set, 1), data) == -2.5


def test_dataset_deduplicates_rows():
    """Identical rows merge into one weighted row."""
    data = GpDataset(np.tile(BINARY_INPUTS, (5, 1)), np.tile([0, 1, 1, 0], 5))
    assert len(data) == 4
    assert data.weights.tolist() == [5.0] * 4


@pytest.mark.parametrize('x, y', [(np.zeros((0, 2)), []), (np.zeros((3, 2)), [0, 1])])
def test_dataset_errors(x, y):
    with pytest.raises(DataError):
        GpDataset(x, y)


def test_linkage_identical_population():
    """Identical trees give zero mutual information and a valid family of subsets."""
    symbols = np.tile(np.arange(7), (10, 1))
    fos = learn_linkage_tree(symbols)
    assert np.all(fos.mutual_information == 0)
    assert len(fos) == 2 * 7 - 1
    fos.check()


def test_linkage_merges_correlated_positions_first():
    rng = np.random.default_rng(SEED)
    symbols = rng.integers(0, 4, (500, 4))
    symbols[:, 2] = symbols[:, 0]
    fos = learn_linkage_tree(symbols, 4)
    assert set(fos.merges[0]) == {0, 2}
    assert fos.n_positions == 4
    fos.check()


def test_linkage_needs_two_individuals():
    with pytest.raises(ValueError):
        learn_linkage_tree(np.zeros((1, 3), dtype=int))


def test_gom_with_itself_keeps_tree():
    """Mixing with a copy of itself changes nothing."""
    op_set = _binary_set()
    tree = random_tree(op_set, 2, np.random.default_rng(SEED))
    data = GpDataset(BINARY_INPUTS, [0, 1, 1, 0])
    fos = learn_linkage_tree(np.stack([tree.genes, tree.genes]), op_set.n_symbols)
    out, score = gom_step(tree, [tree.copy()], fos, data, np.random.default_rng(SEED))
    assert out == tree
    assert score == fitness(tree, data)


def test_gom_accepts_fitter_symbol():
    """A recipient one terminal away from the donor takes that terminal."""
    op_set = _binary_set()
    recipient = _tree([SUB, VAR0, VAR0], np.zeros(3), op_set, 1)
    donor = _tree([SUB, VAR0, CONST], np.zeros(3), op_set, 1)
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0])
    fos = learn_linkage_tree(np.stack([recipient.genes, donor.genes]), op_set.n_symbols)
    out, score = gom_step(recipient, [donor], fos, data, np.random.default_rng(SEED))
    assert out == donor
    assert score == 1.0


@pytest.mark.parametrize('seed', range(5))
def test_gom_never_worsens(seed):
    rng = np.random.default_rng([SEED, seed])
    op_set = make_operator_set(["a", "b", "c"])
    x = rng.normal(size=(60, 3))
    data = GpDataset(x, (x[:, 0] > x[:, 1]).astype(int))
    population = [random_tree(op_set, 3, rng) for _ in range(12)]
    fos = learn_linkage_tree(np.stack([t.genes for t in population]), op_set.n_symbols)
    for recipient in population:
        _, score = gom_step(recipient, population, fos, data, rng)
        assert score >= fitness(recipient, data)


def test_forced_improvement_takes_elite_subset():
    op_set = _binary_set()
    recipient = _tree([SUB, VAR0, VAR0], np.zeros(3), op_set, 1)
    elite = _tree([SUB, VAR0, CONST], np.zeros(3), op_set, 1)
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0])
    fos = learn_linkage_tree(np.stack([recipient.genes, elite.genes]), op_set.n_symbols)
    out, score, improved = forced_improvement(recipient, elite, fos, data,
                                              np.random.default_rng(SEED))
    assert improved
    assert out == elite
    assert score == 1.0


def test_forced_improvement_without_gain_keeps_recipient():
    op_set = _binary_set()
    tree = _tree([SUB, VAR0, CONST], np.zeros(3), op_set, 1)
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0])
    fos = learn_linkage_tree(np.stack([tree.genes, tree.genes]), op_set.n_symbols)
    out, score, improved = forced_improvement(tree, tree.copy(), fos, data,
                                              np.random.default_rng(SEED))
    assert not improved
    assert out == tree
    assert score == 1.0


def _stalled_population(forced):
    """Every member is x0 - x0 except an elite computing x0 - 0."""
    op_set = _binary_set()
    data = GpDataset(BINARY_INPUTS, BINARY_INPUTS[:, 0])
    population = Population(16, 1, op_set, data, np.random.default_rng(SEED),
                            forced_improvements=forced)
    population.genes = np.tile(np.array([SUB, VAR0, VAR0], dtype=np.int64), (16, 1))
    population.genes[0, 2] = CONST
    population.constants = np.zeros((16, 3))
    population.fitness = np.array([1.0] + [0.5] * 15)
    population.best_fitness = 1.0
    return population


def test_forced_improvements_lift_stalled_members():
    """Members that GOM leaves unimproved are pulled towards the elite."""
    population = _stalled_population(True)
    population.generation()
    assert np.all(population.fitness == 1.0)


def test_without_forced_improvements_members_can_stall():
    population = _stalled_population(False)
    population.generation()
    assert np.any(population.fitness < 1.0)


def test_population_elitism():
    """Best population fitness never decreases across generations."""
    rng = np.random.default_rng(SEED)
    x = rng.normal(size=(80, 3))
    data = GpDataset(x, (x[:, 0] + x[:, 2] > 0).astype(int))
    population = Population(16, 3, make_operator_set(["a", "b", "c"]), data, rng)
    for _ in range(5):
        population.generation()
    assert np.all(np.diff(population.history) >= 0)
    assert population.generations == 5


def test_ims_solves_identity():
    """A label equal to x0 is recovered exactly."""
    rng = np.random.default_rng(SEED)
    x = rng.integers(0, 2, (40, 3)).astype(float)
    data = GpDataset(x, x[:, 0])
    config = {"depths": [2, 3], "population_size": 32, "generations": 50, "max_populations": 3}
    result = run_ims(data, make_operator_set(["x0", "x1", "x2"]), config, rng_seed=SEED)
    assert result.fitness == 1.0
    assert np.array_equal(np.rint(evaluate_tree(result.tree, x)).clip(0, 1), x[:, 0])


def test_ims_budget_returns_best_so_far():
    """An exhausted evaluation budget still yields a result."""
    rng = np.random.default_rng(SEED)
    x = rng.normal(size=(50, 2))
    data = GpDataset(x, (np.sin(3 * x[:, 0]) > x[:, 1]).astype(int))
    config = {**QUICK, "depths": [2, 3], "max_evaluations": 20}
    result = run_ims(data, make_operator_set(["a", "b"]), config, rng_seed=SEED)
    assert 0.0 <= result.fitness <= 1.0
    assert result.depth == 2
    assert result.evaluations <= 20 + QUICK["population_size"]


def test_ims_deterministic():
    rng = np.random.default_rng(SEED)
    x = rng.normal(size=(50, 2))
    data = GpDataset(x, (x[:, 0] * x[:, 1] > 0).astype(int))
    op_set = make_operator_set(["a", "b"])
    first = run_ims(data, op_set, QUICK, rng_seed=7)
    second = run_ims(data, op_set, QUICK, rng_seed=7)
    assert first.tree == second.tree
    assert str(first.tree) == str(second.tree)
    assert first.fitness == second.fitness


def test_ims_finds_xor_without_xor_operator():
    """The XOR truth table is recovered from the other operators."""
    data = GpDataset(BINARY_INPUTS, [0, 1, 1, 0])
    best, per_seed = fit_multiseed(data, make_operator_set(["a", "b"]),
                                   {"depths": [2, 3]}, n_seeds=5, base_seed=SEED)
    assert best.fitness == 1.0
    assert len(per_seed) == 5
    assert np.rint(evaluate_tree(best.tree, BINARY_INPUTS)).clip(0, 1).tolist() == [0, 1, 1, 0]


def test_multiseed_prefers_smallest_tree():
    """Among seeds at the best fitness the smallest tree wins."""
    rng = np.random.default_rng(SEED)
    x = rng.integers(0, 2, (30, 2)).astype(float)
    data = GpDataset(x, x[:, 1])
    op_set = make_operator_set(["x0", "x1"])
    best, per_seed = fit_multiseed(data, op_set, QUICK, n_seeds=3, base_seed=SEED)
    runs = [run_ims(data, op_set, QUICK, rng_seed=SEED + s) for s in range(3)]
    assert per_seed == [r.fitness for r in runs]
    top = [r for r in runs if r.fitness == max(per_seed)]
    assert best.tree.n_active == min(r.tree.n_active for r in top)


@pytest.mark.slow
@pytest.mark.parametrize('table', list(itertools.product([0, 1], repeat=4)))
def test_all_two_input_functions(table):
    """Every two-input Boolean function is recovered without the XOR operator."""
    data = GpDataset(BINARY_INPUTS, table)
    best, _ = fit_multiseed(data, make_operator_set(["a", "b"]), {"depths": [2, 3]},
                            base_seed=SEED)
    assert best.fitness == 1.0
    assert np.rint(evaluate_tree(best.tree, BINARY_INPUTS)).clip(0, 1).tolist() == list(table)
