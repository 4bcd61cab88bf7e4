# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Fixed-template expression trees, their evaluation and fitness.

A tree of depth ``d`` and branching factor ``r`` is stored as the complete
array of a full r-ary tree: the children of node ``i`` are
``r*i + 1 .. r*i + r``. Nodes on the last level are always terminals; an
operator reads only its first ``arity`` children, so the remaining subtrees
are inactive.
"""
import numpy as np
from numba import njit

from multifix.errors import DataError
from multifix.gpgomea.operators import ARITY, CONST, VAR0, LIMIT, EPSILON


@njit(cache=True)
def _active_mask(genes, arity, branching):
    active = np.zeros(genes.size, dtype=np.bool_)
    active[0] = True
    for i in range(genes.size):
        if active[i] and genes[i] < CONST:
            for c in range(arity[genes[i]]):
                active[branching * i + 1 + c] = True
    return active


@njit(cache=True)
def _evaluate(genes, constants, x, branching, active, buf):
    n = x.shape[0]
    for i in range(genes.size - 1, -1, -1):
        if not active[i]:
            continue
        g = genes[i]
        if g == CONST:
            for s in range(n):
                buf[i, s] = constants[i]
            continue
        if g >= VAR0:
            for s in range(n):
                buf[i, s] = x[s, g - VAR0]
            continue
        c = branching * i + 1
        for s in range(n):
            a = buf[c, s]
            b = buf[c + 1, s]
            if g == 0:
                v = a + b
            elif g == 1:
                v = a - b
            elif g == 2:
                v = a * b
            elif g == 3:
                v = 1.0 if b == 0.0 else a / b
            elif g == 4:
                v = a * a
            elif g == 5:
                v = a * a * a
            elif g == 6:
                v = 1.0 if a > b else 0.0
            elif g == 7:
                v = 1.0 if a < b else 0.0
            elif g == 8:
                v = 1.0 if abs(a - b) <= EPSILON else 0.0
            elif g == 9:
                v = 1.0 if (a > 0.5 and b > 0.5) else 0.0
            elif g == 10:
                v = 1.0 if (a > 0.5 or b > 0.5) else 0.0
            elif g == 11:
                v = 1.0 if a <= 0.5 else 0.0
            elif g == 12:
                v = b if a > 0.5 else buf[c + 2, s]
            else:
                v = 1.0 if ((a > 0.5) != (b > 0.5)) else 0.0
            if v != v:
                v = 0.0
            elif v > LIMIT:
                v = LIMIT
            elif v < -LIMIT:
                v = -LIMIT
            buf[i, s] = v


@njit(cache=True)
def _weighted_balanced_accuracy(pred, y, w, n_classes):
    correct = np.zeros(n_classes)
    total = np.zeros(n_classes)
    for i in range(y.size):
        total[y[i]] += w[i]
        if pred[i] == y[i]:
            correct[y[i]] += w[i]
    score = 0.0
    present = 0
    for c in range(n_classes):
        if total[c] > 0:
            score += correct[c] / total[c]
            present += 1
    return score / present if present else 0.0


def template_size(depth, branching):
    """Return (node count, internal node count) of the full template."""
    internal = (branching ** depth - 1) // (branching - 1)
    return (branching ** (depth + 1) - 1) // (branching - 1), internal


class ExpressionTree:
    """
    GP genotype on a full template.

    Parameters
    ----------
    genes: numpy.ndarray
        Symbol code per template node.
    constants: numpy.ndarray
        Constant value per node, used where the gene is ``CONST``.
    depth: int
    op_set: OperatorSet
    """

    def __init__(self, genes, constants, depth, op_set):
        self.genes = np.asarray(genes, dtype=np.int64)
        self.constants = np.asarray(constants, dtype=np.float64)
        self.depth = depth
        self.op_set = op_set
        self.branching = op_set.max_arity
        n_nodes, n_internal = template_size(depth, self.branching)
        if self.genes.size != n_nodes or self.constants.size != n_nodes:
            raise ValueError(f"depth {depth} template has {n_nodes} nodes, got "
                             f"{self.genes.size} genes")
        if np.any(self.genes[n_internal:] < CONST):
            raise ValueError("operators are not allowed on the last template level")
        bad = self.genes[(self.genes < 0) | (self.genes >= op_set.n_symbols)
                         | ((self.genes < CONST) & ~np.isin(self.genes, op_set.codes))]
        if bad.size:
            raise ValueError(f"unknown symbol codes {sorted(set(bad.tolist()))}")
        self.n_internal = n_internal

    def __len__(self):
        return self.genes.size

    def __str__(self):
        return self.to_expression().infix()

    def __repr__(self):
        return f"ExpressionTree(depth={self.depth}, active={self.n_active}, '{self}')"

    def __eq__(self, other):
        return isinstance(other, ExpressionTree) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self):
        """Bytes identifying the active part of the tree."""
        active = self.active
        genes = np.where(active, self.genes, -1)
        constants = np.where(active & (self.genes == CONST), self.constants, 0.0)
        return genes.tobytes() + constants.tobytes()

    @property
    def active(self):
        return _active_mask(self.genes, ARITY, self.branching)

    @property
    def n_active(self):
        return int(self.active.sum())

    def copy(self):
        return ExpressionTree(self.genes.copy(), self.constants.copy(), self.depth, self.op_set)

    def evaluate(self, inputs):
        return evaluate_tree(self, inputs)

    def to_expression(self):
        """The active part of the tree as an :py:class:`~multifix.gpgomea.expression.Expr`."""
        from multifix.gpgomea.expression import from_tree
        return from_tree(self)


def random_tree(op_set, depth, rng, full=True, p_grow=0.5, p_constant=0.25):
    """
    Sample a tree on the template of ``depth``.

    Parameters
    ----------
    op_set: OperatorSet
    depth: int
    rng: numpy.random.Generator
    full: bool
        Every internal node holds an operator; otherwise each internal node is
        an operator with probability ``p_grow``.
    p_constant: float
        Probability that a terminal is an ephemeral constant.
    """
    n_nodes, n_internal = template_size(depth, op_set.max_arity)
    terminals = np.where(rng.random(n_nodes) < p_constant, CONST,
                         VAR0 + rng.integers(0, op_set.n_variables, n_nodes))
    operators = rng.choice(op_set.codes, n_nodes)
    use_op = np.zeros(n_nodes, dtype=bool)
    use_op[:n_internal] = True if full else rng.random(n_internal) < p_grow
    use_op[0] = True
    genes = np.where(use_op, operators, terminals)
    pool = np.asarray(op_set.constant_pool)
    constants = np.where(rng.random(n_nodes) < 0.5, rng.choice(pool, n_nodes),
                         rng.uniform(-3.0, 3.0, n_nodes))
    return ExpressionTree(genes, constants, depth, op_set)


def evaluate_tree(tree, inputs):
    """
    Evaluate ``tree`` on every row of ``inputs``.

    Parameters
    ----------
    tree: ExpressionTree
    inputs: numpy.ndarray
        Shape (n, n_variables).

    Returns
    -------
    numpy.ndarray
        Finite float outputs; Boolean-kind roots give 0/1.

    Raises
    ------
    DataError
        If a variable used by the tree has no input column.
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(inputs, dtype=np.float64)))
    active = tree.active
    used = tree.genes[active & (tree.genes >= VAR0)] - VAR0
    if used.size and used.max() >= x.shape[1]:
        raise DataError(f"tree uses variable {tree.op_set.variable_names[used.max()]} but "
                        f"inputs have {x.shape[1]} columns")
    buf = np.zeros((tree.genes.size, x.shape[0]))
    _evaluate(tree.genes, tree.constants, x, tree.branching, active, buf)
    return buf[0].copy()


def predict_classes(outputs, n_classes):
    """Round outputs to the nearest class index and clamp to ``[0, n_classes - 1]``."""
    return np.clip(np.rint(outputs), 0, n_classes - 1).astype(np.int64)


class GpDataset:
    """
    Inputs and targets of one GP run.

    Identical rows are merged and weighted by their count, so binary inputs
    (e.g. fusion distillation) evaluate at most 2^k rows.

    Parameters
    ----------
    x: numpy.ndarray
        Shape (n, n_variables).
    y: numpy.ndarray
        Class indices (classification) or reals (regression).
    task: str
        ``"classification"`` or ``"regression"``.
    n_classes: int
    """

    def __init__(self, x, y, task="classification", n_classes=2, deduplicate=True):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.size == 0:
            raise DataError("GP dataset is empty")
        if x.shape[0] != y.size:
            raise DataError(f"{x.shape[0]} input rows for {y.size} targets")
        if task not in ("classification", "regression"):
            raise ValueError(f"task must be classification or regression, got {task}")
        weights = np.ones(y.size)
        if deduplicate:
            rows, counts = np.unique(np.column_stack([x, y]), axis=0, return_counts=True)
            x, y, weights = rows[:, :-1], rows[:, -1], counts.astype(np.float64)
        self.x = np.ascontiguousarray(x)
        self.task = task
        self.n_classes = n_classes
        self.y = y.astype(np.int64) if task == "classification" else y
        self.weights = weights

    def __len__(self):
        return self.y.size

    @property
    def optimum(self):
        return 1.0 if self.task == "classification" else 0.0


def fitness(tree, dataset):
    """
    Higher-is-better score of ``tree`` on ``dataset``.

    Balanced accuracy of the rounded and clamped outputs for classification,
    negative weighted mean squared error for regression.
    """
    return fitness_of_outputs(evaluate_tree(tree, dataset.x), dataset)


def fitness_of_outputs(outputs, dataset):
    if dataset.task == "classification":
        pred = predict_classes(outputs, dataset.n_classes)
        return float(_weighted_balanced_accuracy(pred, dataset.y, dataset.weights,
                                                 dataset.n_classes))
    err = (outputs - dataset.y) ** 2
    return -float(np.sum(err * dataset.weights) / np.sum(dataset.weights))
