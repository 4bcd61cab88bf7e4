# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Gene-pool optimal mixing.

The mixing loop is jit-compiled. Its random draws come from numba's own
generator, seeded from the caller's ``numpy.random.Generator`` at the start
of every call, so results depend only on the caller's seed.
"""
import logging

import numpy as np
from numba import njit

from multifix.gpgomea.linkage import learn_linkage_tree
from multifix.gpgomea.operators import ARITY, CONST
from multifix.gpgomea.tree import (ExpressionTree, random_tree, template_size, _active_mask,
                                   _evaluate)

logger = logging.getLogger(__name__)


@njit(cache=True)
def _rint(v):
    low = np.floor(v)
    diff = v - low
    if diff > 0.5:
        return low + 1.0
    if diff < 0.5:
        return low
    return low if low % 2.0 == 0.0 else low + 1.0


@njit(cache=True)
def _score(out, y, w, n_classes, classification):
    if not classification:
        err = 0.0
        for i in range(y.size):
            err += w[i] * (out[i] - y[i]) ** 2
        return -err / w.sum()
    correct = np.zeros(n_classes)
    total = np.zeros(n_classes)
    for i in range(y.size):
        label = int(y[i])
        pred = min(max(_rint(out[i]), 0.0), n_classes - 1.0)
        total[label] += w[i]
        if int(pred) == label:
            correct[label] += w[i]
    score = 0.0
    present = 0
    for c in range(n_classes):
        if total[c] > 0:
            score += correct[c] / total[c]
            present += 1
    return score / present if present else 0.0


@njit(cache=True)
def _mix_individual(g, c, f, donor_genes, donor_consts, items, offsets, x, y, w, n_classes,
                    classification, branching, buf, budget):
    """GOM on one recipient; returns the new genes, constants, fitness and evaluations used."""
    n_subsets = offsets.size - 1
    evaluations = 0
    for s in np.random.permutation(n_subsets):
        if budget >= 0 and evaluations >= budget:
            break
        donor = np.random.randint(0, donor_genes.shape[0])
        tg = g.copy()
        tc = c.copy()
        changed = False
        for t in range(offsets[s], offsets[s + 1]):
            pos = items[t]
            tg[pos] = donor_genes[donor, pos]
            tc[pos] = donor_consts[donor, pos]
            if tg[pos] != g[pos] or (tg[pos] == CONST and tc[pos] != c[pos]):
                changed = True
        if not changed:
            continue
        active = _active_mask(tg, ARITY, branching)
        relevant = False
        for t in range(offsets[s], offsets[s + 1]):
            pos = items[t]
            if active[pos] and (tg[pos] != g[pos] or (tg[pos] == CONST and tc[pos] != c[pos])):
                relevant = True
        if not relevant:
            g = tg
            c = tc
            continue
        _evaluate(tg, tc, x, branching, active, buf)
        evaluations += 1
        nf = _score(buf[0], y, w, n_classes, classification)
        if nf >= f:
            g = tg
            c = tc
            f = nf
    return g, c, f, evaluations


@njit(cache=True)
def _forced_improvement(g, c, f, elite_g, elite_c, items, offsets, x, y, w, n_classes,
                        classification, branching, buf, budget):
    """Mix subsets from the elite until fitness strictly improves; returns the flag too."""
    n_subsets = offsets.size - 1
    evaluations = 0
    for s in np.random.permutation(n_subsets):
        if budget >= 0 and evaluations >= budget:
            break
        tg = g.copy()
        tc = c.copy()
        changed = False
        for t in range(offsets[s], offsets[s + 1]):
            pos = items[t]
            tg[pos] = elite_g[pos]
            tc[pos] = elite_c[pos]
            if tg[pos] != g[pos] or (tg[pos] == CONST and tc[pos] != c[pos]):
                changed = True
        if not changed:
            continue
        active = _active_mask(tg, ARITY, branching)
        _evaluate(tg, tc, x, branching, active, buf)
        evaluations += 1
        nf = _score(buf[0], y, w, n_classes, classification)
        if nf > f:
            return tg, tc, nf, evaluations, True
    return g, c, f, evaluations, False


@njit(cache=True)
def _mix_population(seed, genes, consts, fitness, items, offsets, x, y, w, n_classes,
                    classification, branching, budget, forced):
    np.random.seed(seed)
    out_g = genes.copy()
    out_c = consts.copy()
    out_f = fitness.copy()
    buf = np.zeros((genes.shape[1], x.shape[0]))
    elite = np.argmax(fitness)
    used = 0
    for i in range(genes.shape[0]):
        remaining = budget - used if budget >= 0 else -1
        if budget >= 0 and remaining <= 0:
            break
        g, c, f, n = _mix_individual(genes[i].copy(), consts[i].copy(), fitness[i], genes, consts,
                                     items, offsets, x, y, w, n_classes, classification,
                                     branching, buf, remaining)
        used += n
        if forced and f <= fitness[i] and not (budget >= 0 and used >= budget):
            remaining = budget - used if budget >= 0 else -1
            g, c, f, n, improved = _forced_improvement(g, c, f, genes[elite], consts[elite],
                                                       items, offsets, x, y, w, n_classes,
                                                       classification, branching, buf, remaining)
            used += n
            if not improved and f < fitness[elite]:
                g = genes[elite].copy()
                c = consts[elite].copy()
                f = fitness[elite]
        out_g[i] = g
        out_c[i] = c
        out_f[i] = f
    return out_g, out_c, out_f, used


@njit(cache=True)
def _mix_single(seed, g, c, f, genes, consts, items, offsets, x, y, w, n_classes,
                classification, branching):
    np.random.seed(seed)
    buf = np.zeros((g.size, x.shape[0]))
    return _mix_individual(g, c, f, genes, consts, items, offsets, x, y, w, n_classes,
                           classification, branching, buf, -1)


@njit(cache=True)
def _force_single(seed, g, c, f, elite_g, elite_c, items, offsets, x, y, w, n_classes,
                  classification, branching):
    np.random.seed(seed)
    buf = np.zeros((g.size, x.shape[0]))
    return _forced_improvement(g, c, f, elite_g, elite_c, items, offsets, x, y, w, n_classes,
                               classification, branching, buf, -1)


def _flatten(fos):
    subsets = fos.mixing_subsets()
    items = np.concatenate(subsets).astype(np.int64) if subsets else np.zeros(0, np.int64)
    offsets = np.concatenate([[0], np.cumsum([len(s) for s in subsets])]).astype(np.int64)
    return items, offsets


def _data_args(dataset):
    return (dataset.x, dataset.y.astype(np.float64), dataset.weights, dataset.n_classes,
            dataset.task == "classification")


def gom_step(recipient, population, fos, dataset, rng):
    """
    Gene-pool optimal mixing of one tree.

    For every subset of ``fos`` except the root, in random order, the
    recipient takes that subset's symbols from a random member of
    ``population``; the change is kept unless fitness worsens.

    Parameters
    ----------
    recipient: ExpressionTree
    population: list of ExpressionTree
    fos: LinkageTree
    dataset: GpDataset
    rng: numpy.random.Generator

    Returns
    -------
    tree: ExpressionTree
    fitness: float
        Never below the recipient's fitness.
    """
    from multifix.gpgomea.tree import fitness as tree_fitness
    genes = np.stack([t.genes for t in population])
    consts = np.stack([t.constants for t in population])
    items, offsets = _flatten(fos)
    g, c, f, _ = _mix_single(int(rng.integers(2 ** 31)), recipient.genes.copy(),
                             recipient.constants.copy(), tree_fitness(recipient, dataset),
                             genes, consts, items, offsets, *_data_args(dataset),
                             recipient.branching)
    return ExpressionTree(g, c, recipient.depth, recipient.op_set), float(f)


def forced_improvement(recipient, elite, fos, dataset, rng):
    """
    Mix ``elite`` into ``recipient`` subset by subset until fitness strictly improves.

    Returns
    -------
    tree: ExpressionTree
    fitness: float
    improved: bool
        False when no subset of the elite helped; the recipient is then
        returned unchanged.
    """
    from multifix.gpgomea.tree import fitness as tree_fitness
    items, offsets = _flatten(fos)
    g, c, f, _, improved = _force_single(int(rng.integers(2 ** 31)), recipient.genes.copy(),
                                         recipient.constants.copy(),
                                         tree_fitness(recipient, dataset), elite.genes,
                                         elite.constants, items, offsets, *_data_args(dataset),
                                         recipient.branching)
    return ExpressionTree(g, c, recipient.depth, recipient.op_set), float(f), bool(improved)


class Population:
    """
    One GOM population on a fixed template.

    Half of the initial trees are full, half grown. With
    ``forced_improvements`` a member whose GOM pass did not raise its fitness
    is mixed again with the generation's elite as the only donor, stopping at
    the first strict improvement; if none comes, the member becomes a copy of
    the elite.

    Attributes
    ----------
    best_fitness: float
        Non-decreasing across generations.
    generations: int
    evaluations: int
    alive: bool
    """

    def __init__(self, size, depth, op_set, dataset, rng, p_constant=0.25, p_grow=0.5,
                 forced_improvements=True):
        self.depth = depth
        self.forced_improvements = forced_improvements
        self.op_set = op_set
        self.dataset = dataset
        self.rng = rng
        self.branching = op_set.max_arity
        self.n_nodes, _ = template_size(depth, self.branching)
        trees = [random_tree(op_set, depth, rng, full=i % 2 == 0, p_grow=p_grow,
                             p_constant=p_constant) for i in range(size)]
        self.genes = np.stack([t.genes for t in trees])
        self.constants = np.stack([t.constants for t in trees])
        from multifix.gpgomea.tree import fitness_of_outputs, evaluate_tree
        self.fitness = np.array([fitness_of_outputs(evaluate_tree(t, dataset.x), dataset)
                                 for t in trees])
        self.evaluations = size
        self.generations = 0
        self.alive = True
        self.best_fitness = float(self.fitness.max())
        self.history = [self.best_fitness]

    def __len__(self):
        return self.genes.shape[0]

    def best(self):
        """Fittest tree; ties go to the fewest active nodes, then the lowest index."""
        top = np.flatnonzero(self.fitness == self.fitness.max())
        sizes = [int(_active_mask(self.genes[i], ARITY, self.branching).sum()) for i in top]
        i = top[int(np.argmin(sizes))]
        return ExpressionTree(self.genes[i].copy(), self.constants[i].copy(), self.depth,
                              self.op_set), float(self.fitness[i])

    def converged(self):
        return bool(np.all(self.genes == self.genes[0]) and
                    np.all(self.constants == self.constants[0]))

    def generation(self, budget=-1):
        """
        Learn a linkage tree and apply GOM to every member.

        Returns the number of evaluations used.
        """
        fos = learn_linkage_tree(self.genes, self.op_set.n_symbols)
        items, offsets = _flatten(fos)
        self.genes, self.constants, self.fitness, used = _mix_population(
            int(self.rng.integers(2 ** 31)), self.genes, self.constants, self.fitness, items,
            offsets, *_data_args(self.dataset), self.branching, budget, self.forced_improvements)
        best = float(self.fitness.max())
        if best < self.best_fitness:
            raise RuntimeError(f"population best fell from {self.best_fitness} to {best}")
        self.best_fitness = best
        self.generations += 1
        self.evaluations += used
        self.history.append(best)
        return used
