# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Interleaved multistart scheme (IMS) and the multi-seed front end.

Population ``k`` has ``population_size * 2**k`` members. Population ``k + 1``
runs one generation for every ``interleave`` generations of population ``k``;
a population that has stopped passes its turn on. A population is killed
once a larger one has caught up with its best fitness.
"""
import logging

import numpy as np

from multifix.gpgomea.gom import Population
from multifix.gpgomea.operators import OperatorSet
from multifix.parameters import GomeaConfig

logger = logging.getLogger(__name__)


class ImsResult:
    """
    Outcome of one IMS run.

    Attributes
    ----------
    tree: ExpressionTree
    fitness: float
    depth: int
    seed: int
    evaluations: int
    history: list of tuple
        ``(depth, population index, generation, best fitness)`` per generation.
    """

    def __init__(self, tree, fitness, depth, seed, evaluations, history):
        self.tree = tree
        self.fitness = fitness
        self.depth = depth
        self.seed = seed
        self.evaluations = evaluations
        self.history = history

    def __repr__(self):
        return f"ImsResult(fitness={self.fitness:.4f}, depth={self.depth}, '{self.tree}')"

    @property
    def n_active(self):
        return self.tree.n_active


def _rank(result):
    return -result.fitness, result.tree.n_active, result.depth


class _Scheme:
    """IMS on one template depth."""

    def __init__(self, dataset, op_set, depth, config, rng, budget):
        self.dataset = dataset
        self.op_set = op_set
        self.depth = depth
        self.config = config
        self.rng = rng
        self.budget = budget
        self.populations = []
        self.evaluations = 0
        self.history = []

    def remaining(self):
        return -1 if self.budget is None else max(self.budget - self.evaluations, 0)

    def running(self, population):
        return population.alive and population.generations < self.config.generations

    def best_fitness(self):
        return max((p.best_fitness for p in self.populations), default=-np.inf)

    def finished(self):
        if self.budget is not None and self.evaluations >= self.budget:
            return True
        if self.populations and self.best_fitness() >= self.dataset.optimum:
            return True
        return (len(self.populations) == self.config.max_populations
                and not any(self.running(p) for p in self.populations))

    def step(self, k=0):
        if k == len(self.populations):
            if k < self.config.max_populations:
                size = self.config.population_size * 2 ** k
                logger.debug("depth %d: starting population %d of size %d", self.depth, k, size)
                population = Population(size, self.depth, self.op_set, self.dataset, self.rng,
                                        self.config.p_constant, self.config.p_grow)
                self.evaluations += population.evaluations
                self.populations.append(population)
            return
        population = self.populations[k]
        if self.running(population):
            self.evaluations += population.generation(self.remaining())
            if population.converged():
                population.alive = False
            self.history.append((self.depth, k, population.generations,
                                 population.best_fitness))
        if not self.running(population) or population.generations % self.config.interleave == 0:
            self.step(k + 1)

    def kill_overtaken(self):
        for i, small in enumerate(self.populations):
            if small.alive and any(large.alive and large.best_fitness >= small.best_fitness
                                   for large in self.populations[i + 1:]):
                logger.debug("depth %d: population %d overtaken", self.depth, i)
                small.alive = False

    def run(self):
        while not self.finished():
            self.step()
            self.kill_overtaken()
        trees = [p.best() for p in self.populations]
        tree, fitness = max(trees, key=lambda tf: (tf[1], -tf[0].n_active))
        return tree, fitness


def run_ims(dataset, op_set, config=None, depths=None, rng_seed=0):
    """
    Evolve an expression with IMS at every template depth.

    Parameters
    ----------
    dataset: GpDataset
    op_set: OperatorSet
    config: GomeaConfig or dict, optional
    depths: list of int, optional
        Overrides ``config.depths``.
    rng_seed: int

    Returns
    -------
    ImsResult
        Best tree over all depths: highest fitness, then fewest active nodes,
        then the smaller depth. When the evaluation budget runs out the best
        tree found so far is returned.
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    depths = sorted(depths or config.depths)
    results = []
    evaluations = 0
    history = []
    for depth, seq in zip(depths, np.random.SeedSequence(rng_seed).spawn(len(depths))):
        budget = None
        if config.max_evaluations is not None:
            budget = max(config.max_evaluations - evaluations, 0)
            if budget == 0:
                break
        scheme = _Scheme(dataset, op_set, depth, config, np.random.default_rng(seq), budget)
        tree, fitness = scheme.run()
        evaluations += scheme.evaluations
        history.extend(scheme.history)
        results.append(ImsResult(tree, fitness, depth, rng_seed, scheme.evaluations,
                                 scheme.history))
        logger.debug("seed %d depth %d: fitness %.4f, '%s'", rng_seed, depth, fitness, tree)
        if fitness >= dataset.optimum:
            break
    best = min(results, key=_rank)
    return ImsResult(best.tree, best.fitness, best.depth, rng_seed, evaluations, history)


def make_operator_set(variable_names, config=None, boolean_variables=()):
    """Operator set for ``config``: without ``ite`` unless ``use_ite``, with ``xor`` if allowed."""
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    names = ["add", "sub", "mul", "div", "sq", "cube", "gt", "lt", "eq", "and", "or", "not"]
    if config.use_ite:
        names.append("ite")
    return OperatorSet(variable_names, names, allow_xor=config.allow_xor,
                       boolean_variables=boolean_variables)


def fit_multiseed(dataset, op_set, config=None, n_seeds=None, base_seed=0):
    """
    Run :py:func:`run_ims` once per seed and keep the best run.

    Parameters
    ----------
    dataset: GpDataset
    op_set: OperatorSet
    config: GomeaConfig or dict, optional
    n_seeds: int, optional
        Defaults to ``config.n_seeds``.
    base_seed: int
        Seeds are ``base_seed .. base_seed + n_seeds - 1``.

    Returns
    -------
    best: ImsResult
        Highest fitness, then fewest active nodes, then the lowest seed.
    per_seed: list of float
        Fitness of every seed, in seed order.
    """
    config = config if isinstance(config, GomeaConfig) else GomeaConfig(config)
    n_seeds = n_seeds or config.n_seeds
    runs = [run_ims(dataset, op_set, config, rng_seed=base_seed + s) for s in range(n_seeds)]
    best = min(runs, key=lambda r: (-r.fitness, r.tree.n_active, r.seed))
    logger.info("best of %d seeds: fitness %.4f (seed %d), '%s'", n_seeds, best.fitness,
                best.seed, best.tree)
    return best, [r.fitness for r in runs]
