"""
Symbolic-expression engine: fixed-template trees, linkage learning,
gene-pool optimal mixing and the interleaved multistart scheme.
"""
from multifix.gpgomea.operators import (OPERATORS, DEFAULT_OPERATORS, CONSTANT_POOL, Operator,
                                        OperatorSet, apply, sanitize)
from multifix.gpgomea.tree import (ExpressionTree, GpDataset, evaluate_tree, fitness,
                                   predict_classes, random_tree, template_size)
from multifix.gpgomea.expression import (Expr, Const, Var, Op, from_tree, parse_infix,
                                         parse_prefix, simplify, simplify_and_print)
from multifix.gpgomea.linkage import LinkageTree, learn_linkage_tree
from multifix.gpgomea.gom import Population, forced_improvement, gom_step
from multifix.gpgomea.ims import ImsResult, fit_multiseed, make_operator_set, run_ims
