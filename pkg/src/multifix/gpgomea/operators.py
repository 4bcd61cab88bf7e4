# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Operator inventory of the expression trees.

Operators and terminals share one integer code space: codes below
``CONST`` are operators, ``CONST`` marks an ephemeral constant and
``VAR0 + j`` the input variable ``j``.

All values are floats. Boolean operators threshold their inputs at 0.5 and
return 0 or 1. Every result is passed through :py:func:`sanitize`, so finite
inputs always give finite outputs.
"""
import numpy as np

from multifix.errors import ConfigurationError

ADD, SUB, MUL, DIV, SQ, CUBE, GT, LT, EQ, AND, OR, NOT, ITE, XOR = range(14)
CONST = 14
VAR0 = 15

LIMIT = 1e12
EPSILON = 1e-6
CONSTANT_POOL = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 1.1, 1.4, 1.5, 2.0, 2.5, 3.0)


class Operator:
    """
    One operator.

    Attributes
    ----------
    code: int
    name: str
    arity: int
    kind: str
        ``"numeric"`` or ``"boolean"`` output.
    symbol: str
        Infix token; empty for operators printed as calls.
    """

    def __init__(self, code, name, arity, kind, symbol=""):
        self.code = code
        self.name = name
        self.arity = arity
        self.kind = kind
        self.symbol = symbol

    def __repr__(self):
        return f"Operator({self.name}/{self.arity})"


OPERATORS = {op.code: op for op in (
    Operator(ADD, "add", 2, "numeric", "+"),
    Operator(SUB, "sub", 2, "numeric", "-"),
    Operator(MUL, "mul", 2, "numeric", "*"),
    Operator(DIV, "div", 2, "numeric", "/"),
    Operator(SQ, "sq", 1, "numeric"),
    Operator(CUBE, "cube", 1, "numeric"),
    Operator(GT, "gt", 2, "boolean", ">"),
    Operator(LT, "lt", 2, "boolean", "<"),
    Operator(EQ, "eq", 2, "boolean", "=="),
    Operator(AND, "and", 2, "boolean", "AND"),
    Operator(OR, "or", 2, "boolean", "OR"),
    Operator(NOT, "not", 1, "boolean"),
    Operator(ITE, "ite", 3, "numeric"),
    Operator(XOR, "xor", 2, "boolean", "XOR"),
)}
BY_NAME = {op.name: op for op in OPERATORS.values()}
DEFAULT_OPERATORS = ("add", "sub", "mul", "div", "sq", "cube", "gt", "lt", "eq",
                     "and", "or", "not", "ite")
ARITY = np.array([OPERATORS[c].arity for c in range(CONST)], dtype=np.int64)


def sanitize(values):
    """Replace NaN by 0 and clip to +-1e12."""
    return np.clip(np.nan_to_num(values, nan=0.0, posinf=LIMIT, neginf=-LIMIT), -LIMIT, LIMIT)


def apply(code, *args):
    """
    Vectorised semantics of operator ``code``.

    Parameters
    ----------
    code: int
    args: numpy.ndarray
        One array per operand.
    """
    with np.errstate(all="ignore"):
        match code:
            case 0:
                out = args[0] + args[1]
            case 1:
                out = args[0] - args[1]
            case 2:
                out = args[0] * args[1]
            case 3:
                safe = np.where(args[1] == 0, 1.0, args[1])
                out = np.where(args[1] == 0, 1.0, args[0] / safe)
            case 4:
                out = args[0] * args[0]
            case 5:
                out = args[0] * args[0] * args[0]
            case 6:
                out = args[0] > args[1]
            case 7:
                out = args[0] < args[1]
            case 8:
                out = np.abs(args[0] - args[1]) <= EPSILON
            case 9:
                out = (args[0] > 0.5) & (args[1] > 0.5)
            case 10:
                out = (args[0] > 0.5) | (args[1] > 0.5)
            case 11:
                out = args[0] <= 0.5
            case 12:
                out = np.where(args[0] > 0.5, args[1], args[2])
            case 13:
                out = (args[0] > 0.5) ^ (args[1] > 0.5)
            case _:
                raise ValueError(f"unknown operator code {code}")
        return sanitize(np.asarray(out, dtype=np.float64))


class OperatorSet:
    """
    Operators and terminals available to one GP run.

    Parameters
    ----------
    variable_names: list of str
        One name per input column.
    operators: iterable of str
        Operator names; defaults to every operator except ``xor``.
    allow_xor: bool
        Add ``xor`` to the set.
    boolean_variables: iterable of str
        Variables known to hold 0/1 values (affects simplification only).
    """

    def __init__(self, variable_names, operators=DEFAULT_OPERATORS, allow_xor=False,
                 boolean_variables=()):
        names = list(operators)
        if allow_xor and "xor" not in names:
            names.append("xor")
        unknown = [n for n in names if n not in BY_NAME]
        if unknown:
            raise ConfigurationError(f"unknown operators {unknown}, expected from "
                                     f"{sorted(BY_NAME)}")
        if not names:
            raise ConfigurationError("operator set is empty")
        if not variable_names:
            raise ConfigurationError("at least one input variable is required")
        self.operators = [BY_NAME[n] for n in names]
        self.codes = np.array(sorted(op.code for op in self.operators), dtype=np.int64)
        self.variable_names = list(variable_names)
        self.boolean_variables = set(boolean_variables)
        self.constant_pool = CONSTANT_POOL

    def __repr__(self):
        return f"OperatorSet({[op.name for op in self.operators]}, " \
               f"{len(self.variable_names)} variables)"

    @property
    def n_variables(self):
        return len(self.variable_names)

    @property
    def max_arity(self):
        """Branching factor of the tree template: 3 with if-then-else, else 2."""
        return max(2, max(op.arity for op in self.operators))

    @property
    def n_symbols(self):
        return VAR0 + self.n_variables

    def symbol_name(self, code, constant=0.0):
        if code < CONST:
            return OPERATORS[code].name
        if code == CONST:
            return format_constant(constant)
        return self.variable_names[code - VAR0]


def format_constant(value):
    """
    Shortest text that parses back to exactly ``value``.

    Integral values print without a decimal point; everything else uses
    ``repr``.
    """
    value = float(value)
    if value == 0:
        return "0"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)
