# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Expression syntax trees: simplification, printing and parsing.

Two text forms are produced and read back:

* canonical infix, fully parenthesised with the outer pair removed, e.g.
  ``(3 - T1) - (2 * I1)``;
* prefix, one s-expression per node, e.g. ``(sub (sub 3.0 T1) (mul 2.0 I1))``.

Expression semantics are those of :py:func:`multifix.gpgomea.operators.apply`,
so an expression evaluates exactly like the tree it was taken from.
"""
import re

import numpy as np

from multifix.errors import DataError
from multifix.gpgomea.operators import (OPERATORS, BY_NAME, CONST, VAR0, ADD, SUB, MUL, DIV,
                                        SQ, CUBE, GT, LT, EQ, AND, OR, NOT, ITE, XOR,
                                        apply, format_constant)

INFIX_PRECEDENCE = {"OR": 1, "XOR": 2, "AND": 3, ">": 4, "<": 4, "==": 4,
                    "+": 5, "-": 5, "*": 6, "/": 6, "^": 7}
SYMBOL_CODES = {"OR": OR, "XOR": XOR, "AND": AND, ">": GT, "<": LT, "==": EQ,
                "+": ADD, "-": SUB, "*": MUL, "/": DIV}
KEYWORDS = {"AND", "OR", "XOR", "NOT", "IF"}


class Expr:
    """Base class of expression nodes."""

    kind = "numeric"

    def __eq__(self, other):
        return isinstance(other, Expr) and self.prefix() == other.prefix()

    def __hash__(self):
        return hash(self.prefix())

    def __repr__(self):
        return f"{type(self).__name__}({self.infix()})"

    def __str__(self):
        return self.infix()

    def infix(self):
        """Canonical infix text."""
        text = self._infix()
        if isinstance(self, Op) and (self.op.symbol or self.code in (SQ, CUBE)):
            return text[1:-1]
        return text

    def size(self):
        return 1 + sum(child.size() for child in self.children)

    def variables(self):
        found = set()
        for child in self.children:
            found |= child.variables()
        return found

    @property
    def children(self):
        return ()

    def evaluate(self, inputs):
        """
        Evaluate on an (n, n_variables) matrix; returns a float vector.
        """
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        return np.broadcast_to(self._evaluate(x), (x.shape[0],)).astype(np.float64)


class Const(Expr):
    def __init__(self, value):
        self.value = float(value)

    def _infix(self):
        return format_constant(self.value)

    def prefix(self):
        return repr(self.value)

    def _evaluate(self, x):
        return np.full(x.shape[0], self.value)


class Var(Expr):
    def __init__(self, name, index, boolean=False):
        self.name = name
        self.index = index
        self.kind = "boolean" if boolean else "numeric"

    def _infix(self):
        return self.name

    def prefix(self):
        return self.name

    def variables(self):
        return {self.name}

    def _evaluate(self, x):
        if self.index >= x.shape[1]:
            raise DataError(f"variable {self.name} needs input column {self.index}, inputs "
                            f"have {x.shape[1]}")
        return x[:, self.index]


class Op(Expr):
    def __init__(self, code, *children):
        self.code = code
        self.op = OPERATORS[code]
        if len(children) != self.op.arity:
            raise ValueError(f"{self.op.name} takes {self.op.arity} operands, got {len(children)}")
        self._children = tuple(children)

    @property
    def children(self):
        return self._children

    @property
    def kind(self):
        if self.code == ITE:
            both = all(c.kind == "boolean" for c in self._children[1:])
            return "boolean" if both else "numeric"
        return self.op.kind

    def _infix(self):
        args = [c._infix() for c in self._children]
        if self.op.symbol:
            return f"({args[0]} {self.op.symbol} {args[1]})"
        if self.code in (SQ, CUBE):
            return f"({args[0]} ^ {2 if self.code == SQ else 3})"
        bare = [c.infix() for c in self._children]
        if self.code == NOT:
            return f"NOT({bare[0]})"
        return f"IF({bare[0]}, {bare[1]}, {bare[2]})"

    def prefix(self):
        return f"({self.op.name} {' '.join(c.prefix() for c in self._children)})"

    def _evaluate(self, x):
        return apply(self.code, *[np.broadcast_to(c._evaluate(x), (x.shape[0],))
                                  for c in self._children])


def from_tree(tree):
    """Expression of the active part of an :py:class:`ExpressionTree`."""
    names = tree.op_set.variable_names
    boolean = tree.op_set.boolean_variables

    def build(i):
        gene = int(tree.genes[i])
        if gene == CONST:
            return Const(tree.constants[i])
        if gene >= VAR0:
            name = names[gene - VAR0]
            return Var(name, gene - VAR0, name in boolean)
        first = tree.branching * i + 1
        return Op(gene, *[build(first + c) for c in range(OPERATORS[gene].arity)])
    return build(0)


def _is_const(expr, value=None):
    return isinstance(expr, Const) and (value is None or expr.value == value)


def simplify(expr):
    """
    Semantics-preserving rewrite: constant folding, identity elements
    (``x + 0``, ``x * 1``, ``x / 1``), absorbing zeros, self comparisons and
    double negation.

    ``NOT(NOT(x))`` becomes ``x`` for a Boolean-kind ``x`` and ``x > 0.5``
    otherwise.
    """
    if not isinstance(expr, Op):
        return expr
    kids = [simplify(c) for c in expr.children]
    code = expr.code
    if all(isinstance(k, Const) for k in kids):
        return Const(apply(code, *[np.array([k.value]) for k in kids])[0])
    a = kids[0]
    b = kids[1] if len(kids) > 1 else None
    match code:
        case 0:
            if _is_const(b, 0.0):
                return a
            if _is_const(a, 0.0):
                return b
        case 1:
            if _is_const(b, 0.0):
                return a
            if a == b:
                return Const(0.0)
        case 2:
            if _is_const(b, 1.0):
                return a
            if _is_const(a, 1.0):
                return b
            if _is_const(a, 0.0) or _is_const(b, 0.0):
                return Const(0.0)
        case 3:
            if _is_const(b, 1.0):
                return a
            if _is_const(b, 0.0) or a == b:
                return Const(1.0)
        case 6 | 7:
            if a == b:
                return Const(0.0)
        case 8:
            if a == b:
                return Const(1.0)
        case 9 | 10:
            if a == b and a.kind == "boolean":
                return a
        case 11:
            if isinstance(a, Op) and a.code == NOT:
                inner = a.children[0]
                return inner if inner.kind == "boolean" else Op(GT, inner, Const(0.5))
        case 12:
            if isinstance(a, Const):
                return kids[1] if a.value > 0.5 else kids[2]
            if kids[1] == kids[2]:
                return kids[1]
    return Op(code, *kids)


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
                    r"|(==|[-+*/^<>(),])|([A-Za-z_][A-Za-z0-9_.]*))")


def _tokenize(text):
    tokens, pos = [], 0
    text = text.strip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            raise ValueError(f"cannot parse {text!r} at position {pos}")
        number, symbol, name = match.groups()
        tokens.append(("num", number) if number else ("sym", symbol) if symbol
                      else ("name", name))
        pos = match.end()
    return tokens


def _resolve(name, variable_names, boolean_variables):
    if variable_names is not None:
        if name not in variable_names:
            raise ValueError(f"unknown variable {name}, expected one of {variable_names}")
        return Var(name, list(variable_names).index(name), name in boolean_variables)
    found = re.fullmatch(r"x_?(\d+)", name)
    if found is None:
        raise ValueError(f"variable {name} needs an explicit variable list")
    return Var(name, int(found.group(1)), name in boolean_variables)


class _Parser:
    def __init__(self, tokens, variable_names, boolean_variables):
        self.tokens = tokens
        self.pos = 0
        self.variable_names = variable_names
        self.boolean_variables = set(boolean_variables)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, expected=None):
        token = self.peek()
        if token[0] is None or (expected is not None and token[1] != expected):
            raise ValueError(f"expected {expected or 'a token'} at token {self.pos}, "
                             f"got {token[1]}")
        self.pos += 1
        return token

    def binary_symbol(self):
        kind, value = self.peek()
        if kind == "sym" and value in INFIX_PRECEDENCE:
            return value
        if kind == "name" and value in ("AND", "OR", "XOR"):
            return value
        return None

    def expression(self, min_precedence=1):
        left = self.operand()
        while True:
            symbol = self.binary_symbol()
            if symbol is None or INFIX_PRECEDENCE[symbol] < min_precedence:
                return left
            self.take()
            if symbol == "^":
                exponent = self.operand()
                if not _is_const(exponent) or exponent.value not in (2.0, 3.0):
                    raise ValueError("only the exponents 2 and 3 are supported")
                left = Op(SQ if exponent.value == 2.0 else CUBE, left)
            else:
                right = self.expression(INFIX_PRECEDENCE[symbol] + 1)
                left = Op(SYMBOL_CODES[symbol], left, right)

    def operand(self):
        kind, value = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "sym" and value == "-":
            if self.peek()[0] == "num":
                return Const(-float(self.take()[1]))
            return Op(MUL, Const(-1.0), self.operand())
        if kind == "sym" and value == "(":
            inner = self.expression()
            self.take(")")
            return inner
        if kind == "name" and value == "NOT":
            self.take("(")
            inner = self.expression()
            self.take(")")
            return Op(NOT, inner)
        if kind == "name" and value == "IF":
            self.take("(")
            cond = self.expression()
            self.take(",")
            then = self.expression()
            self.take(",")
            other = self.expression()
            self.take(")")
            return Op(ITE, cond, then, other)
        if kind == "name" and value not in KEYWORDS:
            return _resolve(value, self.variable_names, self.boolean_variables)
        raise ValueError(f"unexpected token {value!r}")


def parse_infix(text, variable_names=None, boolean_variables=()):
    """
    Read an infix expression.

    Standard precedence applies when parentheses are omitted, so both the
    canonical form and hand-written text such as ``3 - T - 2*I`` parse.

    Parameters
    ----------
    text: str
    variable_names: list of str, optional
        Column order of the inputs; without it only ``x<j>`` names are allowed.
    boolean_variables: iterable of str

    Raises
    ------
    ValueError
        On a syntax error or an unknown variable.
    """
    parser = _Parser(_tokenize(text), variable_names, boolean_variables)
    expr = parser.expression()
    if parser.pos != len(parser.tokens):
        raise ValueError(f"unexpected trailing text in {text!r}")
    return expr


def parse_prefix(text, variable_names=None, boolean_variables=()):
    """Read the s-expression form written by :py:meth:`Expr.prefix`."""
    tokens = re.findall(r"\(|\)|[^\s()]+", text)
    pos = 0

    def node():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError(f"unexpected end of {text!r}")
        token = tokens[pos]
        pos += 1
        if token == "(":
            name = tokens[pos]
            pos += 1
            if name not in BY_NAME:
                raise ValueError(f"unknown operator {name}")
            kids = []
            while tokens[pos] != ")":
                kids.append(node())
            pos += 1
            return Op(BY_NAME[name].code, *kids)
        try:
            return Const(float(token))
        except ValueError:
            return _resolve(token, variable_names, boolean_variables)

    expr = node()
    if pos != len(tokens):
        raise ValueError(f"unexpected trailing text in {text!r}")
    return expr


def simplify_and_print(tree_or_expr):
    """Simplified canonical infix string of a tree or expression."""
    expr = tree_or_expr if isinstance(tree_or_expr, Expr) else from_tree(tree_or_expr)
    return simplify(expr).infix()
