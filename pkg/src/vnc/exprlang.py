"""Scalar expression language for metric entries, potentials, one-forms and forces.

Grammar (loosest to tightest binding)::

    expr   := expr ('+' | '-') expr          left-assoc
            | expr ('*' | '/') expr          left-assoc
            | '-' expr                       prefix
            | expr '^' expr                  right-assoc
            | NAME '(' expr ')'              sin cos tan exp log sqrt abs
            | NAME | NUMBER | '(' expr ')'

Names resolve against a :class:`SymbolTable`: ``q1..qn`` and ``v1..vn`` are
always available, coordinate aliases (``theta``) and their velocities
(``thetadot``) can be declared, and parameters are bound to numbers at parse
time.  ``pi`` is predefined.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from vnc.dual import DomainError, Dual

__all__ = [
    "BinOp",
    "Call",
    "DomainError",
    "EmptyInput",
    "Expr",
    "ExprSyntaxError",
    "FUNCTIONS",
    "Neg",
    "Num",
    "Param",
    "ParseError",
    "SymbolTable",
    "UnknownSymbol",
    "Var",
    "compile_program",
    "eval_dual",
    "evaluate",
    "evaluate_with",
    "parse",
    "slots_used",
    "to_source",
]


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ExprSyntaxError(ParseError):
    pass


class UnknownSymbol(ParseError):
    def __init__(self, name: str, line: int = 1, column: int = 1):
        super().__init__(f"unknown symbol {name!r}", line, column)
        self.name = name


class EmptyInput(ParseError):
    def __init__(self):
        super().__init__("empty expression", 1, 1)


# --------------------------------------------------------------------------
# symbols


@dataclass(frozen=True)
class SymbolTable:
    """Names an expression may reference.

    Slots ``0..n-1`` hold coordinates, ``n..2n-1`` velocities.
    """

    n: int
    coordinates: tuple[str, ...] = ()
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be at least 1")
        if self.coordinates and len(self.coordinates) != self.n:
            raise ValueError("need exactly one name per coordinate")
        names = list(self.coordinates) + list(self.parameters)
        if len(set(names)) != len(names):
            raise ValueError("coordinate and parameter names must be unique")
        object.__setattr__(self, "coordinates", tuple(self.coordinates))
        object.__setattr__(self, "parameters", dict(self.parameters))

    def resolve(self, name: str):
        """Return ``("slot", index)`` or ``("param", value)``, or None."""
        m = re.fullmatch(r"([qv])([1-9][0-9]*)", name)
        if m and int(m.group(2)) <= self.n:
            i = int(m.group(2)) - 1
            return ("slot", i if m.group(1) == "q" else self.n + i)
        if name in self.parameters:
            return ("param", float(self.parameters[name]))
        if name in self.coordinates:
            return ("slot", self.coordinates.index(name))
        if name.endswith("dot") and name[:-3] in self.coordinates:
            return ("slot", self.n + self.coordinates.index(name[:-3]))
        if name == "pi":
            return ("param", math.pi)
        return None


# --------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str
    slot: int


@dataclass(frozen=True)
class Param(Expr):
    name: str
    value: float


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

_BINDING = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_PREFIX_BINDING = 30

# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, tokens: list[_Token], symbols: SymbolTable):
        self.tokens = tokens
        self.pos = 0
        self.symbols = symbols

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.advance()
        if tok.text != text:
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.line, tok.column)
        return tok

    def expression(self, rbp: int = 0) -> Expr:
        left = self.prefix(self.advance())
        while True:
            tok = self.peek()
            lbp = _BINDING.get(tok.text, 0) if tok.kind == "op" else 0
            if lbp <= rbp:
                return left
            self.advance()
            # right-associative power parses its right side one notch looser
            right = self.expression(lbp - 1 if tok.text == "^" else lbp)
            left = BinOp(tok.text, left, right)

    def prefix(self, tok: _Token) -> Expr:
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expression()
                self.expect(")")
                return Call(tok.text, arg)
            if self.peek().text == "(":
                raise UnknownSymbol(tok.text, tok.line, tok.column)
            resolved = self.symbols.resolve(tok.text)
            if resolved is None:
                raise UnknownSymbol(tok.text, tok.line, tok.column)
            kind, val = resolved
            return Var(tok.text, val) if kind == "slot" else Param(tok.text, val)
        if tok.text == "-":
            return Neg(self.expression(_PREFIX_BINDING))
        if tok.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.line, tok.column)


def parse(source: str, symbols: SymbolTable) -> Expr:
    """Parse ``source`` into a validated AST."""
    tokens = _tokenize(source)
    if tokens[0].kind == "end":
        raise EmptyInput()
    parser = _Parser(tokens, symbols)
    expr = parser.expression()
    tail = parser.peek()
    if tail.kind != "end":
        raise ExprSyntaxError(f"unexpected {tail.text!r}", tail.line, tail.column)
    return expr


# --------------------------------------------------------------------------
# printing


def _precedence(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _BINDING[e.op]
    if isinstance(e, Neg):
        return _PREFIX_BINDING
    return 100


def to_source(e: Expr) -> str:
    """Render an AST as text that reparses to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.operand)
        if _precedence(e.operand) <= _PREFIX_BINDING:
            inner = f"({inner})"
        return f"-{inner}"
    p = _BINDING[e.op]
    left, right = to_source(e.left), to_source(e.right)
    lp, rp = _precedence(e.left), _precedence(e.right)
    if e.op == "^":
        if lp <= p:
            left = f"({left})"
        if rp < p or isinstance(e.right, Neg):
            right = f"({right})"
    else:
        if lp < p:
            left = f"({left})"
        if rp <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}"


def slots_used(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.slot}
    if isinstance(e, (Num, Param)):
        return set()
    if isinstance(e, (Neg, Call)):
        return slots_used(e.operand if isinstance(e, Neg) else e.arg)
    return slots_used(e.left) | slots_used(e.right)


# --------------------------------------------------------------------------
# evaluation


def _fpow(a: float, b: float) -> float:
    if a == 0.0 and b < 0.0:
        raise DomainError("zero raised to a negative power")
    if a < 0.0 and b != round(b):
        raise DomainError("negative base with non-integer exponent")
    try:
        return a**b
    except OverflowError as exc:
        raise DomainError("power overflow") from exc


def _fdiv(a: float, b: float) -> float:
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _flog(a: float) -> float:
    if a <= 0.0:
        raise DomainError("log of a nonpositive number")
    return math.log(a)


def _fsqrt(a: float) -> float:
    if a < 0.0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(a)


def _fexp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError as exc:
        raise DomainError("exp overflow") from exc


_FLOAT_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": _fexp,
    "log": _flog,
    "sqrt": _fsqrt,
    "abs": abs,
}


def evaluate_with(e: Expr, env: Sequence):
    """Evaluate with ``env[slot]`` holding floats or :class:`Dual` scalars."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Param):
        return e.value
    if isinstance(e, Var):
        return env[e.slot]
    if isinstance(e, Neg):
        return -evaluate_with(e.operand, env)
    if isinstance(e, Call):
        x = evaluate_with(e.arg, env)
        if isinstance(x, Dual):
            return getattr(x, e.func)()
        return _FLOAT_FUNCS[e.func](x)
    a = evaluate_with(e.left, env)
    b = evaluate_with(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if isinstance(a, Dual) or isinstance(b, Dual):
            return a / b
        return _fdiv(a, b)
    if isinstance(a, Dual) or isinstance(b, Dual):
        return a**b
    return _fpow(a, b)


def _check_point(e: Expr, point) -> np.ndarray:
    point = np.asarray(point, dtype=float).ravel()
    used = slots_used(e)
    if used and max(used) >= len(point):
        raise ValueError(f"point of length {len(point)} does not cover symbol slot {max(used)}")
    return point


def evaluate(e: Expr, point) -> float:
    """Plain float evaluation at ``point`` (coordinates then velocities)."""
    point = _check_point(e, point)
    value = float(evaluate_with(e, [float(x) for x in point]))
    if not math.isfinite(value):
        raise DomainError("non-finite result")
    return value


def eval_dual(e: Expr, point, seed: Sequence[int]) -> Dual:
    """Value and exact partials with respect to the seeded slots."""
    point = _check_point(e, point)
    seed = list(seed)
    k = len(seed)
    env = [Dual.constant(x, k) for x in point]
    for j, slot in enumerate(seed):
        p = np.zeros(k)
        p[j] = 1.0
        env[slot] = Dual(point[slot], p)
    out = evaluate_with(e, env)
    if not isinstance(out, Dual):
        out = Dual.constant(out, k)
    if not np.isfinite(out.value) or not np.all(np.isfinite(out.partials)):
        raise DomainError("non-finite result")
    return out


# --------------------------------------------------------------------------
# bytecode for the integration kernels

OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT, OP_ABS = range(8, 15)

_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_CALL_OPS = dict(zip(FUNCTIONS, range(OP_SIN, OP_ABS + 1)))


def compile_program(e: Expr, consts: list[float]) -> tuple[list[int], list[int], int]:
    """Flatten to postfix ``(ops, args, max_stack_depth)``.

    Constants are appended to ``consts``; ``args`` holds constant or slot
    indices for CONST/VAR and 0 otherwise.
    """
    ops: list[int] = []
    args: list[int] = []

    def emit(node: Expr) -> None:
        if isinstance(node, (Num, Param)):
            consts.append(node.value)
            ops.append(OP_CONST)
            args.append(len(consts) - 1)
        elif isinstance(node, Var):
            ops.append(OP_VAR)
            args.append(node.slot)
        elif isinstance(node, Neg):
            emit(node.operand)
            ops.append(OP_NEG)
            args.append(0)
        elif isinstance(node, Call):
            emit(node.arg)
            ops.append(_CALL_OPS[node.func])
            args.append(0)
        else:
            emit(node.left)
            emit(node.right)
            ops.append(_BIN_OPS[node.op])
            args.append(0)

    peak = _max_depth(e)
    emit(e)
    return ops, args, peak


def _max_depth(e: Expr) -> int:
    if isinstance(e, (Num, Param, Var)):
        return 1
    if isinstance(e, Neg):
        return _max_depth(e.operand)
    if isinstance(e, Call):
        return _max_depth(e.arg)
    return max(_max_depth(e.left), 1 + _max_depth(e.right))
