"""Expression trees for symbolic regression: grammar, parser, printer, and a
protected evaluator that is total over the reals.

Grammar (infix, case-insensitive function names, variables x0..x{dim-1}):

    expression := term (('+'|'-') term)*
    term       := unary (('*'|'/') unary)*
    unary      := '-' unary | power
    power      := atom (('^'|'**') unary)?          # right-associative
    atom       := NUMBER | VARIABLE | NAME '(' args ')' | '(' expression ')'

so exponentiation binds tighter than unary minus, which binds tighter than
multiplication and division, which bind tighter than addition and
subtraction. Absolute-value bars are rejected; write abs(...).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

UNARY_OPS = ("log", "sqrt", "abs", "neg", "inv", "sin", "cos", "exp")
BINARY_OPS = ("add", "sub", "mul", "div", "max", "min", "pow")

POW_CLAMP = 1e150


class ExprError(Exception):
    """Base for everything the parser can reject."""


class ParseError(ExprError):
    def __init__(self, position: int, expected: str):
        self.position = position
        self.expected = expected
        super().__init__(f"at position {position}: expected {expected}")


class UnknownVariable(ExprError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown variable {name!r}")


class UnknownFunction(ExprError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"unknown function {name!r}")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]


def node_count(expr: Expr) -> int:
    if isinstance(expr, (Const, Var)):
        return 1
    if isinstance(expr, Unary):
        return 1 + node_count(expr.child)
    return 1 + node_count(expr.left) + node_count(expr.right)


def depth(expr: Expr) -> int:
    if isinstance(expr, (Const, Var)):
        return 1
    if isinstance(expr, Unary):
        return 1 + depth(expr.child)
    return 1 + max(depth(expr.left), depth(expr.right))


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),|])"
    r")"
)

_VAR_SHAPE = re.compile(r"[xX]\d+$")


@dataclass
class _Token:
    kind: str  # number | name | op | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == m.start():
            if text[pos:].strip() == "":
                break
            bad = text[pos:].lstrip()
            raise ParseError(pos, f"a token (got {bad[0]!r})")
        if m.lastgroup == "op" and m.group("op") == "|":
            raise ParseError(m.start("op"), "abs(...) (absolute-value bars are not supported)")
        if m.lastgroup is not None and m.group(m.lastgroup) is not None:
            tokens.append(_Token(m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], dim: int):
        self.tokens = tokens
        self.dim = dim
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ParseError(tok.pos, repr(text))
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expression()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(tok.pos, "end of expression")
        return expr

    def expression(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = "add" if self.advance().text == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = "mul" if self.advance().text == "*" else "div"
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        node = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("^", "**"):
            self.advance()
            return Binary("pow", node, self.unary())
        return node

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            name = tok.text
            lowered = name.lower()
            if self.peek().kind == "op" and self.peek().text == "(":
                if lowered not in UNARY_OPS and lowered not in BINARY_OPS:
                    raise UnknownFunction(name, tok.pos)
                self.advance()
                args = [self.expression()]
                while self.peek().kind == "op" and self.peek().text == ",":
                    self.advance()
                    args.append(self.expression())
                self.expect(")")
                if lowered in UNARY_OPS:
                    if len(args) != 1:
                        raise ParseError(tok.pos, f"1 argument for {lowered} (got {len(args)})")
                    return Unary(lowered, args[0])
                if len(args) != 2:
                    raise ParseError(tok.pos, f"2 arguments for {lowered} (got {len(args)})")
                return Binary(lowered, args[0], args[1])
            if _VAR_SHAPE.fullmatch(name):
                index = int(name[1:])
                if index >= self.dim:
                    raise UnknownVariable(name, tok.pos)
                return Var(index)
            raise UnknownVariable(name, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expression()
            self.expect(")")
            return node
        raise ParseError(tok.pos, "a number, variable, function call or '('")


def parse_expr(text: str, dim: int) -> Expr:
    """Parse infix text into an expression tree over x0..x{dim-1}."""
    if not text.strip():
        raise ParseError(0, "a non-empty expression")
    return _Parser(_tokenize(text), dim).parse()


# ---------------------------------------------------------------------------
# Printer

_LEVEL = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _level(expr: Expr) -> int:
    if isinstance(expr, Binary) and expr.op in _INFIX:
        return _LEVEL[expr.op]
    if isinstance(expr, Unary) and expr.op == "neg":
        return _LEVEL["neg"]
    return 5


def to_text(expr: Expr) -> str:
    """Canonical infix form; reparses to a structurally identical tree."""
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Unary):
        if expr.op == "neg":
            child = to_text(expr.child)
            if _level(expr.child) < _LEVEL["neg"]:
                child = f"({child})"
            return f"-{child}"
        return f"{expr.op}({to_text(expr.child)})"
    if expr.op in ("max", "min"):
        return f"{expr.op}({to_text(expr.left)}, {to_text(expr.right)})"
    lvl = _LEVEL[expr.op]
    left = to_text(expr.left)
    right = to_text(expr.right)
    if expr.op == "pow":
        # right-associative, and tighter than unary minus on the left
        if _level(expr.left) <= lvl:
            left = f"({left})"
        if _level(expr.right) < _LEVEL["neg"]:
            right = f"({right})"
    else:
        # left-associative: same-level right children need parens to keep shape
        if _level(expr.left) < lvl:
            left = f"({left})"
        if _level(expr.right) <= lvl:
            right = f"({right})"
    return f"{left} {_INFIX[expr.op]} {right}"


# ---------------------------------------------------------------------------
# Protected evaluation

@dataclass
class EvalNotes:
    """Counts how often protection rules rewrote an operator's result."""

    fallbacks: int = 0


def _guard(value: float, notes: Optional[EvalNotes]) -> float:
    if not math.isfinite(value):
        if notes is not None:
            notes.fallbacks += 1
        return 0.0
    return value


def _protected_pow(a: float, b: float, notes: Optional[EvalNotes]) -> float:
    try:
        r = a ** b
    except OverflowError:
        sign = -1.0 if (a < 0 and b == int(b) and int(b) % 2 != 0) else 1.0
        if notes is not None:
            notes.fallbacks += 1
        return sign * POW_CLAMP
    except (ValueError, ZeroDivisionError):
        # complex result or 0 raised to a negative power
        if notes is not None:
            notes.fallbacks += 1
        return 0.0
    if isinstance(r, complex) or not math.isfinite(r):
        if notes is not None:
            notes.fallbacks += 1
        return 0.0 if isinstance(r, complex) or math.isnan(r) else math.copysign(POW_CLAMP, r)
    if abs(r) > POW_CLAMP:
        if notes is not None:
            notes.fallbacks += 1
        return math.copysign(POW_CLAMP, r)
    return r


def eval_expr(expr: Expr, row: Sequence[float], notes: Optional[EvalNotes] = None) -> float:
    """Evaluate on one sample row; total by construction.

    Division by zero and inv(0) yield 1, log and sqrt act on magnitudes with
    log(0) = 0, pow is clamped, and any non-finite intermediate becomes 0.
    Protection hits are tallied in `notes` when given.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        return float(row[expr.index])
    if isinstance(expr, Unary):
        x = eval_expr(expr.child, row, notes)
        op = expr.op
        if op == "neg":
            return -x
        if op == "abs":
            return abs(x)
        if op == "inv":
            if x == 0.0:
                if notes is not None:
                    notes.fallbacks += 1
                return 1.0
            return _guard(1.0 / x, notes)
        if op == "log":
            if x == 0.0:
                if notes is not None:
                    notes.fallbacks += 1
                return 0.0
            if x < 0.0 and notes is not None:
                notes.fallbacks += 1
            return _guard(math.log(abs(x)), notes)
        if op == "sqrt":
            if x < 0.0 and notes is not None:
                notes.fallbacks += 1
            return _guard(math.sqrt(abs(x)), notes)
        if op == "sin":
            return _guard(math.sin(x), notes)
        if op == "cos":
            return _guard(math.cos(x), notes)
        if op == "exp":
            try:
                return _guard(math.exp(x), notes)
            except OverflowError:
                if notes is not None:
                    notes.fallbacks += 1
                return 0.0
        raise ValueError(f"unknown unary op {op!r}")
    a = eval_expr(expr.left, row, notes)
    b = eval_expr(expr.right, row, notes)
    op = expr.op
    if op == "add":
        return _guard(a + b, notes)
    if op == "sub":
        return _guard(a - b, notes)
    if op == "mul":
        return _guard(a * b, notes)
    if op == "div":
        if b == 0.0:
            if notes is not None:
                notes.fallbacks += 1
            return 1.0
        return _guard(a / b, notes)
    if op == "max":
        return max(a, b)
    if op == "min":
        return min(a, b)
    if op == "pow":
        return _protected_pow(a, b, notes)
    raise ValueError(f"unknown binary op {op!r}")
