"""Expression language used inside conditions, actions, equations, and
function bodies: arithmetic, comparisons, boolean logic, and calls.

Operates on the token tuples stored by the parser.  The kernel evaluates
parsed expressions against a value environment plus a function table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ExprError(Exception):
    """Malformed or mis-typed expression; the kernel wraps it per instance."""


BUILTINS = {
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "exp": (1, math.exp),
    "log": (1, math.log),
    "abs": (1, abs),
    "min": (None, min),  # variadic, at least one argument
    "max": (None, max),
}

_CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")
_ADD_OPS = ("+", "-")
_MUL_OPS = ("*", "/")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


class _Reader:
    def __init__(self, tokens: tuple[str, ...]):
        self.toks = tokens
        self.i = 0

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ExprError("unexpected end of expression")
        self.i += 1
        return tok

    def accept(self, *texts: str) -> str | None:
        if self.peek() in texts:
            return self.next()
        return None

    def expect(self, text: str):
        if self.next() != text:
            raise ExprError(f"expected {text!r}")


def parse_expr(tokens: tuple[str, ...]):
    """Parse token text into an expression tree."""
    reader = _Reader(tokens)
    tree = _parse_or(reader)
    if reader.peek() is not None:
        raise ExprError(f"trailing tokens starting at {reader.peek()!r}")
    return tree


def _parse_or(r: _Reader):
    node = _parse_and(r)
    while r.accept("or"):
        node = Binary("or", node, _parse_and(r))
    return node


def _parse_and(r: _Reader):
    node = _parse_not(r)
    while r.accept("and"):
        node = Binary("and", node, _parse_not(r))
    return node


def _parse_not(r: _Reader):
    if r.accept("not"):
        return Unary("not", _parse_not(r))
    return _parse_cmp(r)


def _parse_cmp(r: _Reader):
    node = _parse_add(r)
    op = r.accept(*_CMP_OPS)
    if op:
        node = Binary(op, node, _parse_add(r))
    return node


def _parse_add(r: _Reader):
    node = _parse_mul(r)
    while True:
        op = r.accept(*_ADD_OPS)
        if not op:
            return node
        node = Binary(op, node, _parse_mul(r))


def _parse_mul(r: _Reader):
    node = _parse_unary(r)
    while True:
        op = r.accept(*_MUL_OPS)
        if not op:
            return node
        node = Binary(op, node, _parse_unary(r))


def _parse_unary(r: _Reader):
    if r.accept("-"):
        return Unary("-", _parse_unary(r))
    return _parse_atom(r)


def _parse_atom(r: _Reader):
    tok = r.next()
    if tok == "(":
        node = _parse_or(r)
        r.expect(")")
        return node
    if tok == "true":
        return Bool(True)
    if tok == "false":
        return Bool(False)
    if tok == "inf":
        return Num(math.inf)
    if tok and tok[0] == '"':
        return Str(tok[1:-1])
    if tok and (tok[0].isdigit()):
        try:
            return Num(float(tok))
        except ValueError as exc:
            raise ExprError(f"bad number {tok!r}") from exc
    if tok and (tok[0].isalpha() or tok[0] == "_"):
        if r.peek() == "(":
            r.next()
            args = []
            if r.peek() != ")":
                args.append(_parse_or(r))
                while r.accept(","):
                    args.append(_parse_or(r))
            r.expect(")")
            return Call(tok, tuple(args))
        return Name(tok)
    raise ExprError(f"unexpected token {tok!r}")


def assignment_target(tokens: tuple[str, ...]) -> str | None:
    """`name = ...` at depth 0 -> name; None for bare expressions.

    Rejects `==` and anything fancier than a plain identifier target.
    """
    if len(tokens) >= 2 and tokens[1] == "=" and tokens[0] not in ("(",):
        return tokens[0]
    return None


def split_assignment(tokens: tuple[str, ...]) -> tuple[str, tuple[str, ...]] | None:
    target = assignment_target(tokens)
    if target is None:
        return None
    return target, tokens[2:]


def derivative_target(tokens: tuple[str, ...]) -> tuple[str, tuple[str, ...]] | None:
    """`der ( x ) = rhs` -> (x, rhs tokens); None otherwise."""
    if len(tokens) >= 5 and tokens[0] == "der" and tokens[1] == "(" and tokens[3] == ")" and tokens[4] == "=":
        return tokens[2], tokens[5:]
    return None


def names_and_calls(tokens: tuple[str, ...]) -> tuple[set[str], set[str]]:
    """All plain identifiers and all called symbols in one expression/action."""
    pieces = split_assignment(tokens)
    names: set[str] = set()
    calls: set[str] = set()
    if pieces is not None:
        target, rhs = pieces
        names.add(target)
        tree = parse_expr(rhs)
    else:
        der = derivative_target(tokens)
        if der is not None:
            target, rhs = der
            names.add(target)
            tree = parse_expr(rhs)
        else:
            tokens2 = tokens[1:] if tokens[:1] == ("return",) else tokens
            tree = parse_expr(tokens2)
    _walk(tree, names, calls)
    return names, calls


def _walk(node, names: set[str], calls: set[str]):
    if isinstance(node, Name):
        names.add(node.ident)
    elif isinstance(node, Unary):
        _walk(node.operand, names, calls)
    elif isinstance(node, Binary):
        _walk(node.left, names, calls)
        _walk(node.right, names, calls)
    elif isinstance(node, Call):
        calls.add(node.func)
        for arg in node.args:
            _walk(arg, names, calls)


class Evaluator:
    """Evaluates expression trees against an environment.

    `env` maps identifiers to values; `functions` maps names to X function
    units; `time` is exposed as a read-only builtin name.
    """

    def __init__(self, functions: dict | None = None, max_call_depth: int = 16):
        self.functions = functions or {}
        self.max_call_depth = max_call_depth

    def eval(self, node, env: dict, time: float = 0.0, _depth: int = 0):
        if isinstance(node, (Num, Str, Bool)):
            return node.value
        if isinstance(node, Name):
            if node.ident == "time":
                return time
            try:
                return env[node.ident]
            except KeyError:
                raise ExprError(f"unknown identifier {node.ident!r}") from None
        if isinstance(node, Unary):
            val = self.eval(node.operand, env, time, _depth)
            if node.op == "-":
                self._want_number(val, "unary -")
                return -val
            self._want_bool(val, "not")
            return not val
        if isinstance(node, Binary):
            return self._binary(node, env, time, _depth)
        if isinstance(node, Call):
            return self._call(node, env, time, _depth)
        raise ExprError(f"cannot evaluate {node!r}")

    def _binary(self, node: Binary, env, time, depth):
        op = node.op
        if op in ("and", "or"):
            left = self.eval(node.left, env, time, depth)
            self._want_bool(left, op)
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            right = self.eval(node.right, env, time, depth)
            self._want_bool(right, op)
            return right
        left = self.eval(node.left, env, time, depth)
        right = self.eval(node.right, env, time, depth)
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if op in ("<", "<=", ">", ">="):
            self._want_number(left, op)
            self._want_number(right, op)
            return {"<": left < right, "<=": left <= right, ">": left > right, ">=": left >= right}[op]
        self._want_number(left, op)
        self._want_number(right, op)
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if right == 0:
            raise ExprError("division by zero")
        return left / right

    def _call(self, node: Call, env, time, depth):
        args = [self.eval(a, env, time, depth) for a in node.args]
        if node.func in BUILTINS:
            arity, fn = BUILTINS[node.func]
            if arity is not None and len(args) != arity:
                raise ExprError(f"{node.func}() takes {arity} argument(s), got {len(args)}")
            if arity is None and not args:
                raise ExprError(f"{node.func}() needs at least one argument")
            for a in args:
                self._want_number(a, node.func)
            try:
                return fn(*args)
            except ValueError as exc:
                raise ExprError(f"{node.func}(): {exc}") from exc
        unit = self.functions.get(node.func)
        if unit is None:
            raise ExprError(f"unknown function {node.func!r}")
        if depth >= self.max_call_depth:
            raise ExprError(f"call depth exceeded in {node.func!r}")
        return self._call_function_unit(unit, args, time, depth + 1)

    def _call_function_unit(self, unit, args, time, depth):
        params = unit.parameters
        if len(args) != len(params):
            raise ExprError(f"{unit.name}() takes {len(params)} argument(s), got {len(args)}")
        local = {p.name: v for p, v in zip(params, args)}
        for stmt in unit.body.statements:
            toks = stmt.tokens
            if toks[:1] == ("return",):
                return self.eval(parse_expr(toks[1:]), local, time, depth)
            pieces = split_assignment(toks)
            if pieces is None:
                raise ExprError(f"{unit.name}: statement is neither assignment nor return")
            target, rhs = pieces
            local[target] = self.eval(parse_expr(rhs), local, time, depth)
        raise ExprError(f"{unit.name}: body never returned")

    @staticmethod
    def _want_number(value, op: str):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ExprError(f"{op} needs a number, got {value!r}")

    @staticmethod
    def _want_bool(value, op: str):
        if not isinstance(value, bool):
            raise ExprError(f"{op} needs a boolean, got {value!r}")
