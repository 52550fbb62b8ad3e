"""AST node types, expression evaluation, type checking, pretty printing.

All nodes are frozen dataclasses: structural equality is used by the
round-trip tests, and immutability makes parsed models safe to share
across threads. Source positions are excluded from equality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from ..errors import EvalError, ValidationError

Value = Union[int, float, bool]


# ---------------------------------------------------------------- expressions

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class NumLit(Expr):
    value: Union[int, float]


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Ident(Expr):
    name: str
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str                     # '-' or '!'
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str                     # + - * / = < > <= >= & |
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str                   # only 'pow' is defined
    args: tuple[Expr, ...]
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


_CMP_OPS = {"=", "<", ">", "<=", ">="}


def eval_expr(e: Expr, env: Mapping[str, Value]) -> Value:
    """Evaluate an expression against a name->value environment.

    Pure and deterministic. Raises EvalError for division by zero and for
    pow with a negative base and fractional exponent.
    """
    if isinstance(e, NumLit):
        return e.value
    if isinstance(e, BoolLit):
        return e.value
    if isinstance(e, Ident):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound identifier '{e.name}'") from None
    if isinstance(e, Unary):
        v = eval_expr(e.operand, env)
        return (not v) if e.op == "!" else -v
    if isinstance(e, Binary):
        l = eval_expr(e.left, env)
        r = eval_expr(e.right, env)
        op = e.op
        if op == "+":
            return l + r
        if op == "-":
            return l - r
        if op == "*":
            return l * r
        if op == "/":
            if r == 0:
                raise EvalError("division by zero")
            return l / r
        if op == "&":
            return bool(l) and bool(r)
        if op == "|":
            return bool(l) or bool(r)
        if op == "=":
            return l == r
        if op == "<":
            return l < r
        if op == ">":
            return l > r
        if op == "<=":
            return l <= r
        if op == ">=":
            return l >= r
        raise EvalError(f"unknown operator '{op}'")
    if isinstance(e, Call):
        base, expo = (eval_expr(a, env) for a in e.args)
        try:
            return math.pow(base, expo)
        except ValueError:
            raise EvalError(
                f"pow({base}, {expo}): negative base with fractional exponent"
            ) from None
    raise EvalError(f"cannot evaluate {type(e).__name__}")


def infer_type(e: Expr, types: Mapping[str, str]) -> str:
    """Infer 'num' or 'bool' for an expression; raises ValidationError on a mismatch.

    `types` maps identifier names to 'num' or 'bool'.
    """
    if isinstance(e, NumLit):
        return "num"
    if isinstance(e, BoolLit):
        return "bool"
    if isinstance(e, Ident):
        try:
            return types[e.name]
        except KeyError:
            raise ValidationError(
                f"reference to undeclared identifier '{e.name}'"
                + (f" at line {e.line}, column {e.col}" if e.line else "")
            ) from None
    if isinstance(e, Unary):
        t = infer_type(e.operand, types)
        want = "bool" if e.op == "!" else "num"
        if t != want:
            raise ValidationError(f"operator '{e.op}' needs a {want} operand")
        return want
    if isinstance(e, Binary):
        lt = infer_type(e.left, types)
        rt = infer_type(e.right, types)
        op = e.op
        if op in ("+", "-", "*", "/"):
            if lt != "num" or rt != "num":
                raise ValidationError(f"operator '{op}' needs numeric operands")
            return "num"
        if op in ("&", "|"):
            if lt != "bool" or rt != "bool":
                raise ValidationError(f"operator '{op}' needs boolean operands")
            return "bool"
        if op == "=":
            if lt != rt:
                raise ValidationError("'=' compares two numbers or two booleans")
            return "bool"
        if op in _CMP_OPS:
            if lt != "num" or rt != "num":
                raise ValidationError(f"operator '{op}' needs numeric operands")
            return "bool"
        raise ValidationError(f"unknown operator '{op}'")
    if isinstance(e, Call):
        if e.func != "pow":
            raise ValidationError(f"unknown function '{e.func}'")
        if len(e.args) != 2:
            raise ValidationError("pow takes exactly two arguments")
        for a in e.args:
            if infer_type(a, types) != "num":
                raise ValidationError("pow arguments must be numeric")
        return "num"
    raise ValidationError(f"cannot type {type(e).__name__}")


# expression precedence levels used by the pretty printer
_LEVEL = {"|": 1, "&": 2, "=": 4, "<": 4, ">": 4, "<=": 4, ">=": 4,
          "+": 5, "-": 5, "*": 6, "/": 6}


def format_expr(e: Expr, parent_level: int = 0) -> str:
    """Render an expression; reparsing the result gives an equal tree."""
    if isinstance(e, NumLit):
        return repr(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, Unary):
        return e.op + format_expr(e.operand, 7)
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    lvl = _LEVEL[e.op]
    # binary operators parse left-associative, so a right operand at the
    # same level must be parenthesized to keep the tree shape
    s = f"{format_expr(e.left, lvl)} {e.op} {format_expr(e.right, lvl + 1)}"
    return f"({s})" if lvl < parent_level else s


# ------------------------------------------------------------- model elements

@dataclass(frozen=True)
class VarDecl:
    name: str
    is_bool: bool
    lo: Optional[int]           # None for booleans
    hi: Optional[int]
    init: Value
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Command:
    label: Optional[str]        # None = unlabeled (asynchronous)
    guard: Expr
    rate: Expr
    updates: tuple[tuple[str, Expr], ...]   # empty for the literal `true` update
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ModuleDef:
    name: str
    variables: tuple[VarDecl, ...]
    commands: tuple[Command, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ConstDecl:
    name: str
    ctype: str                  # 'double' or 'int'
    expr: Optional[Expr]        # None = must be supplied by override
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RewardItem:
    label: str
    guard: Expr
    value: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RewardStruct:
    name: str
    items: tuple[RewardItem, ...]


@dataclass(frozen=True)
class ModelAst:
    constants: tuple[ConstDecl, ...]
    modules: tuple[ModuleDef, ...]
    reward_structs: tuple[RewardStruct, ...]

    def module(self, name: str) -> ModuleDef:
        for m in self.modules:
            if m.name == name:
                return m
        raise KeyError(name)


def format_model(ast: ModelAst) -> str:
    """Pretty-print a model; parsing the output reproduces an equal AST."""
    out = []
    for c in ast.constants:
        rhs = f" = {format_expr(c.expr)}" if c.expr is not None else ""
        out.append(f"const {c.ctype} {c.name}{rhs};")
    for m in ast.modules:
        out.append("")
        out.append(f"module {m.name}")
        for v in m.variables:
            if v.is_bool:
                init = "true" if v.init else "false"
                out.append(f"  {v.name} : bool init {init};")
            else:
                out.append(f"  {v.name} : [{v.lo}..{v.hi}] init {v.init!r};")
        for cm in m.commands:
            label = cm.label or ""
            if cm.updates:
                upd = " & ".join(f"({n}'={format_expr(e)})" for n, e in cm.updates)
            else:
                upd = "true"
            out.append(f"  [{label}] {format_expr(cm.guard)} -> "
                       f"{format_expr(cm.rate)} : {upd};")
        out.append("endmodule")
    for r in ast.reward_structs:
        out.append("")
        out.append(f'rewards "{r.name}"')
        for it in r.items:
            out.append(f"  [{it.label}] {format_expr(it.guard)} : "
                       f"{format_expr(it.value)};")
        out.append("endrewards")
    return "\n".join(out) + "\n"
