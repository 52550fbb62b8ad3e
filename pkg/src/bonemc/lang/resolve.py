"""Model validation and constant resolution."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from ..errors import ConstantError, ValidationError
from .ast import (Call, Binary, Expr, Ident, ModelAst, Unary, VarDecl,
                  eval_expr, infer_type)

Number = Union[int, float]


def _idents(e: Expr):
    if isinstance(e, Ident):
        yield e
    elif isinstance(e, Unary):
        yield from _idents(e.operand)
    elif isinstance(e, Binary):
        yield from _idents(e.left)
        yield from _idents(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from _idents(a)


def validate_model(ast: ModelAst) -> None:
    """Check the whole-model invariants; raises ValidationError.

    Covers: pairwise-distinct names, declared references, reward labels
    naming real command labels, update locality, bounds on initial values,
    and expression well-typedness at every use site.
    """
    types: dict[str, str] = {}
    owner: dict[str, str] = {}

    def declare(name: str, typ: str, where: str) -> None:
        if name in types:
            raise ValidationError(
                f"duplicate declaration of '{name}' ({where} collides with "
                f"{owner[name]})")
        types[name] = typ
        owner[name] = where

    for c in ast.constants:
        declare(c.name, "num", f"constant (line {c.line})")
    for m in ast.modules:
        declare(m.name, "module", f"module (line {m.line})")
        for v in m.variables:
            declare(v.name, "bool" if v.is_bool else "num",
                    f"variable of module {m.name} (line {v.line})")

    # module names are not usable inside expressions
    expr_types = {n: t for n, t in types.items() if t != "module"}

    const_names = {c.name for c in ast.constants}
    for c in ast.constants:
        if c.expr is None:
            continue
        for ident in _idents(c.expr):
            if ident.name not in const_names:
                raise ValidationError(
                    f"constant '{c.name}' references '{ident.name}', which is "
                    "not a constant")
        infer_type(c.expr, expr_types)

    for m in ast.modules:
        local = {v.name for v in m.variables}
        for v in m.variables:
            if not v.is_bool:
                if not (v.lo <= v.init <= v.hi):
                    raise ValidationError(
                        f"initial value {v.init} of '{v.name}' outside "
                        f"[{v.lo}..{v.hi}]")
                if v.lo > v.hi:
                    raise ValidationError(f"empty range for '{v.name}'")
        for cmd in m.commands:
            if infer_type(cmd.guard, expr_types) != "bool":
                raise ValidationError(
                    f"guard of command at line {cmd.line} is not boolean")
            if infer_type(cmd.rate, expr_types) != "num":
                raise ValidationError(
                    f"rate of command at line {cmd.line} is not numeric")
            seen = set()
            for name, rhs in cmd.updates:
                if name not in local:
                    raise ValidationError(
                        f"command at line {cmd.line} updates '{name}', which "
                        f"is not local to module {m.name}")
                if name in seen:
                    raise ValidationError(
                        f"command at line {cmd.line} updates '{name}' twice")
                seen.add(name)
                want = expr_types[name]
                if infer_type(rhs, expr_types) != want:
                    raise ValidationError(
                        f"update of '{name}' at line {cmd.line} has the wrong "
                        "type")

    labels = {cmd.label for m in ast.modules for cmd in m.commands
              if cmd.label is not None}
    reward_names = set()
    for r in ast.reward_structs:
        if r.name in reward_names:
            raise ValidationError(f"duplicate reward structure '{r.name}'")
        reward_names.add(r.name)
        for item in r.items:
            if item.label not in labels:
                raise ValidationError(
                    f"reward structure '{r.name}' references action "
                    f"'{item.label}', which labels no command")
            if infer_type(item.guard, expr_types) != "bool":
                raise ValidationError(
                    f"reward guard at line {item.line} is not boolean")
            if infer_type(item.value, expr_types) != "num":
                raise ValidationError(
                    f"reward value at line {item.line} is not numeric")


@dataclass(frozen=True)
class VarInfo:
    """One state variable in canonical (declaration) order."""
    name: str
    module: str
    is_bool: bool
    lo: int | None
    hi: int | None
    init: Union[int, bool]


@dataclass(frozen=True)
class ResolvedModel:
    """A validated model with every constant bound to a number.

    Immutable; safe to share across threads.
    """
    ast: ModelAst
    constants: dict[str, Number]
    variables: tuple[VarInfo, ...]

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def initial_state(self) -> tuple:
        return tuple(v.init for v in self.variables)

    def env_for(self, state: tuple) -> dict:
        """Evaluation environment for one state valuation."""
        env = dict(self.constants)
        for v, value in zip(self.variables, state):
            env[v.name] = value
        return env


def resolve_constants(ast: ModelAst,
                      overrides: Mapping[str, Number] | None = None,
                      ) -> ResolvedModel:
    """Bind every constant to a number and return the resolved model.

    Overrides may (and must) fill exactly the constants declared without a
    defining expression; overriding a defined constant is rejected.
    """
    overrides = dict(overrides or {})
    decls = {c.name: c for c in ast.constants}

    for name in overrides:
        if name not in decls:
            raise ConstantError(f"override for unknown constant '{name}'")
        if decls[name].expr is not None:
            raise ConstantError(
                f"constant '{name}' is defined in the model and cannot be "
                "overridden")

    values: dict[str, Number] = {}
    for c in ast.constants:
        if c.expr is None:
            if c.name not in overrides:
                raise ConstantError(
                    f"no value for undefined constant '{c.name}' "
                    "(supply it as an override)")
            values[c.name] = _coerce(c, overrides[c.name])

    pending = [c for c in ast.constants if c.expr is not None]
    while pending:
        progressed = []
        for c in pending:
            if all(i.name in values for i in _idents(c.expr)):
                values[c.name] = _coerce(c, eval_expr(c.expr, values))
                progressed.append(c)
        if not progressed:
            cycle = ", ".join(c.name for c in pending)
            raise ConstantError(f"cyclic constant definitions: {cycle}")
        pending = [c for c in pending if c not in progressed]

    variables = tuple(
        VarInfo(v.name, m.name, v.is_bool, v.lo, v.hi, v.init)
        for m in ast.modules for v in m.variables)
    return ResolvedModel(ast, values, variables)


def _coerce(decl, value) -> Number:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConstantError(f"constant '{decl.name}' must be numeric")
    if decl.ctype == "int":
        if float(value) != int(value):
            raise ConstantError(
                f"constant '{decl.name}' is declared int but equals {value}")
        return int(value)
    return float(value)
