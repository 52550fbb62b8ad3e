"""Guarded-command modeling language: lexer, parser, AST, resolution."""
from __future__ import annotations

from .ast import (BoolLit, Binary, Call, Command, ConstDecl, Expr, Ident,
                  ModelAst, ModuleDef, NumLit, RewardItem, RewardStruct,
                  Unary, VarDecl, eval_expr, format_expr, format_model,
                  infer_type)
from .lexer import Token, tokenize
from .parser import Parser, parse_expression
from .resolve import (ResolvedModel, VarInfo, resolve_constants,
                      validate_model)

__all__ = [
    "BoolLit", "Binary", "Call", "Command", "ConstDecl", "Expr", "Ident",
    "ModelAst", "ModuleDef", "NumLit", "Parser", "ResolvedModel",
    "RewardItem", "RewardStruct", "Token", "Unary", "VarDecl", "VarInfo",
    "eval_expr", "format_expr", "format_model", "infer_type", "parse_model",
    "parse_expression", "resolve_constants", "tokenize", "validate_model",
]


def parse_model(source: str) -> ModelAst:
    """Parse and validate a model; total over the bundled model file."""
    ast = Parser(tokenize(source)).parse_model()
    validate_model(ast)
    return ast
