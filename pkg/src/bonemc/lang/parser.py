"""Recursive-descent parser for the guarded-command modeling language.

Grammar (whitespace-insensitive, `//` line comments):

    model      := {const_decl | module | rewards}
    const_decl := "const" ("double"|"int") IDENT ["=" expr] ";"
    module     := "module" IDENT {var_decl} {command} "endmodule"
    var_decl   := IDENT ":" ("[" INT ".." INT "]" | "bool") "init" literal ";"
    command    := "[" [IDENT] "]" expr "->" expr ":" update ";"
    update     := "true" | assign {"&" assign}
    assign     := "(" IDENT "'" "=" expr ")"
    rewards    := "rewards" STRING {"[" IDENT "]" expr ":" expr ";"} "endrewards"

Expression operators, loosest to tightest: `|`, `&`, `!`, comparisons
(`=` `<` `>` `<=` `>=`, non-chaining), `+ -`, `* /`, unary `-`, atoms.
Recognized constructs from the wider PRISM family that this dialect
deliberately omits fail with an "unsupported construct" error.
"""
from __future__ import annotations

from ..errors import ParseError
from .ast import (BoolLit, Binary, Call, Command, ConstDecl, Expr, Ident,
                  ModelAst, ModuleDef, NumLit, RewardItem, RewardStruct,
                  Unary, VarDecl)
from .lexer import Token, tokenize

# Keywords of the full PRISM language that this dialect does not support.
UNSUPPORTED = frozenset({
    "ctmc", "dtmc", "mdp", "pta", "probabilistic", "nondeterministic",
    "stochastic", "formula", "global", "label", "system", "endsystem",
    "player", "endplayer", "init_block", "invariant",
})


class Parser:
    """Token-stream parser; one instance per parse."""

    def __init__(self, tokens: list[Token]):
        self._tokens = tokens
        self._pos = 0

    # ----------------------------------------------------------- primitives

    def _peek(self) -> Token:
        return self._tokens[self._pos]

    def _check(self, *kinds: str) -> bool:
        return self._tokens[self._pos].kind in kinds

    def _advance(self) -> Token:
        tok = self._tokens[self._pos]
        if tok.kind != "EOF":
            self._pos += 1
        return tok

    def _expect(self, *kinds: str) -> Token:
        tok = self._peek()
        if tok.kind in kinds:
            return self._advance()
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise ParseError(f"unexpected {shown!r}", tok.line, tok.col, kinds)

    def at_end(self) -> bool:
        return self._check("EOF")

    # -------------------------------------------------------------- model

    def parse_model(self) -> ModelAst:
        constants: list[ConstDecl] = []
        modules: list[ModuleDef] = []
        rewards: list[RewardStruct] = []
        while not self.at_end():
            tok = self._peek()
            if tok.kind == "const":
                constants.append(self._const_decl())
            elif tok.kind == "module":
                modules.append(self._module())
            elif tok.kind == "rewards":
                rewards.append(self._rewards())
            elif tok.kind == "IDENT" and tok.text in UNSUPPORTED:
                raise ParseError(
                    f"unsupported construct '{tok.text}': this dialect accepts "
                    "only constants, modules, and reward structures",
                    tok.line, tok.col)
            else:
                raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col,
                                 ("const", "module", "rewards"))
        return ModelAst(tuple(constants), tuple(modules), tuple(rewards))

    def _const_decl(self) -> ConstDecl:
        kw = self._expect("const")
        ctype = self._expect("double", "int").kind
        name = self._expect("IDENT").text
        expr = None
        if self._check("="):
            self._advance()
            expr = self.parse_expression()
        self._expect(";")
        return ConstDecl(name, ctype, expr, line=kw.line)

    def _module(self) -> ModuleDef:
        kw = self._expect("module")
        name = self._expect("IDENT").text
        variables: list[VarDecl] = []
        commands: list[Command] = []
        while self._check("IDENT"):
            variables.append(self._var_decl())
        while self._check("["):
            commands.append(self._command())
        self._expect("endmodule")
        return ModuleDef(name, tuple(variables), tuple(commands), line=kw.line)

    def _var_decl(self) -> VarDecl:
        name_tok = self._expect("IDENT")
        self._expect(":")
        if self._check("bool"):
            self._advance()
            self._expect("init")
            init = self._expect("true", "false").kind == "true"
            self._expect(";")
            return VarDecl(name_tok.text, True, None, None, init,
                           line=name_tok.line)
        self._expect("[")
        lo = self._int_literal()
        self._expect("..")
        hi = self._int_literal()
        self._expect("]")
        self._expect("init")
        init = self._int_literal()
        self._expect(";")
        return VarDecl(name_tok.text, False, lo, hi, init, line=name_tok.line)

    def _int_literal(self) -> int:
        neg = False
        if self._check("-"):
            self._advance()
            neg = True
        tok = self._expect("NUMBER")
        if not isinstance(tok.value, int):
            raise ParseError(f"expected an integer, got {tok.text!r}",
                             tok.line, tok.col)
        return -tok.value if neg else tok.value

    def _command(self) -> Command:
        open_tok = self._expect("[")
        label = None
        if self._check("IDENT"):
            label = self._advance().text
        self._expect("]")
        guard = self.parse_expression()
        self._expect("->")
        rate = self.parse_expression()
        self._expect(":")
        updates = self._update()
        self._expect(";")
        return Command(label, guard, rate, updates, line=open_tok.line)

    def _update(self) -> tuple[tuple[str, Expr], ...]:
        if self._check("true"):
            self._advance()
            return ()
        assigns = [self._assign()]
        while self._check("&"):
            self._advance()
            assigns.append(self._assign())
        return tuple(assigns)

    def _assign(self) -> tuple[str, Expr]:
        self._expect("(")
        name = self._expect("IDENT").text
        self._expect("'")
        self._expect("=")
        expr = self.parse_expression()
        self._expect(")")
        return name, expr

    def _rewards(self) -> RewardStruct:
        self._expect("rewards")
        name = self._expect("STRING").value
        items: list[RewardItem] = []
        while self._check("["):
            open_tok = self._advance()
            label = self._expect("IDENT").text
            self._expect("]")
            guard = self.parse_expression()
            self._expect(":")
            value = self.parse_expression()
            self._expect(";")
            items.append(RewardItem(label, guard, value, line=open_tok.line))
        self._expect("endrewards")
        return RewardStruct(name, tuple(items))

    # --------------------------------------------------------- expressions

    def parse_expression(self) -> Expr:
        return self._expr_or()

    def _expr_or(self) -> Expr:
        e = self._expr_and()
        while self._check("|"):
            self._advance()
            e = Binary("|", e, self._expr_and())
        return e

    def _expr_and(self) -> Expr:
        e = self._expr_not()
        while self._check("&"):
            self._advance()
            e = Binary("&", e, self._expr_not())
        return e

    def _expr_not(self) -> Expr:
        if self._check("!"):
            self._advance()
            return Unary("!", self._expr_not())
        return self._expr_cmp()

    def _expr_cmp(self) -> Expr:
        e = self._expr_add()
        if self._check("=", "<", ">", "<=", ">="):
            op = self._advance().kind
            e = Binary(op, e, self._expr_add())
        return e

    def _expr_add(self) -> Expr:
        e = self._expr_mul()
        while self._check("+", "-"):
            op = self._advance().kind
            e = Binary(op, e, self._expr_mul())
        return e

    def _expr_mul(self) -> Expr:
        e = self._expr_unary()
        while self._check("*", "/"):
            op = self._advance().kind
            e = Binary(op, e, self._expr_unary())
        return e

    def _expr_unary(self) -> Expr:
        if self._check("-"):
            self._advance()
            return Unary("-", self._expr_unary())
        return self._expr_atom()

    def _expr_atom(self) -> Expr:
        tok = self._peek()
        if tok.kind == "NUMBER":
            self._advance()
            return NumLit(tok.value)
        if tok.kind in ("true", "false"):
            self._advance()
            return BoolLit(tok.kind == "true")
        if tok.kind == "IDENT":
            self._advance()
            if self._check("("):
                self._advance()
                args = [self.parse_expression()]
                while self._check(","):
                    self._advance()
                    args.append(self.parse_expression())
                self._expect(")")
                return Call(tok.text, tuple(args), line=tok.line, col=tok.col)
            return Ident(tok.text, line=tok.line, col=tok.col)
        if tok.kind == "(":
            self._advance()
            e = self.parse_expression()
            self._expect(")")
            return e
        shown = tok.text if tok.kind != "EOF" else "end of input"
        raise ParseError(f"unexpected {shown!r} in expression",
                         tok.line, tok.col,
                         ("NUMBER", "IDENT", "true", "false", "(", "-", "!"))


def parse_expression(source: str) -> Expr:
    """Parse a standalone expression (no trailing input allowed)."""
    parser = Parser(tokenize(source))
    e = parser.parse_expression()
    if not parser.at_end():
        tok = parser._peek()
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return e
