"""Tokenizer shared by the model and property languages."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ParseError

KEYWORDS = frozenset({
    "const", "double", "int", "bool", "module", "endmodule", "init",
    "rewards", "endrewards", "true", "false",
})

_TOKEN_RE = re.compile(
    r"""
      (?P<SKIP>[ \t\r]+|//[^\n]*)
    | (?P<NEWLINE>\n)
    | (?P<NUMBER>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
    | (?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<STRING>"[^"\n]*")
    | (?P<OP><=|>=|->|\.\.|=\?|[][(){}:;,=<>&|!+\-*/'?])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str           # 'IDENT', 'NUMBER', 'STRING', 'EOF', a keyword, or the operator text
    text: str
    line: int
    col: int
    value: object = field(default=None, compare=False)


def tokenize(source: str, first_line: int = 1) -> list[Token]:
    """Tokenize source text; raises ParseError on any unrecognized character."""
    tokens: list[Token] = []
    line, line_start = first_line, 0
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}",
                             line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        pos = m.end()
        if kind == "SKIP":
            continue
        if kind == "NEWLINE":
            line += 1
            line_start = pos
            continue
        if kind == "NUMBER":
            value = int(text) if re.fullmatch(r"\d+", text) else float(text)
            tokens.append(Token("NUMBER", text, line, col, value))
        elif kind == "IDENT":
            if text in KEYWORDS:
                tokens.append(Token(text, text, line, col))
            else:
                tokens.append(Token("IDENT", text, line, col, text))
        elif kind == "STRING":
            tokens.append(Token("STRING", text, line, col, text[1:-1]))
        else:
            tokens.append(Token(text, text, line, col))
    tokens.append(Token("EOF", "", line, n - line_start + 1))
    return tokens
