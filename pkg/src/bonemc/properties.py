"""Property language: reward queries, filters, and derived estimators.

Concrete syntax, one property per line, `//` comments:

    R{"boneFormed"}=?[C<=1460]
    bd_series(0:1460:10)
    bd_series(0:1460:10; plus="boneFormed", minus="boneResorbed")
    rapid_change(0.25, 100, 0:1450:50)
    diff_quotient(100, 0:1450:50)
    filter(print, R{"boneFormed"}=?[C<=365] < 5.0)
    filter(print, bd(365), Oc>2 & pb=true)

`bd(t)` / `bd_series` are the net-density forms: the difference between
the cumulative "plus" and "minus" reward structures (bound by convention
to boneFormed/boneResorbed, overridable via the plus=/minus= keywords).
All time points are evaluated exactly by the transient engine; nothing
is interpolated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EvalError, ParseError
from .lang import Expr, Parser, eval_expr, format_expr
from .lang.lexer import Token, tokenize
from .statespace import Ctmc
from .transient import DEFAULT_TRUNCATION, _reward_sweep

DEFAULT_PLUS = "boneFormed"
DEFAULT_MINUS = "boneResorbed"

# Alarm thresholds attached to difference-quotient results: sustained
# change rates outside this band are flagged as pathological.
ALARM_QUOTIENT = 0.0025

_CMP_OPS = ("<", "<=", ">", ">=", "=")


# ------------------------------------------------------------------ AST

@dataclass(frozen=True)
class RewardQuery:
    reward: str
    horizon: float
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class DensityAt:
    t: float
    plus: str = DEFAULT_PLUS
    minus: str = DEFAULT_MINUS
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class FilterPrint:
    inner: Union[RewardQuery, DensityAt]
    cmp: Optional[tuple[str, float]]        # e.g. ("<", 5.0)
    pred: Optional[Expr]                    # None means all states
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class DensitySeries:
    grid: tuple[float, ...]
    plus: str = DEFAULT_PLUS
    minus: str = DEFAULT_MINUS
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class RapidChange:
    k: float
    dt: float
    grid: tuple[float, ...]
    plus: str = DEFAULT_PLUS
    minus: str = DEFAULT_MINUS
    source: str = field(default="", compare=False)


@dataclass(frozen=True)
class DiffQuotient:
    dt: float
    grid: tuple[float, ...]
    plus: str = DEFAULT_PLUS
    minus: str = DEFAULT_MINUS
    source: str = field(default="", compare=False)


PropertyAst = Union[RewardQuery, FilterPrint, DensitySeries, RapidChange,
                    DiffQuotient]


# -------------------------------------------------------------- parsing

class _PropParser(Parser):
    """Extends the expression parser with the property forms."""

    def parse_property(self, source: str) -> PropertyAst:
        tok = self._peek()
        if tok.kind == "IDENT" and tok.text == "R":
            prop = self._reward_query(source)
        elif tok.kind == "IDENT" and tok.text == "filter":
            prop = self._filter(source)
        elif tok.kind == "IDENT" and tok.text in ("bd_series", "rapid_change",
                                                  "diff_quotient"):
            prop = self._extension(tok.text, source)
        else:
            raise ParseError(
                f"unknown property form {tok.text!r}", tok.line, tok.col,
                ("R{...}=?[C<=T]", "filter", "bd_series", "rapid_change",
                 "diff_quotient"))
        if not self.at_end():
            trailing = self._peek()
            raise ParseError(f"trailing input {trailing.text!r}",
                             trailing.line, trailing.col)
        return prop

    def _reward_query(self, source: str) -> RewardQuery:
        self._expect("IDENT")           # R
        self._expect("{")
        name = self._expect("STRING").value
        self._expect("}")
        self._expect("=?")
        self._expect("[")
        c = self._expect("IDENT")
        if c.text != "C":
            raise ParseError("only cumulative-reward bounds are supported",
                             c.line, c.col, ("C",))
        self._expect("<=")
        horizon = self._number()
        self._expect("]")
        return RewardQuery(name, horizon, source=source)

    def _filter(self, source: str) -> FilterPrint:
        self._advance()                 # filter
        self._expect("(")
        op = self._expect("IDENT")
        if op.text != "print":
            raise ParseError(f"unsupported filter operator '{op.text}'",
                             op.line, op.col, ("print",))
        self._expect(",")
        inner = self._inner_query()
        cmp = None
        if self._check(*_CMP_OPS):
            cmp_op = self._advance().kind
            cmp = (cmp_op, self._number())
        pred = None
        if self._check(","):
            self._advance()
            pred = self.parse_expression()
        self._expect(")")
        return FilterPrint(inner, cmp, pred, source=source)

    def _inner_query(self) -> Union[RewardQuery, DensityAt]:
        tok = self._peek()
        if tok.kind == "IDENT" and tok.text == "R":
            return self._reward_query("")
        if tok.kind == "IDENT" and tok.text == "bd":
            self._advance()
            self._expect("(")
            t = self._number()
            plus, minus = self._kwargs_tail()
            self._expect(")")
            return DensityAt(t, plus, minus)
        raise ParseError("filter body must be a reward query or bd(t)",
                         tok.line, tok.col, ("R", "bd"))

    def _extension(self, name: str, source: str) -> PropertyAst:
        self._advance()
        self._expect("(")
        if name == "bd_series":
            grid = self._grid()
            plus, minus = self._kwargs_tail()
            self._expect(")")
            return DensitySeries(grid, plus, minus, source=source)
        if name == "rapid_change":
            k = self._number()
            self._expect(",")
            dt = self._number()
            self._expect(",")
            grid = self._grid()
            plus, minus = self._kwargs_tail()
            self._expect(")")
            if k <= 0:
                raise ParseError("rapid_change threshold k must be positive")
            if dt <= 0:
                raise ParseError("rapid_change window must be positive")
            return RapidChange(k, dt, grid, plus, minus, source=source)
        # diff_quotient
        dt = self._number()
        self._expect(",")
        grid = self._grid()
        plus, minus = self._kwargs_tail()
        self._expect(")")
        if dt <= 0:
            raise ParseError("diff_quotient window must be positive")
        return DiffQuotient(dt, grid, plus, minus, source=source)

    def _kwargs_tail(self) -> tuple[str, str]:
        plus, minus = DEFAULT_PLUS, DEFAULT_MINUS
        if not self._check(";"):
            return plus, minus
        self._advance()
        while True:
            key = self._expect("IDENT")
            self._expect("=")
            value = self._expect("STRING").value
            if key.text == "plus":
                plus = value
            elif key.text == "minus":
                minus = value
            else:
                raise ParseError(f"unknown keyword '{key.text}'",
                                 key.line, key.col, ("plus", "minus"))
            if not self._check(","):
                break
            self._advance()
        return plus, minus

    def _number(self) -> float:
        neg = False
        if self._check("-"):
            self._advance()
            neg = True
        tok = self._expect("NUMBER")
        return -float(tok.value) if neg else float(tok.value)

    def _grid(self) -> tuple[float, ...]:
        t0 = self._number()
        self._expect(":")
        t1 = self._number()
        self._expect(":")
        step = self._number()
        if step <= 0:
            raise ParseError(f"grid step must be positive, got {step}")
        if t1 < t0 or t0 < 0:
            raise ParseError(f"invalid grid {t0}:{t1}:{step}")
        out = []
        t = t0
        while t <= t1 + 1e-9:
            out.append(round(t, 9))
            t += step
        return tuple(out)


def parse_properties(text: str) -> list[PropertyAst]:
    """Parse a property file: one property per line, `//` comments."""
    props: list[PropertyAst] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        tokens = tokenize(line, first_line=lineno)
        props.append(_PropParser(tokens).parse_property(line))
    return props


# ------------------------------------------------------------ evaluation

@dataclass(frozen=True)
class ScalarResult:
    kind = "scalar"
    source: str
    value: float


@dataclass(frozen=True)
class SeriesResult:
    kind = "series"
    source: str
    grid: tuple[float, ...]
    values: np.ndarray
    alarm_low: Optional[float] = None
    alarm_high: Optional[float] = None


@dataclass(frozen=True)
class BoolTableResult:
    kind = "bool_table"
    source: str
    grid: tuple[float, ...]
    values: tuple[bool, ...]


@dataclass(frozen=True)
class StateTableResult:
    kind = "state_table"
    source: str
    var_names: tuple[str, ...]
    rows: tuple[tuple[int, tuple, Union[float, bool]], ...]

    def summary(self) -> dict:
        """min/max/avg/count over the table (booleans count as 0/1)."""
        vals = [float(v) for (_i, _st, v) in self.rows]
        if not vals:
            return {"count": 0, "min": None, "max": None, "avg": None}
        return {"count": len(vals), "min": min(vals), "max": max(vals),
                "avg": sum(vals) / len(vals)}


EvalResult = Union[ScalarResult, SeriesResult, BoolTableResult,
                   StateTableResult]


def _density_series(ctmc: Ctmc, times: Sequence[float], plus: str, minus: str,
                    truncation: float) -> np.ndarray:
    plus_vals, _ = _reward_sweep(ctmc, plus, times, truncation=truncation)
    minus_vals, _ = _reward_sweep(ctmc, minus, times, truncation=truncation)
    return plus_vals - minus_vals


def eval_density_series(ctmc: Ctmc, grid: Sequence[float],
                        plus: str = DEFAULT_PLUS, minus: str = DEFAULT_MINUS,
                        truncation: float = DEFAULT_TRUNCATION,
                        source: str = "") -> SeriesResult:
    """Net density (cumulative plus minus cumulative minus) on a grid."""
    grid = tuple(float(t) for t in grid)
    values = _density_series(ctmc, grid, plus, minus, truncation)
    return SeriesResult(source, grid, values)


def eval_rapid_change(ctmc: Ctmc, k: float, dt: float, grid: Sequence[float],
                      plus: str = DEFAULT_PLUS, minus: str = DEFAULT_MINUS,
                      truncation: float = DEFAULT_TRUNCATION,
                      source: str = "") -> BoolTableResult:
    """True at t when the net density drops by more than k over [t, t+dt].

    True results flag alarming rapid negative remodeling.
    """
    if k <= 0 or dt <= 0:
        raise EvalError("rapid_change needs k > 0 and dt > 0")
    grid = tuple(float(t) for t in grid)
    needed = sorted({*grid, *(t + dt for t in grid)})
    vals = _density_series(ctmc, needed, plus, minus, truncation)
    at = dict(zip(needed, vals))
    flags = tuple(bool(at[t + dt] + k < at[t]) for t in grid)
    return BoolTableResult(source, grid, flags)


def eval_diff_quotient(ctmc: Ctmc, dt: float, grid: Sequence[float],
                       plus: str = DEFAULT_PLUS, minus: str = DEFAULT_MINUS,
                       truncation: float = DEFAULT_TRUNCATION,
                       source: str = "") -> SeriesResult:
    """Change rate (density(t+dt) - density(t)) / dt on the grid."""
    if dt <= 0:
        raise EvalError("diff_quotient needs dt > 0")
    grid = tuple(float(t) for t in grid)
    needed = sorted({*grid, *(t + dt for t in grid)})
    vals = _density_series(ctmc, needed, plus, minus, truncation)
    at = dict(zip(needed, vals))
    quotients = np.array([(at[t + dt] - at[t]) / dt for t in grid])
    return SeriesResult(source, grid, quotients,
                        alarm_low=-ALARM_QUOTIENT, alarm_high=ALARM_QUOTIENT)


_CMP_FUNCS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "=": lambda a, b: a == b,
}


def eval_filter_print(ctmc: Ctmc, inner: Union[RewardQuery, DensityAt],
                      cmp: Optional[tuple[str, float]] = None,
                      pred: Optional[Expr] = None,
                      truncation: float = DEFAULT_TRUNCATION,
                      source: str = "") -> StateTableResult:
    """Evaluate `inner` from EVERY state satisfying `pred`, in one sweep."""
    if isinstance(inner, RewardQuery):
        _s, full = _reward_sweep(ctmc, inner.reward, [],
                                 full_at=[inner.horizon],
                                 truncation=truncation)
        vec = full[float(inner.horizon)]
    else:
        _s, fplus = _reward_sweep(ctmc, inner.plus, [], full_at=[inner.t],
                                  truncation=truncation)
        _s, fminus = _reward_sweep(ctmc, inner.minus, [], full_at=[inner.t],
                                   truncation=truncation)
        vec = fplus[float(inner.t)] - fminus[float(inner.t)]

    rows = []
    for i in range(ctmc.n_states):
        if pred is not None:
            keep = eval_expr(pred, ctmc.env_for(i))
            if not isinstance(keep, bool):
                raise EvalError("filter predicate must be boolean")
            if not keep:
                continue
        value: Union[float, bool] = float(vec[i])
        if cmp is not None:
            value = bool(_CMP_FUNCS[cmp[0]](value, cmp[1]))
        rows.append((i, ctmc.states[i], value))
    return StateTableResult(source, ctmc.var_names, tuple(rows))


def evaluate(ctmc: Ctmc, prop: PropertyAst,
             truncation: float = DEFAULT_TRUNCATION) -> EvalResult:
    """Evaluate one parsed property against a built CTMC."""
    if isinstance(prop, RewardQuery):
        values, _ = _reward_sweep(ctmc, prop.reward, [prop.horizon],
                                  truncation=truncation)
        return ScalarResult(prop.source, float(values[0]))
    if isinstance(prop, DensitySeries):
        return eval_density_series(ctmc, prop.grid, prop.plus, prop.minus,
                                   truncation, source=prop.source)
    if isinstance(prop, RapidChange):
        return eval_rapid_change(ctmc, prop.k, prop.dt, prop.grid, prop.plus,
                                 prop.minus, truncation, source=prop.source)
    if isinstance(prop, DiffQuotient):
        return eval_diff_quotient(ctmc, prop.dt, prop.grid, prop.plus,
                                  prop.minus, truncation, source=prop.source)
    if isinstance(prop, FilterPrint):
        return eval_filter_print(ctmc, prop.inner, prop.cmp, prop.pred,
                                 truncation, source=prop.source)
    raise EvalError(f"cannot evaluate property {prop!r}")


def result_csv_rows(result: EvalResult) -> tuple[list[str], list[list]]:
    """(header, rows) pairs for CSV serialization of any result kind."""
    if isinstance(result, ScalarResult):
        return ["value"], [[repr(result.value)]]
    if isinstance(result, SeriesResult):
        return ["t", "value"], [[repr(float(t)), repr(float(v))]
                                for t, v in zip(result.grid, result.values)]
    if isinstance(result, BoolTableResult):
        return ["t", "value"], [[repr(float(t)), "true" if v else "false"]
                                for t, v in zip(result.grid, result.values)]
    header = ["state", *result.var_names, "value"]
    rows = []
    for (i, st, v) in result.rows:
        cells = [str(i)]
        cells += [str(int(x)) if isinstance(x, bool) else str(x) for x in st]
        cells.append("true" if v is True else "false" if v is False
                     else repr(float(v)))
        rows.append(cells)
    return header, rows


def result_json_payload(result: EvalResult) -> dict:
    """JSON-friendly payload for the combined report."""
    if isinstance(result, ScalarResult):
        return {"kind": result.kind, "value": result.value}
    if isinstance(result, SeriesResult):
        payload = {"kind": result.kind,
                   "grid": [float(t) for t in result.grid],
                   "values": [float(v) for v in result.values]}
        if result.alarm_low is not None:
            payload["alarm_low"] = result.alarm_low
            payload["alarm_high"] = result.alarm_high
        return payload
    if isinstance(result, BoolTableResult):
        return {"kind": result.kind,
                "grid": [float(t) for t in result.grid],
                "values": [bool(v) for v in result.values]}
    return {"kind": result.kind,
            "vars": list(result.var_names),
            "rows": [[i, [int(x) if isinstance(x, bool) else x for x in st],
                      v] for (i, st, v) in result.rows],
            "summary": result.summary()}
