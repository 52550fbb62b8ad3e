"""Clinical estimator layer: scores, flags, and the diagnosis combinator.

Three estimator flags are computed from a patient record (measured or
model-synthesized):

    a - low bone mineral density (standardized t-score at or below a
        threshold; -2.5 by default, the usual clinical convention)
    b - rapid decrease between visits (same semantics as the model-side
        rapid-change property, applied to measured values)
    c - abnormal variability (detrended variance above a threshold, or a
        rescaled-range Hurst estimate outside the configured band)

plus two external comorbidity flags, d (diabetes) and e (thalassemia).
Rule combinations of the flags produce diagnosis strings; all thresholds
live in DiagnosticConfig, never at call sites.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EvalError, ValidationError
from .lang import eval_expr, parse_expression

FLAG_NAMES = ("a", "b", "c", "d", "e")

RISK, SEVERE = 1, 2

# (expression over flag names, diagnosis string, severity class)
BUILTIN_RULES: tuple[tuple[str, str, int], ...] = (
    ("a | b", "osteoporosis or progression to osteoporosis", RISK),
    ("a & b", "severe osteoporosis with loss of calcium", SEVERE),
    ("a & c", "severe decrease of general metabolic functions due to "
              "important infection", SEVERE),
    ("b & c", "infection (osteomielites) and/or cancer", SEVERE),
    ("d & b", "great risk of progressive osteoporosis", RISK),
    ("e & b", "great risk of osteoporosis", RISK),
)


@dataclass(frozen=True)
class ReferenceStats:
    """Reference-population BMD parameters for standardized scores."""
    mean_young_adult: float
    sd_young_adult: float
    mean_age_matched: float
    sd_age_matched: float


@dataclass(frozen=True)
class PatientRecord:
    """Visit history plus reference parameters and comorbidities."""
    visits: tuple[tuple[float, float], ...]     # (time in days, bmd)
    comorbidities: frozenset[str] = frozenset()
    reference: ReferenceStats = ReferenceStats(0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        times = [t for t, _ in self.visits]
        if any(b >= a for a, b in zip(times[1:], times)):
            raise ValidationError("visit times must be strictly increasing")
        if self.reference.sd_young_adult <= 0 or \
                self.reference.sd_age_matched <= 0:
            raise ValidationError("reference standard deviations must be > 0")

    @property
    def bmd_values(self) -> np.ndarray:
        return np.array([b for _, b in self.visits])


@dataclass(frozen=True)
class DiagnosticConfig:
    """Thresholds and user rules; defaults are declared artifact policy."""
    t_score_cutoff: float = -2.5        # flag a: t_score <= cutoff
    drop_k: float = 0.25                # flag b: drop threshold
    drop_dt: float = 100.0              # flag b: window in days
    variance_cutoff: float = 1.0        # flag c: detrended variance above
    hurst_band: tuple[float, float] = (0.4, 0.6)
    min_hurst_samples: int = 16
    user_rules: tuple[tuple[str, str, int], ...] = ()


@dataclass(frozen=True)
class EstimatorFlags:
    a: bool
    b: bool
    c: bool
    d: bool = False
    e: bool = False
    t_score: float = float("nan")
    z_score: float = float("nan")
    max_drop: float = float("nan")
    variance: float = float("nan")
    hurst: float = float("nan")

    def as_env(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c,
                "d": self.d, "e": self.e}


@dataclass(frozen=True)
class DiagnosisReport:
    flags: EstimatorFlags
    fired_rules: tuple[tuple[str, str], ...]    # (rule expression, diagnosis)
    severity: int                               # 0 none, 1 risk, 2 severe


def score_bmd(bmd: float, reference: ReferenceStats) -> tuple[float, float]:
    """(t_score, z_score): standard deviations from the reference means."""
    if reference.sd_young_adult <= 0 or reference.sd_age_matched <= 0:
        raise ValidationError("reference standard deviations must be > 0")
    t = (bmd - reference.mean_young_adult) / reference.sd_young_adult
    z = (bmd - reference.mean_age_matched) / reference.sd_age_matched
    return t, z


def rate_flag(record: PatientRecord, dt: float, k: float,
              ) -> tuple[float, bool]:
    """(max_drop, flag): largest decrease across visit windows of width ~dt.

    For each visit i the closest later visit to time t_i + dt is matched
    (nearest-visit matching); the drop over that window is
    bmd_i - bmd_j, and the flag fires when any drop exceeds k. This is
    the rapid-change property applied to measured values.
    """
    if len(record.visits) < 2:
        raise ValidationError("rate estimation needs at least two visits")
    if dt <= 0 or k <= 0:
        raise EvalError("rate_flag needs dt > 0 and k > 0")
    times = [t for t, _ in record.visits]
    values = [b for _, b in record.visits]
    max_drop = 0.0
    for i, t0 in enumerate(times[:-1]):
        target = t0 + dt
        j = min(range(i + 1, len(times)), key=lambda j: abs(times[j] - target))
        max_drop = max(max_drop, values[i] - values[j])
    return max_drop, max_drop > k


def rs_hurst(series: Sequence[float]) -> float:
    """Classical rescaled-range Hurst estimate.

    Non-overlapping blocks at power-of-two window sizes; the estimate is
    the log-log slope of the mean R/S against window size. Roughly 0.5
    for uncorrelated noise, near 1 for an integrated (random-walk)
    signal at these lengths.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 16:
        raise ValidationError("Hurst estimation needs at least 16 samples")
    min_window = 8 if n >= 64 else 4
    sizes = []
    w = min_window
    while w <= n // 2:
        sizes.append(w)
        w *= 2
    log_w, log_rs = [], []
    for w in sizes:
        ratios = []
        for b in range(n // w):
            seg = x[b * w:(b + 1) * w]
            z = np.cumsum(seg - seg.mean())
            r = float(z.max() - z.min())
            s = float(seg.std())
            if s > 0.0 and r > 0.0:
                ratios.append(r / s)
        if ratios:
            log_w.append(np.log(w))
            log_rs.append(np.log(np.mean(ratios)))
    if len(log_w) < 2:
        raise ValidationError(
            "series is too uniform for a rescaled-range estimate")
    slope = np.polyfit(log_w, log_rs, 1)[0]
    return float(slope)


# Detrended variance below this floor is numerical residue of the linear
# fit, not signal; no Hurst estimate is attempted beneath it.
VARIANCE_FLOOR = 1e-18


def variability_flag(series: Union[PatientRecord, Sequence[float]],
                     config: DiagnosticConfig = DiagnosticConfig(),
                     ) -> tuple[float, Optional[float], bool]:
    """(variance, hurst, flag) for a BMD series.

    Both estimates work on the linearly detrended series: a monotone
    decline is the rate estimator's business, while this flag watches
    fluctuation structure. The Hurst estimate is skipped (None) for
    series shorter than the configured minimum or with no fluctuation
    left after detrending. The flag fires on variance above the cutoff
    or a Hurst estimate outside the configured band.
    """
    if isinstance(series, PatientRecord):
        x = series.bmd_values
    else:
        x = np.asarray(list(series), dtype=float)
    if x.size < 2:
        raise ValidationError("variance estimation needs at least 2 samples")
    t = np.arange(x.size, dtype=float)
    slope, intercept = np.polyfit(t, x, 1)
    resid = x - (slope * t + intercept)
    variance = float(resid.var(ddof=1))
    if variance <= VARIANCE_FLOOR:
        variance = 0.0

    hurst: Optional[float] = None
    if x.size >= config.min_hurst_samples and variance > VARIANCE_FLOOR:
        try:
            hurst = rs_hurst(resid)
        except ValidationError:
            hurst = None                # piecewise-constant residue
    lo, hi = config.hurst_band
    flag = variance > config.variance_cutoff or (
        hurst is not None and not (lo <= hurst <= hi))
    return variance, hurst, flag


def combine(flags: EstimatorFlags,
            config: DiagnosticConfig = DiagnosticConfig()) -> DiagnosisReport:
    """Evaluate the rule set against the flags; monotone in true flags."""
    env = flags.as_env()
    fired = []
    severity = 0
    for expr_text, diagnosis, rank in BUILTIN_RULES + tuple(config.user_rules):
        try:
            expr = parse_expression(expr_text)
            holds = eval_expr(expr, env)
        except Exception as exc:
            raise ValidationError(f"bad rule expression {expr_text!r}: {exc}"
                                  ) from exc
        if not isinstance(holds, bool):
            raise ValidationError(f"rule {expr_text!r} is not boolean")
        if holds:
            fired.append((expr_text, diagnosis))
            severity = max(severity, rank)
    return DiagnosisReport(flags, tuple(fired), severity)


def evaluate_record(record: PatientRecord,
                    config: DiagnosticConfig = DiagnosticConfig(),
                    ) -> DiagnosisReport:
    """Full pipeline: scores and flags from a record, then the rules."""
    latest = record.visits[-1][1]
    t_score, z_score = score_bmd(latest, record.reference)
    max_drop, b = rate_flag(record, config.drop_dt, config.drop_k)
    variance, hurst, c = variability_flag(record, config)
    flags = EstimatorFlags(
        a=t_score <= config.t_score_cutoff,
        b=b,
        c=c,
        d="diabetes" in record.comorbidities,
        e="thalassemia" in record.comorbidities,
        t_score=t_score,
        z_score=z_score,
        max_drop=max_drop,
        variance=variance,
        hurst=float("nan") if hurst is None else hurst,
    )
    return combine(flags, config)


def record_from_csv(text: str, comorbidities: Iterable[str] = (),
                    reference: ReferenceStats = ReferenceStats(0, 1, 0, 1),
                    ) -> PatientRecord:
    """Parse a `t_days,bmd` CSV (header optional) into a PatientRecord."""
    visits = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and not _is_number(parts[0]):
            continue                    # header row
        if len(parts) != 2 or not all(_is_number(p) for p in parts):
            raise ValidationError(
                f"malformed record line {lineno}: expected 't_days,bmd'")
        visits.append((float(parts[0]), float(parts[1])))
    if not visits:
        raise ValidationError("patient record is empty")
    return PatientRecord(tuple(visits), frozenset(comorbidities), reference)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
