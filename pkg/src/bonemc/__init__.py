"""Explicit-state CTMC model checking and simulation for a guarded-command
bone-remodeling model, with reward-based transient analysis and a
diagnostic estimator layer."""

__version__ = "0.1.0"

from .lang import parse_model, parse_expression, resolve_constants, eval_expr
from .statespace import Ctmc, build_ctmc
from .transient import (RewardSeries, TransientDistribution,
                        expected_cumulative_reward, reward_series,
                        transient_distribution)
from .simulate import (EnsembleStats, Trajectory, run_ensemble,
                       simulate_trajectory)
from .properties import evaluate, parse_properties
from .diagnostics import (DiagnosisReport, DiagnosticConfig, EstimatorFlags,
                          PatientRecord, ReferenceStats, combine,
                          evaluate_record, rate_flag, rs_hurst, score_bmd,
                          variability_flag)

__all__ = [
    "Ctmc", "DiagnosisReport", "DiagnosticConfig", "EnsembleStats",
    "EstimatorFlags", "PatientRecord", "ReferenceStats", "RewardSeries",
    "Trajectory", "TransientDistribution", "build_ctmc", "combine",
    "eval_expr", "evaluate", "evaluate_record", "expected_cumulative_reward",
    "parse_expression", "parse_model", "parse_properties", "rate_flag",
    "resolve_constants", "reward_series", "rs_hurst", "run_ensemble",
    "score_bmd", "simulate_trajectory", "transient_distribution",
    "variability_flag",
]
