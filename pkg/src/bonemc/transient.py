"""Transient analysis by uniformization.

The chain with generator Q is subordinated to a Poisson process of rate
q = 1.02 * (max exit rate); the small inflation keeps the uniformized
chain aperiodic even when no state is self-looped. With P = I + Q/q:

    pi(t)   = sum_k  pois(k; q t) * pi(0) P^k
    E_s[R(t)] = sum_k (1/q) * Pr[N_{qt} > k] * (P^k rho)(s)

where rho(s) is the state's reward accrual rate, i.e. the sum over
outgoing transitions of rate * transition reward. The second identity
follows from integrating the first against rho; both series are summed
k = 0..K with K chosen so the neglected Poisson mass bounds the result:
for distributions the dropped probability mass is below the truncation
target, and for rewards the bound is

    |error| <= max|rho| * t * Pr[N >= K],

using E[(N-K)+] <= q t * Pr[N >= K]. A tail-mass scan (scipy's Poisson
inverse survival function plus an explicit pmf sum) picks K; stated
truncation targets govern the dropped terms, not floating-point
round-off, which is orders of magnitude below at these sizes.

Everything here is a pure function of an immutable Ctmc; summation
order is fixed, so results do not depend on thread count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import EvalError
from .statespace import Ctmc

RATE_INFLATION = 1.02
DEFAULT_TRUNCATION = 1e-8
DISTRIBUTION_TRUNCATION = 1e-10
QT_LIMIT = 1e9


@dataclass(frozen=True)
class TransientDistribution:
    """State distribution at one time point; entries clamped to [0, 1]."""
    t: float
    probs: np.ndarray


@dataclass(frozen=True)
class RewardSeries:
    """Expected cumulative reward from the initial state on a time grid."""
    reward_name: str
    grid: np.ndarray
    values: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,value\n")
            for t, v in zip(self.grid, self.values):
                fh.write(f"{t!r},{v!r}\n")

    def to_json(self) -> str:
        return json.dumps({
            "reward": self.reward_name,
            "grid": [float(t) for t in self.grid],
            "values": [float(v) for v in self.values],
        })


def uniformized(ctmc: Ctmc) -> tuple[sp.csr_matrix, float]:
    """(P, q): the uniformized jump matrix and the uniformization rate."""
    n = ctmc.n_states
    exit_rates = ctmc.exit_rates
    qmax = float(exit_rates.max()) if n else 0.0
    q = RATE_INFLATION * qmax
    if q == 0.0:
        return sp.identity(n, format="csr"), 0.0
    off = sp.coo_matrix((ctmc.rate / q, (ctmc.src, ctmc.dst)), shape=(n, n))
    diag = sp.diags(1.0 - exit_rates / q)
    return (off.tocsr() + diag).tocsr(), q


def _check_horizon(q: float, t: float) -> None:
    if t < 0:
        raise EvalError(f"time horizon must be nonnegative, got {t}")
    if q * t > QT_LIMIT:
        raise EvalError(
            f"uniformization constant q*t = {q * t:.3g} exceeds {QT_LIMIT:.0e}; "
            "the horizon is too long for this engine")


def _poisson_kmax(lam: float, tail: float) -> int:
    """Smallest practical K with Pr[N_lam >= K] <= tail (conservative)."""
    if lam <= 0.0:
        return 0
    k = int(poisson.isf(tail, lam)) + 1
    # isf can be off by an ulp at extreme tails; nudge until the bound holds
    while poisson.sf(k - 1, lam) > tail:
        k += 1
    return k


def _survival_weights(lam: float, kmax: int) -> np.ndarray:
    """Pr[N_lam > k] for k = 0..kmax, computed from the pmf in one pass."""
    ks = np.arange(kmax + 1)
    with np.errstate(divide="ignore"):
        logpmf = ks * math.log(lam) - lam - gammaln(ks + 1.0)
    cdf = np.cumsum(np.exp(logpmf))
    return np.clip(1.0 - cdf, 0.0, 1.0)


def transient_distribution(ctmc: Ctmc, t: float,
                           truncation: float = DISTRIBUTION_TRUNCATION,
                           ) -> TransientDistribution:
    """Distribution over states at time t, starting from the initial state.

    Truncation keeps the dropped Poisson mass (hence the l1 error) below
    `truncation`. Tiny negative round-off entries are clamped to zero.
    """
    n = ctmc.n_states
    P, q = uniformized(ctmc)
    _check_horizon(q, t)
    pi = np.zeros(n)
    pi[0] = 1.0
    lam = q * t
    if lam == 0.0:
        return TransientDistribution(t, pi)
    kmax = _poisson_kmax(lam, truncation / 2.0)
    PT = P.T.tocsr()
    pmf0 = math.exp(-lam)
    acc = pmf0 * pi
    logpmf = -lam
    for k in range(1, kmax + 1):
        pi = PT.dot(pi)
        logpmf += math.log(lam) - math.log(k)
        w = math.exp(logpmf)
        if w > 0.0:
            acc += w * pi
    acc = np.maximum(acc, 0.0)
    return TransientDistribution(t, acc)


def _reward_sweep(ctmc: Ctmc, reward_name: str, times: Sequence[float],
                  full_at: Iterable[float] = (),
                  truncation: float = DEFAULT_TRUNCATION,
                  ) -> tuple[np.ndarray, dict[float, np.ndarray]]:
    """Shared backward sweep over P^k rho.

    Returns the cumulative-reward series for the initial state at `times`
    and, for each time in `full_at`, the full per-state vector. One sweep
    serves every requested time point.
    """
    times = [float(t) for t in times]
    full_at = [float(t) for t in full_at]
    for t in times + full_at:
        if t < 0:
            raise EvalError(f"time horizon must be nonnegative, got {t}")
    n = ctmc.n_states
    rho = ctmc.reward_rate_vector(reward_name)
    P, q = uniformized(ctmc)
    tmax = max(times + full_at, default=0.0)
    _check_horizon(q, tmax)
    if q == 0.0 or tmax == 0.0 or not np.any(rho):
        # no transitions, all-zero rewards, or a degenerate grid
        return (np.zeros(len(times)),
                {t: np.zeros(n) for t in full_at})

    rho_max = float(np.abs(rho).max())
    tail = truncation / max(1.0, rho_max * tmax)
    tail = max(tail, 1e-15)
    kmax = _poisson_kmax(q * tmax, tail)

    full_weights = {t: _survival_weights(q * t, kmax) / q for t in full_at}
    w = rho.copy()
    scalar_track = np.empty(kmax + 1)
    acc = {t: np.zeros(n) for t in full_at}
    for k in range(kmax + 1):
        scalar_track[k] = w[0]
        for t in full_at:
            wt = full_weights[t][k]
            if wt != 0.0:
                acc[t] += wt * w
        if k < kmax:
            w = P.dot(w)

    series = np.zeros(len(times))
    for i, t in enumerate(times):
        lam = q * t
        if lam == 0.0:
            continue
        weights = _survival_weights(lam, kmax) / q
        series[i] = float(np.dot(weights, scalar_track))
    return series, acc


def expected_cumulative_reward(ctmc: Ctmc, reward_name: str, t: float,
                               truncation: float = DEFAULT_TRUNCATION,
                               ) -> np.ndarray:
    """Expected reward accumulated over [0, t], for every starting state."""
    _series, full = _reward_sweep(ctmc, reward_name, [], full_at=[t],
                                  truncation=truncation)
    return full[float(t)]


def reward_series(ctmc: Ctmc, reward_name: str, grid: Sequence[float],
                  truncation: float = DEFAULT_TRUNCATION) -> RewardSeries:
    """Cumulative reward from the initial state at each grid time.

    The grid must be ascending and nonnegative; one uniformization sweep
    covers all points.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise EvalError("empty time grid")
    if np.any(np.diff(grid) < 0):
        raise EvalError("time grid must be ascending")
    values, _ = _reward_sweep(ctmc, reward_name, grid, truncation=truncation)
    return RewardSeries(reward_name, grid, values)
