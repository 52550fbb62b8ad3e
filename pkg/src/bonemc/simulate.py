"""Exact stochastic simulation with reward accumulation.

Standard Gillespie stepping: in state s the holding time is exponential
with the state's exit rate, and the jump is drawn categorically with
probability rate/exit_rate. Transition rewards are added when the jump
fires; an absorbing state freezes the run.

Reproducibility contract: trajectory i of an ensemble uses its own
generator stream seeded with base_seed + i (RNG_ID names the generator,
and is echoed in run manifests). Ensemble statistics are reduced in
fixed chunks that are merged in seed order, so the numbers are
bit-identical no matter how many workers executed the chunks.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EvalError
from .statespace import Ctmc

RNG_ID = "numpy-pcg64/v1"

# Histogram layout for the net bone-density estimate: bins of width 0.5
# covering [-5, 5], plus an underflow and an overflow bin at the ends.
DENSITY_BIN_EDGES = np.arange(-5.0, 5.0 + 0.25, 0.5)
DEFAULT_NET_PAIR = ("boneFormed", "boneResorbed")

_CHUNK = 256        # trajectories per reduction chunk; fixed for determinism
_RNG_BATCH = 512    # random variates drawn per refill


@dataclass(frozen=True)
class Trajectory:
    """One simulated path: events as (time, transition index) pairs."""
    seed: int
    events: tuple[tuple[float, int], ...]
    checkpoint_rewards: dict[float, np.ndarray]


@dataclass(frozen=True)
class EnsembleStats:
    """Per-checkpoint summary over an ensemble of trajectories.

    Variance is the population variance (zero for n=1). The histogram
    covers the net density (plus-minus reward difference) when the model
    has both structures of `net_pair`; otherwise the net fields are None.
    """
    checkpoint: float
    n: int
    reward_names: tuple[str, ...]
    mean: np.ndarray
    variance: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    net_pair: Optional[tuple[str, str]]
    net_mean: Optional[float]
    net_variance: Optional[float]
    histogram_edges: Optional[np.ndarray]
    histogram_counts: Optional[np.ndarray]


class _SimTables:
    """Per-state flattened transition tables for fast stepping."""

    def __init__(self, ctmc: Ctmc):
        order = np.argsort(ctmc.src, kind="stable")
        src = ctmc.src[order]
        bounds = np.searchsorted(src, np.arange(ctmc.n_states + 1))
        self.cum = []
        self.dst = []
        self.rew = []
        self.orig = []
        self.exit = np.zeros(ctmc.n_states)
        for s in range(ctmc.n_states):
            sel = order[bounds[s]:bounds[s + 1]]
            rates = ctmc.rate[sel]
            cum = np.cumsum(rates)
            self.cum.append(cum)
            self.dst.append(ctmc.dst[sel])
            self.rew.append(ctmc.rewards[sel])
            self.orig.append(sel)
            self.exit[s] = cum[-1] if cum.size else 0.0
        self.n_rewards = len(ctmc.reward_names)


class _Draws:
    """Batched (exponential, uniform) draws from one seeded stream."""

    def __init__(self, seed: int):
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self._refill()

    def _refill(self):
        self.exps = self.rng.standard_exponential(_RNG_BATCH)
        self.unis = self.rng.random(_RNG_BATCH)
        self.i = 0

    def next(self) -> tuple[float, float]:
        if self.i == _RNG_BATCH:
            self._refill()
        e, u = self.exps[self.i], self.unis[self.i]
        self.i += 1
        return e, u


def _step_trajectory(tables: _SimTables, horizon: float,
                     checkpoints: Sequence[float], seed: int,
                     record_events: bool):
    draws = _Draws(seed)
    cps = sorted(float(c) for c in checkpoints)
    t = 0.0
    s = 0
    acc = np.zeros(tables.n_rewards)
    snapshots: dict[float, np.ndarray] = {}
    ci = 0
    events: list[tuple[float, int]] = []
    while True:
        exit_rate = tables.exit[s]
        if exit_rate <= 0.0:
            break                        # absorbing: rewards frozen
        e, u = draws.next()
        t_next = t + e / exit_rate
        while ci < len(cps) and cps[ci] < t_next:
            snapshots[cps[ci]] = acc.copy()
            ci += 1
        if t_next > horizon:
            break
        cum = tables.cum[s]
        j = int(np.searchsorted(cum, u * exit_rate, side="right"))
        j = min(j, len(cum) - 1)        # guard the u ~ 1.0 edge
        acc += tables.rew[s][j]
        t = t_next
        if record_events:
            events.append((t, int(tables.orig[s][j])))
        s = int(tables.dst[s][j])
    while ci < len(cps):
        snapshots[cps[ci]] = acc.copy()
        ci += 1
    return events, snapshots, acc


def simulate_trajectory(ctmc: Ctmc, horizon: float,
                        checkpoints: Sequence[float] = (),
                        seed: int = 0) -> Trajectory:
    """Simulate one path up to `horizon`; deterministic given the seed."""
    if checkpoints and max(checkpoints) > horizon:
        raise EvalError("every checkpoint must lie within the horizon")
    if horizon < 0:
        raise EvalError("horizon must be nonnegative")
    tables = _SimTables(ctmc)
    events, snapshots, _acc = _step_trajectory(tables, horizon, checkpoints,
                                               seed, record_events=True)
    return Trajectory(seed, tuple(events), snapshots)


# ------------------------------------------------------- ensemble reduction

class _ChunkStats:
    """Mean/M2/min/max/histogram accumulation over one chunk of seeds."""

    def __init__(self, n_rewards: int, n_checkpoints: int, net: bool):
        shape = (n_checkpoints, n_rewards)
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.minimum = np.full(shape, np.inf)
        self.maximum = np.full(shape, -np.inf)
        self.net = net
        if net:
            self.net_mean = np.zeros(n_checkpoints)
            self.net_m2 = np.zeros(n_checkpoints)
            self.hist = np.zeros((n_checkpoints, DENSITY_BIN_EDGES.size + 1),
                                 dtype=np.int64)

    def add(self, rewards_by_cp: np.ndarray, net_by_cp: Optional[np.ndarray]):
        self.n += 1
        delta = rewards_by_cp - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (rewards_by_cp - self.mean)
        np.minimum(self.minimum, rewards_by_cp, out=self.minimum)
        np.maximum(self.maximum, rewards_by_cp, out=self.maximum)
        if self.net:
            d = net_by_cp - self.net_mean
            self.net_mean += d / self.n
            self.net_m2 += d * (net_by_cp - self.net_mean)
            bins = np.searchsorted(DENSITY_BIN_EDGES, net_by_cp, side="right")
            for row, b in enumerate(bins):
                self.hist[row, b] += 1

    def merge(self, other: "_ChunkStats"):
        if other.n == 0:
            return
        if self.n == 0:
            self.__dict__.update(other.__dict__)
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.m2 += other.m2 + delta ** 2 * (self.n * other.n / n)
        self.mean += delta * (other.n / n)
        np.minimum(self.minimum, other.minimum, out=self.minimum)
        np.maximum(self.maximum, other.maximum, out=self.maximum)
        if self.net:
            d = other.net_mean - self.net_mean
            self.net_m2 += other.net_m2 + d ** 2 * (self.n * other.n / n)
            self.net_mean += d * (other.n / n)
            self.hist += other.hist
        self.n = n


def _run_chunk(args):
    (ctmc, horizon, checkpoints, seeds, net_idx) = args
    tables = _SimTables(ctmc)
    cps = sorted(float(c) for c in checkpoints)
    stats = _ChunkStats(tables.n_rewards, len(cps), net_idx is not None)
    for seed in seeds:
        _events, snapshots, _acc = _step_trajectory(
            tables, horizon, cps, seed, record_events=False)
        by_cp = np.stack([snapshots[c] for c in cps])
        net = None
        if net_idx is not None:
            plus, minus = net_idx
            net = by_cp[:, plus] - by_cp[:, minus]
        stats.add(by_cp, net)
    return stats


def run_ensemble(ctmc: Ctmc, horizon: float, checkpoints: Sequence[float],
                 n: int, base_seed: int, workers: int = 1,
                 net_pair: Optional[tuple[str, str]] = DEFAULT_NET_PAIR,
                 ) -> list[EnsembleStats]:
    """Simulate trajectories with seeds base_seed..base_seed+n-1.

    Returns one EnsembleStats per checkpoint (ascending). Deterministic
    for a given (n, base_seed) regardless of `workers`.
    """
    if n < 1:
        raise EvalError("ensemble size must be at least 1")
    if not checkpoints:
        raise EvalError("at least one checkpoint is required")
    if max(checkpoints) > horizon:
        raise EvalError("every checkpoint must lie within the horizon")
    cps = sorted(float(c) for c in checkpoints)

    net_idx = None
    resolved_pair = None
    if net_pair is not None and all(name in ctmc.reward_names
                                    for name in net_pair):
        net_idx = (ctmc.reward_names.index(net_pair[0]),
                   ctmc.reward_names.index(net_pair[1]))
        resolved_pair = tuple(net_pair)

    seed_chunks = [range(base_seed + lo, base_seed + min(lo + _CHUNK, n))
                   for lo in range(0, n, _CHUNK)]
    jobs = [(ctmc, horizon, cps, list(chunk), net_idx)
            for chunk in seed_chunks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk_stats = list(pool.map(_run_chunk, jobs))
    else:
        chunk_stats = [_run_chunk(job) for job in jobs]

    total = chunk_stats[0]
    for cs in chunk_stats[1:]:          # merge in seed order
        total.merge(cs)

    out = []
    for row, cp in enumerate(cps):
        has_net = net_idx is not None
        out.append(EnsembleStats(
            checkpoint=cp,
            n=total.n,
            reward_names=ctmc.reward_names,
            mean=total.mean[row].copy(),
            variance=total.m2[row] / total.n,
            minimum=total.minimum[row].copy(),
            maximum=total.maximum[row].copy(),
            net_pair=resolved_pair,
            net_mean=float(total.net_mean[row]) if has_net else None,
            net_variance=(float(total.net_m2[row] / total.n)
                          if has_net else None),
            histogram_edges=DENSITY_BIN_EDGES.copy() if has_net else None,
            histogram_counts=total.hist[row].copy() if has_net else None,
        ))
    return out
