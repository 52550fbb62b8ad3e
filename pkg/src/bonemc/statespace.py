"""Reachability and explicit CTMC construction.

Semantics, fixed here once for the whole package:

* Unlabeled commands fire independently, one transition per command.
* Commands sharing an action label synchronize across every module whose
  alphabet contains that label. A synchronized transition exists for each
  combination that picks one enabled command from each participating
  module; its rate is the PRODUCT of the chosen commands' rates and its
  update is the union of their updates. A participating module with no
  enabled command for the label blocks the label entirely in that state.
* A command whose rate evaluates to 0 is disabled; a negative or
  non-finite rate anywhere reachable is a hard model error.
* The transition reward for a reward structure is the sum, over the
  structure's items whose action label matches the transition and whose
  guard holds in the source state, of the item's value expression
  evaluated in the source state. Unlabeled transitions earn no rewards
  (reward items are always labeled in this dialect).

One consequence worth knowing for the bundled bone model: a resorption
step flips `pb` to false, and full synchronization then blocks further
`resorb` actions until the osteoblast cycle empties and resets. So each
osteoblast cycle carries exactly one resorption, which is how the
guarded commands read, even though one might expect mature osteoclasts
to resorb in quick succession.
"""
from __future__ import annotations

import csv
import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import BuildError
from .lang import ResolvedModel, eval_expr
from .lang.resolve import VarInfo

DEFAULT_STATE_CAP = 1_000_000


@dataclass(frozen=True)
class Ctmc:
    """Explicit-state CTMC with per-transition rates and rewards.

    Index 0 is the initial state. `rewards` has one column per reward
    structure, aligned with `reward_names`. Parallel transitions (same
    source, target, and label) are kept distinct. Immutable after build.
    """
    variables: tuple[VarInfo, ...]
    constants: dict
    reward_names: tuple[str, ...]
    states: tuple[tuple, ...]
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    label: tuple[Optional[str], ...]
    rewards: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_transitions(self) -> int:
        return len(self.rate)

    @cached_property
    def exit_rates(self) -> np.ndarray:
        out = np.zeros(self.n_states)
        np.add.at(out, self.src, self.rate)
        return out

    def exit_rate(self, s: int) -> float:
        """Total outgoing rate of state `s`; 0 for absorbing states."""
        return float(self.exit_rates[s])

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def valuation(self, s: int) -> dict:
        return dict(zip(self.var_names, self.states[s]))

    def env_for(self, s: int) -> dict:
        env = dict(self.constants)
        env.update(zip(self.var_names, self.states[s]))
        return env

    def reward_index(self, name: str) -> int:
        try:
            return self.reward_names.index(name)
        except ValueError:
            raise BuildError(f"unknown reward structure '{name}'; model has "
                             f"{list(self.reward_names)}") from None

    def reward_rate_vector(self, name: str) -> np.ndarray:
        """Per-state expected reward accrual rate: sum of rate*reward out of s."""
        ri = self.reward_index(name)
        rho = np.zeros(self.n_states)
        np.add.at(rho, self.src, self.rate * self.rewards[:, ri])
        return rho

    def find_state(self, **values) -> int:
        """Index of the unique state matching the given variable values."""
        names = self.var_names
        for i, st in enumerate(self.states):
            if all(st[names.index(k)] == v for k, v in values.items()):
                return i
        raise KeyError(f"no reachable state matches {values}")


def _fmt_state(variables, state) -> str:
    return "(" + ", ".join(f"{v.name}={val}" for v, val in zip(variables, state)) + ")"


def build_ctmc(model: ResolvedModel, state_cap: int = DEFAULT_STATE_CAP) -> Ctmc:
    """Breadth-first reachability from the initial valuation.

    Deterministic: two builds of the same resolved model yield identical
    state tables and transition lists. Raises BuildError (with a witness
    state) for out-of-range updates, negative or non-finite rates, and
    for exceeding `state_cap`.
    """
    ast = model.ast
    variables = model.variables
    var_index = {v.name: i for i, v in enumerate(variables)}

    unlabeled = [(m.name, cmd) for m in ast.modules for cmd in m.commands
                 if cmd.label is None]
    # labels in order of first appearance; participating modules in model order
    label_order: list[str] = []
    participants: dict[str, list] = {}
    for m in ast.modules:
        for cmd in m.commands:
            if cmd.label is None:
                continue
            if cmd.label not in participants:
                participants[cmd.label] = []
                label_order.append(cmd.label)
    for m in ast.modules:
        owned = [cmd for cmd in m.commands if cmd.label is not None]
        labels_here = {cmd.label for cmd in owned}
        for lbl in label_order:
            if lbl in labels_here:
                participants[lbl].append(
                    (m.name, [c for c in owned if c.label == lbl]))

    reward_names = tuple(r.name for r in ast.reward_structs)
    n_rewards = len(reward_names)

    init = model.initial_state()
    index: dict[tuple, int] = {init: 0}
    states: list[tuple] = [init]
    srcs: list[int] = []
    dsts: list[int] = []
    rates: list[float] = []
    labels: list[Optional[str]] = []
    rew_rows: list[list[float]] = []

    def rate_of(cmd, env, state) -> float:
        r = eval_expr(cmd.rate, env)
        if not np.isfinite(r):
            raise BuildError(
                f"non-finite rate from command at line {cmd.line} in state "
                f"{_fmt_state(variables, state)}")
        if r < 0:
            raise BuildError(
                f"negative rate {r} from command at line {cmd.line} in state "
                f"{_fmt_state(variables, state)}")
        return float(r)

    def apply_updates(state, cmds, env):
        new = list(state)
        for cmd in cmds:
            for name, rhs in cmd.updates:
                i = var_index[name]
                value = eval_expr(rhs, env)
                v = variables[i]
                if v.is_bool:
                    new[i] = bool(value)
                else:
                    iv = int(value)
                    if iv != value:
                        raise BuildError(
                            f"non-integer update {value} for '{name}' from "
                            f"command at line {cmd.line} in state "
                            f"{_fmt_state(variables, state)}")
                    if not (v.lo <= iv <= v.hi):
                        raise BuildError(
                            f"update drives '{name}' to {iv}, outside "
                            f"[{v.lo}..{v.hi}], from command at line "
                            f"{cmd.line} in state {_fmt_state(variables, state)}")
                    new[i] = iv
        return tuple(new)

    def transition_rewards(label, env) -> list[float]:
        row = [0.0] * n_rewards
        if label is None:
            return row
        for ri, struct in enumerate(ast.reward_structs):
            total = 0.0
            for item in struct.items:
                if item.label == label and eval_expr(item.guard, env):
                    total += eval_expr(item.value, env)
            row[ri] = total
        return row

    queue = deque([init])
    while queue:
        state = queue.popleft()
        si = index[state]
        env = model.env_for(state)

        emitted: list[tuple[tuple, float, Optional[str]]] = []
        for _mod, cmd in unlabeled:
            if not eval_expr(cmd.guard, env):
                continue
            r = rate_of(cmd, env, state)
            if r == 0.0:
                continue
            emitted.append((apply_updates(state, (cmd,), env), r, None))
        for lbl in label_order:
            blocked = False
            choices = []
            for _mod, cmds in participants[lbl]:
                enabled = []
                for cmd in cmds:
                    if not eval_expr(cmd.guard, env):
                        continue
                    r = rate_of(cmd, env, state)
                    if r > 0.0:
                        enabled.append((cmd, r))
                if not enabled:
                    blocked = True      # this module blocks the label here
                    break
                choices.append(enabled)
            if blocked:
                continue
            for combo in itertools.product(*choices):
                rate = 1.0
                for _cmd, r in combo:
                    rate *= r
                new = apply_updates(state, [c for c, _r in combo], env)
                emitted.append((new, rate, lbl))

        for new, r, lbl in emitted:
            if new not in index:
                if len(states) >= state_cap:
                    raise BuildError(
                        f"state space exceeds cap of {state_cap} states")
                index[new] = len(states)
                states.append(new)
                queue.append(new)
            srcs.append(si)
            dsts.append(index[new])
            rates.append(r)
            labels.append(lbl)
            rew_rows.append(transition_rewards(lbl, env))

    return Ctmc(
        variables=variables,
        constants=dict(model.constants),
        reward_names=reward_names,
        states=tuple(states),
        src=np.asarray(srcs, dtype=np.int64),
        dst=np.asarray(dsts, dtype=np.int64),
        rate=np.asarray(rates, dtype=np.float64),
        label=tuple(labels),
        rewards=np.asarray(rew_rows, dtype=np.float64).reshape(len(rates),
                                                               n_rewards),
    )


def rate_matrix(ctmc: Ctmc):
    """Sparse rate matrix with parallel transitions summed per (src, dst)."""
    import scipy.sparse as sp
    n = ctmc.n_states
    return sp.coo_matrix((ctmc.rate, (ctmc.src, ctmc.dst)),
                         shape=(n, n)).tocsr()


def export_matrix_market(ctmc: Ctmc, path) -> None:
    """Rate matrix in Matrix Market coordinate format (duplicates summed)."""
    from scipy.io import mmwrite
    mmwrite(str(path), rate_matrix(ctmc).tocoo(),
            comment="CTMC rate matrix; row=source, col=target")


def export_reward_vectors(ctmc: Ctmc, directory) -> list:
    """One Matrix Market array file per reward structure (reward rate per state)."""
    from pathlib import Path
    from scipy.io import mmwrite
    written = []
    for name in ctmc.reward_names:
        rho = ctmc.reward_rate_vector(name).reshape(-1, 1)
        out = Path(directory) / f"reward_{name}.mtx"
        mmwrite(str(out), rho, comment=f"reward rate vector for '{name}'")
        written.append(out)
    return written


def export_states_csv(ctmc: Ctmc, path) -> None:
    """State table as CSV: index plus one column per variable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("state",) + ctmc.var_names)
        for i, st in enumerate(ctmc.states):
            writer.writerow((i,) + tuple(int(v) if isinstance(v, bool) else v
                                         for v in st))
