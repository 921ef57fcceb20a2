"""DAG-MDP abstraction: states, trajectories and the environment interface.

Environments work on batches of states stored as integer arrays so that
sampling and loss evaluation stay vectorized; the single-state methods are
thin wrappers over the batch ones.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import ConfigError, ContractViolation

ENV_KINDS = ("hypergrid", "cosine-grid", "seq-prepend-append")


@dataclass(frozen=True)
class EnvDescriptor:
    kind: str = "hypergrid"
    dim: int = 2
    side: int = 8
    r0: float = 0.1
    alphabet: int = 4
    max_len: int = 6
    objectives: tuple = ()
    seed: int = 0
    enum_cap: int = 10**7

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"env.kind must be one of {ENV_KINDS}, got {self.kind!r}")
        for name in ("dim", "side", "alphabet", "max_len"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"env.{name} must be a positive integer")
        if self.r0 < 0:
            raise ConfigError("env.r0 must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("env.seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "objectives", tuple(self.objectives))


@dataclass(frozen=True)
class State:
    cells: tuple
    terminal: bool = False


@dataclass
class StateBatch:
    cells: np.ndarray  # (B, W) int; sequences are left-aligned, -1 = empty
    terminal: np.ndarray  # (B,) bool

    def __len__(self):
        return self.cells.shape[0]

    def __getitem__(self, idx) -> "StateBatch":
        return StateBatch(self.cells[idx], self.terminal[idx])

    def state(self, i: int) -> State:
        cells = tuple(int(c) for c in self.cells[i] if c >= 0)
        return State(cells, bool(self.terminal[i]))

    @classmethod
    def concat(cls, batches) -> "StateBatch":
        batches = list(batches)
        return cls(
            np.concatenate([b.cells for b in batches]),
            np.concatenate([b.terminal for b in batches]),
        )


@dataclass
class Trajectory:
    states: list
    actions: list
    u: np.ndarray
    logpf: float = float("nan")
    logpb: float = float("nan")

    @property
    def terminal(self) -> State:
        return self.states[-1]


@dataclass
class TrajectoryBatch:
    """Padded batch of complete trajectories.

    ``bwd_actions[b, t]`` is the backward action at ``s_{t+1}`` that returns
    to ``s_t``. Padding beyond ``n_actions[b]`` repeats the terminal state and
    uses action -1.
    """

    cells: np.ndarray  # (B, T+1, W)
    terminal: np.ndarray  # (B, T+1)
    fwd_actions: np.ndarray  # (B, T)
    bwd_actions: np.ndarray  # (B, T)
    n_actions: np.ndarray  # (B,)
    u: np.ndarray  # (B, n_objectives)
    logpf: np.ndarray = field(default=None)
    logpb: np.ndarray = field(default=None)

    def __len__(self):
        return self.cells.shape[0]

    @property
    def max_len(self) -> int:
        return self.fwd_actions.shape[1]

    def final_states(self) -> StateBatch:
        idx = np.arange(len(self))
        return StateBatch(self.cells[idx, self.n_actions], self.terminal[idx, self.n_actions])

    def subset(self, idx) -> "TrajectoryBatch":
        idx = np.asarray(idx)
        n = self.n_actions[idx]
        T = int(n.max()) if n.size else 0
        return TrajectoryBatch(
            self.cells[idx, : T + 1],
            self.terminal[idx, : T + 1],
            self.fwd_actions[idx, :T],
            self.bwd_actions[idx, :T],
            n,
            self.u[idx],
            None if self.logpf is None else self.logpf[idx],
            None if self.logpb is None else self.logpb[idx],
        )

    def __getitem__(self, i: int) -> Trajectory:
        n = int(self.n_actions[i])
        states = [StateBatch(self.cells[i, t][None], self.terminal[i, t][None]).state(0) for t in range(n + 1)]
        return Trajectory(
            states,
            [int(a) for a in self.fwd_actions[i, :n]],
            self.u[i].copy(),
            float("nan") if self.logpf is None else float(self.logpf[i]),
            float("nan") if self.logpb is None else float(self.logpb[i]),
        )

    @classmethod
    def concat(cls, batches) -> "TrajectoryBatch":
        batches = [b for b in batches if len(b)]
        T = max(b.max_len for b in batches)

        def pad(a, width, fill, axis=1):
            extra = width - a.shape[axis]
            if extra <= 0:
                return a
            widths = [(0, 0)] * a.ndim
            widths[axis] = (0, extra)
            return np.pad(a, widths, mode="constant", constant_values=fill)

        def pad_states(a):
            # repeat the last column (terminal state) as padding
            extra = T + 1 - a.shape[1]
            if extra <= 0:
                return a
            return np.concatenate([a, np.repeat(a[:, -1:], extra, axis=1)], axis=1)

        def cat_opt(name):
            vals = [getattr(b, name) for b in batches]
            return None if any(v is None for v in vals) else np.concatenate(vals)

        return cls(
            np.concatenate([pad_states(b.cells) for b in batches]),
            np.concatenate([pad_states(b.terminal) for b in batches]),
            np.concatenate([pad(b.fwd_actions, T, -1) for b in batches]),
            np.concatenate([pad(b.bwd_actions, T, -1) for b in batches]),
            np.concatenate([b.n_actions for b in batches]),
            np.concatenate([b.u for b in batches]),
            cat_opt("logpf"),
            cat_opt("logpb"),
        )


def dominated_by(u, v) -> bool:
    """Pareto order: u ⪯ v iff u_k <= v_k for every k."""
    return bool(np.all(np.asarray(u) <= np.asarray(v)))


class Env(ABC):
    """Discrete DAG-MDP with a distinguished terminal action."""

    desc: EnvDescriptor
    n_forward: int
    n_backward: int
    width: int
    n_objectives: int
    max_traj_len: int
    feature_width: int

    # ---- batch interface -------------------------------------------------
    @abstractmethod
    def initial_batch(self, n: int) -> StateBatch: ...

    @abstractmethod
    def forward_mask(self, batch: StateBatch) -> np.ndarray: ...

    @abstractmethod
    def backward_mask(self, batch: StateBatch) -> np.ndarray: ...

    @abstractmethod
    def step_batch(self, batch: StateBatch, actions) -> StateBatch: ...

    @abstractmethod
    def unstep_batch(self, batch: StateBatch, actions) -> StateBatch: ...

    @abstractmethod
    def reverse_action(self, parent: StateBatch, fwd_actions) -> np.ndarray:
        """Backward action at the child that undoes ``fwd_actions``."""

    @abstractmethod
    def forward_of_backward(self, child: StateBatch, bwd_actions) -> np.ndarray:
        """Forward action at the parent that the backward action undoes."""

    @abstractmethod
    def features(self, batch: StateBatch) -> np.ndarray: ...

    @abstractmethod
    def objective_batch(self, batch: StateBatch) -> np.ndarray: ...

    @abstractmethod
    def terminal_count(self) -> int: ...

    @abstractmethod
    def terminal_index(self, batch: StateBatch) -> np.ndarray: ...

    @abstractmethod
    def iter_terminal_batches(self, chunk: int = 65536) -> Iterator[StateBatch]: ...

    n_states: int | None = None

    def state_index(self, batch: StateBatch) -> np.ndarray:
        raise ContractViolation(f"{type(self).__name__} has no tabular state index")

    def is_initial(self, batch: StateBatch) -> np.ndarray:
        init = self.initial_batch(1)
        return np.all(batch.cells == init.cells[0], axis=1) & ~batch.terminal

    def objective_names(self) -> list[str]:
        return list(self.desc.objectives) or [self.desc.kind]

    # ---- single-state interface ------------------------------------------
    def _one(self, s: State) -> StateBatch:
        cells = np.full((1, self.width), -1, dtype=np.int64)
        cells[0, : len(s.cells)] = s.cells
        return StateBatch(cells, np.array([s.terminal]))

    def initial_state(self) -> State:
        return self.initial_batch(1).state(0)

    def forward_actions(self, s: State) -> list[int]:
        if s.terminal:
            raise ContractViolation("forward_actions called on a terminal state")
        return [int(a) for a in np.flatnonzero(self.forward_mask(self._one(s))[0])]

    def backward_actions(self, s: State) -> list[int]:
        if s == self.initial_state():
            raise ContractViolation("backward_actions called on the initial state")
        return [int(a) for a in np.flatnonzero(self.backward_mask(self._one(s))[0])]

    def step(self, s: State, a: int) -> State:
        if s.terminal or a not in self.forward_actions(s):
            raise ContractViolation(f"illegal forward action {a} at {s}")
        return self.step_batch(self._one(s), np.array([a])).state(0)

    def unstep(self, s: State, a: int) -> State:
        if a not in self.backward_actions(s):
            raise ContractViolation(f"illegal backward action {a} at {s}")
        return self.unstep_batch(self._one(s), np.array([a])).state(0)

    def objective(self, s: State) -> np.ndarray:
        if not s.terminal:
            raise ContractViolation("objective requires a terminal state")
        return self.objective_batch(self._one(s))[0]

    def enumerate_terminals(self) -> Iterator[State]:
        for batch in self.iter_terminal_batches():
            for i in range(len(batch)):
                yield batch.state(i)

    def all_terminals(self) -> StateBatch:
        return StateBatch.concat(self.iter_terminal_batches())
