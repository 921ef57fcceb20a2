"""FIFO replay buffer of terminal states and prioritized replay sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..envs.base import StateBatch, TrajectoryBatch
from ..errors import ContractViolation


@dataclass
class ReplayEntry:
    cells: np.ndarray
    terminal: bool
    u: np.ndarray
    round: int


class ReplayBuffer:
    """Ring buffer; once full, the oldest entries are evicted first.

    Objectives are cached on insertion and never recomputed.
    """

    def __init__(self, capacity: int, width: int, n_objectives: int):
        if capacity < 1:
            raise ContractViolation("replay capacity must be positive")
        self.capacity = int(capacity)
        self.cells = np.zeros((self.capacity, width), dtype=np.int64)
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.u = np.zeros((self.capacity, n_objectives))
        self.rounds = np.zeros(self.capacity, dtype=np.int64)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, states: StateBatch, u, round_idx: int) -> None:
        u = np.asarray(u, dtype=float).reshape(len(states), -1)
        for i in range(len(states)):
            j = self._next
            self.cells[j] = states.cells[i]
            self.terminal[j] = states.terminal[i]
            self.u[j] = u[i]
            self.rounds[j] = round_idx
            self._next = (j + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def entry(self, k: int) -> ReplayEntry:
        j = self._order()[k]
        return ReplayEntry(self.cells[j].copy(), bool(self.terminal[j]), self.u[j].copy(), int(self.rounds[j]))

    def get(self, idx) -> tuple[StateBatch, np.ndarray]:
        """States and cached objectives for positions ``idx`` (oldest = 0)."""
        slots = self._order()[np.asarray(idx, dtype=np.int64)]
        return StateBatch(self.cells[slots].copy(), self.terminal[slots].copy()), self.u[slots].copy()

    def objectives(self) -> np.ndarray:
        return self.u[self._order()]

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ContractViolation("cannot sample from an empty replay buffer")
        return rng.integers(0, self._size, size=n)


class TrajectoryReplay:
    """FIFO ring of complete trajectories, padded to the environment's maximum length."""

    def __init__(self, capacity: int, max_len: int, width: int, n_objectives: int):
        if capacity < 1:
            raise ContractViolation("replay capacity must be positive")
        self.capacity = int(capacity)
        self.cells = np.zeros((self.capacity, max_len + 1, width), dtype=np.int64)
        self.terminal = np.zeros((self.capacity, max_len + 1), dtype=bool)
        self.fwd = np.full((self.capacity, max_len), -1, dtype=np.int64)
        self.bwd = np.full((self.capacity, max_len), -1, dtype=np.int64)
        self.n_actions = np.zeros(self.capacity, dtype=np.int64)
        self.u = np.zeros((self.capacity, n_objectives))
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, tb: TrajectoryBatch) -> None:
        B, T = len(tb), tb.max_len
        slots = (self._next + np.arange(B)) % self.capacity
        # later rows win when a batch is larger than the ring
        self.cells[slots, : T + 1] = tb.cells
        self.cells[slots, T + 1 :] = tb.cells[:, -1:]
        self.terminal[slots, : T + 1] = tb.terminal
        self.terminal[slots, T + 1 :] = tb.terminal[:, -1:]
        self.fwd[slots] = -1
        self.bwd[slots] = -1
        self.fwd[slots, :T] = tb.fwd_actions
        self.bwd[slots, :T] = tb.bwd_actions
        self.n_actions[slots] = tb.n_actions
        self.u[slots] = tb.u
        self._next = int((self._next + B) % self.capacity)
        self._size = min(self._size + B, self.capacity)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> TrajectoryBatch:
        if self._size == 0:
            raise ContractViolation("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, size=n)
        full = TrajectoryBatch(
            self.cells[idx], self.terminal[idx], self.fwd[idx], self.bwd[idx], self.n_actions[idx], self.u[idx]
        )
        return full.subset(np.arange(n))


def _draw(pool: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        return pool[:0]
    return rng.choice(pool, size=n, replace=pool.size < n)


def prt_sample(values, batch: int, rng: np.random.Generator, alpha1: float = 50, alpha2: float = 10) -> np.ndarray:
    """Indices of a prioritized replay batch.

    ``ceil(alpha1% * batch)`` indices come uniformly from entries at or above
    the (100 - alpha2)-th percentile of ``values``; the rest from the entries
    below it. A tier that is too small is sampled with replacement; an empty
    tier hands its share to the other one (so equal values give uniform draws).
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ContractViolation("prioritized replay needs a non-empty buffer")
    thr = np.percentile(values, 100.0 - alpha2)
    top = np.flatnonzero(values >= thr)
    rest = np.flatnonzero(values < thr)
    n_top = math.ceil(alpha1 / 100.0 * batch)
    if rest.size == 0:
        n_top = batch
    picks = np.concatenate([_draw(top, n_top, rng), _draw(rest, batch - n_top, rng)])
    return picks
