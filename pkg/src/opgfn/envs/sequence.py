"""Sequences built by prepending or appending symbols, with Bag and n-gram objectives."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import CapabilityError, ConfigError, ContractViolation
from . import objectives as obj
from .base import Env, EnvDescriptor, StateBatch

DROP_FIRST, DROP_LAST, UNDO_TERMINAL = 0, 1, 2


class SequenceEnv(Env):
    """Fixed-length sequences over an alphabet of size A.

    Forward actions: ``k`` prepends symbol k, ``A + k`` appends it, ``2A``
    terminates (legal only at full length). The empty state only allows the
    append actions, so every terminal has exactly ``2**(l-1)`` build orders.
    Backward actions: drop-first, drop-last and undo-terminal.

    Objectives are either ``("bag",)`` or a list of n-gram strings over the
    amino-acid vocabulary (then the alphabet must be 20).
    """

    def __init__(self, desc: EnvDescriptor):
        self.desc = desc
        self.A = int(desc.alphabet)
        self.L = int(desc.max_len)
        self.width = self.L
        self.n_forward = 2 * self.A + 1
        self.n_backward = 3
        self.max_traj_len = self.L + 1
        self.feature_width = self.L * (self.A + 1) + 1
        names = tuple(desc.objectives) or ("bag",)
        if names == ("bag",):
            self.mode = "bag"
            self.n_objectives = 1
        else:
            if self.A != len(obj.AMINO_ACIDS):
                raise ConfigError(f"n-gram objectives need alphabet = {len(obj.AMINO_ACIDS)}, got {self.A}")
            for g in names:
                if not g:
                    raise ConfigError("empty n-gram")
                if any(ch not in obj.AMINO_ACIDS for ch in g):
                    raise ConfigError(f"n-gram {g!r} uses symbols outside {obj.AMINO_ACIDS}")
            self.mode = "ngram"
            self.n_objectives = len(names)
        self.grams = names
        # prefix offsets for the tabular index: level k holds A**k states
        self._level_offset = np.cumsum([0] + [self.A**k for k in range(self.L + 1)])
        total = int(self._level_offset[-1]) + self.A**self.L
        self.n_states = total if total <= desc.enum_cap else None

    def objective_names(self) -> list[str]:
        return list(self.grams)

    def lengths(self, batch: StateBatch) -> np.ndarray:
        return np.sum(batch.cells >= 0, axis=1)

    def initial_batch(self, n: int) -> StateBatch:
        return StateBatch(np.full((n, self.L), -1, dtype=np.int64), np.zeros(n, dtype=bool))

    def forward_mask(self, batch: StateBatch) -> np.ndarray:
        if batch.terminal.any():
            raise ContractViolation("forward actions requested at a terminal state")
        n = self.lengths(batch)
        mask = np.zeros((len(batch), self.n_forward), dtype=bool)
        grow = n < self.L
        mask[:, : self.A] = (grow & (n > 0))[:, None]
        mask[:, self.A : 2 * self.A] = grow[:, None]
        mask[:, 2 * self.A] = n == self.L
        return mask

    def backward_mask(self, batch: StateBatch) -> np.ndarray:
        if self.is_initial(batch).any():
            raise ContractViolation("backward actions requested at the initial state")
        n = self.lengths(batch)
        term = batch.terminal
        mask = np.zeros((len(batch), 3), dtype=bool)
        mask[:, DROP_FIRST] = ~term & (n >= 2)
        mask[:, DROP_LAST] = ~term
        mask[:, UNDO_TERMINAL] = term
        return mask

    def step_batch(self, batch: StateBatch, actions) -> StateBatch:
        actions = np.asarray(actions)
        cells = batch.cells.copy()
        terminal = batch.terminal.copy()
        n = self.lengths(batch)
        pre = np.flatnonzero(actions < self.A)
        if pre.size:
            cells[pre, 1:] = batch.cells[pre, :-1]
            cells[pre, 0] = actions[pre]
        app = np.flatnonzero((actions >= self.A) & (actions < 2 * self.A))
        cells[app, n[app]] = actions[app] - self.A
        terminal[actions == 2 * self.A] = True
        return StateBatch(cells, terminal)

    def unstep_batch(self, batch: StateBatch, actions) -> StateBatch:
        actions = np.asarray(actions)
        cells = batch.cells.copy()
        terminal = batch.terminal.copy()
        n = self.lengths(batch)
        first = np.flatnonzero(actions == DROP_FIRST)
        if first.size:
            cells[first, :-1] = batch.cells[first, 1:]
            cells[first, -1] = -1
        last = np.flatnonzero(actions == DROP_LAST)
        cells[last, n[last] - 1] = -1
        terminal[actions == UNDO_TERMINAL] = False
        return StateBatch(cells, terminal)

    def reverse_action(self, parent: StateBatch, fwd_actions) -> np.ndarray:
        a = np.asarray(fwd_actions)
        return np.where(a < self.A, DROP_FIRST, np.where(a < 2 * self.A, DROP_LAST, UNDO_TERMINAL))

    def forward_of_backward(self, child: StateBatch, bwd_actions) -> np.ndarray:
        b = np.asarray(bwd_actions)
        n = self.lengths(child)
        rows = np.arange(len(child))
        last = child.cells[rows, np.maximum(n - 1, 0)]
        return np.where(b == DROP_FIRST, child.cells[:, 0], np.where(b == DROP_LAST, self.A + last, 2 * self.A))

    def features(self, batch: StateBatch) -> np.ndarray:
        n = len(batch)
        feats = np.zeros((n, self.feature_width))
        # channel A marks an empty position
        channel = np.where(batch.cells >= 0, batch.cells, self.A)
        cols = channel + (self.A + 1) * np.arange(self.L)
        feats[np.arange(n)[:, None], cols] = 1.0
        feats[:, -1] = batch.terminal
        return feats

    def to_string(self, cells) -> str:
        return "".join(obj.AMINO_ACIDS[c] for c in cells if c >= 0)

    def objective_batch(self, batch: StateBatch) -> np.ndarray:
        if np.any(self.lengths(batch) != self.L):
            raise ContractViolation("objective requires complete sequences")
        if self.mode == "bag":
            if self.L != obj.BAG_SIZE:
                raise ContractViolation(f"bag objective needs length {obj.BAG_SIZE}, got {self.L}")
            vals = [obj.bag(row, self.desc.seed, self.A) for row in batch.cells]
            return np.array(vals)[:, None]
        return np.stack([obj.ngram(self.to_string(row), self.grams) for row in batch.cells])

    def _base_index(self, cells, n) -> np.ndarray:
        powers = self.A ** np.arange(self.L - 1, -1, -1, dtype=np.int64)
        digits = np.where(cells >= 0, cells, 0)
        # left-aligned digits; shift down so the value only depends on filled positions
        full = digits @ powers
        return full // (self.A ** (self.L - n))

    def state_index(self, batch: StateBatch) -> np.ndarray:
        if self.n_states is None:
            raise CapabilityError("state space exceeds the enumeration cap; use a network model")
        n = self.lengths(batch)
        idx = self._level_offset[n] + self._base_index(batch.cells, n)
        return np.where(batch.terminal, self._level_offset[-1] + idx - self._level_offset[self.L], idx)

    def terminal_count(self) -> int:
        return self.A**self.L

    def terminal_index(self, batch: StateBatch) -> np.ndarray:
        return self._base_index(batch.cells, np.full(len(batch), self.L))

    def terminals_from_index(self, idx) -> StateBatch:
        idx = np.asarray(idx, dtype=np.int64)
        cells = np.stack(np.unravel_index(idx, (self.A,) * self.L), axis=1).astype(np.int64)
        return StateBatch(cells, np.ones(len(cells), dtype=bool))

    def iter_terminal_batches(self, chunk: int = 65536) -> Iterator[StateBatch]:
        total = self.terminal_count()
        if total > self.desc.enum_cap:
            raise CapabilityError(
                f"{total} terminals exceed the enumeration cap {self.desc.enum_cap}; "
                "use sampling-based evaluation instead"
            )
        for start in range(0, total, chunk):
            yield self.terminals_from_index(np.arange(start, min(total, start + chunk)))
