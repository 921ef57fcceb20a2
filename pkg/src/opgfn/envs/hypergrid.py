"""HyperGrid: increment one coordinate at a time, stop anywhere."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ConfigError, ContractViolation
from . import objectives as obj
from .base import Env, EnvDescriptor, StateBatch


class HyperGrid(Env):
    """D-dimensional grid of side H.

    Forward actions ``0..D-1`` increment a coordinate, action ``D`` moves to
    the terminal copy of the current state. Backward actions ``0..D-1``
    decrement a coordinate and ``D`` undoes the terminal move.
    """

    def __init__(self, desc: EnvDescriptor):
        self.desc = desc
        self.D = int(desc.dim)
        self.H = int(desc.side)
        self.width = self.D
        self.n_forward = self.D + 1
        self.n_backward = self.D + 1
        self.max_traj_len = self.D * (self.H - 1) + 1
        self.feature_width = self.D * self.H + 1
        self.n_states = 2 * self.H**self.D
        if desc.kind == "cosine-grid":
            self.n_objectives = 1
        elif desc.objectives and desc.objectives != ("hypergrid",):
            for name in desc.objectives:
                if name not in obj.MOO_OBJECTIVES:
                    raise ConfigError(f"unknown objective {name!r}; expected one of {obj.MOO_OBJECTIVES}")
            if self.D != 2:
                raise ConfigError("multi-objective HyperGrid requires dim = 2")
            self.n_objectives = len(desc.objectives)
        else:
            self.n_objectives = 1

    def initial_batch(self, n: int) -> StateBatch:
        return StateBatch(np.zeros((n, self.D), dtype=np.int64), np.zeros(n, dtype=bool))

    def forward_mask(self, batch: StateBatch) -> np.ndarray:
        if batch.terminal.any():
            raise ContractViolation("forward actions requested at a terminal state")
        mask = np.ones((len(batch), self.n_forward), dtype=bool)
        mask[:, : self.D] = batch.cells < self.H - 1
        return mask

    def backward_mask(self, batch: StateBatch) -> np.ndarray:
        if self.is_initial(batch).any():
            raise ContractViolation("backward actions requested at the initial state")
        mask = np.zeros((len(batch), self.n_backward), dtype=bool)
        mask[:, : self.D] = (batch.cells > 0) & ~batch.terminal[:, None]
        mask[:, self.D] = batch.terminal
        return mask

    def step_batch(self, batch: StateBatch, actions) -> StateBatch:
        actions = np.asarray(actions)
        cells = batch.cells.copy()
        terminal = batch.terminal.copy()
        move = actions < self.D
        rows = np.flatnonzero(move)
        cells[rows, actions[rows]] += 1
        terminal[~move] = True
        return StateBatch(cells, terminal)

    def unstep_batch(self, batch: StateBatch, actions) -> StateBatch:
        actions = np.asarray(actions)
        cells = batch.cells.copy()
        terminal = batch.terminal.copy()
        move = actions < self.D
        rows = np.flatnonzero(move)
        cells[rows, actions[rows]] -= 1
        terminal[~move] = False
        return StateBatch(cells, terminal)

    def reverse_action(self, parent: StateBatch, fwd_actions) -> np.ndarray:
        return np.asarray(fwd_actions).copy()

    def forward_of_backward(self, child: StateBatch, bwd_actions) -> np.ndarray:
        return np.asarray(bwd_actions).copy()

    def coords(self, batch: StateBatch) -> np.ndarray:
        return batch.cells / (self.H - 1) if self.H > 1 else np.zeros_like(batch.cells, dtype=float)

    def features(self, batch: StateBatch) -> np.ndarray:
        n = len(batch)
        feats = np.zeros((n, self.feature_width))
        cols = batch.cells + self.H * np.arange(self.D)
        feats[np.arange(n)[:, None], cols] = 1.0
        feats[:, -1] = batch.terminal
        return feats

    def objective_batch(self, batch: StateBatch) -> np.ndarray:
        x = self.coords(batch)
        if self.desc.kind == "cosine-grid":
            return obj.cosine_grid(x, self.desc.r0)[:, None]
        if self.n_objectives > 1 or (self.desc.objectives and self.desc.objectives != ("hypergrid",)):
            return obj.moo_grid(x, self.desc.objectives)
        return obj.hypergrid(x, self.desc.r0)[:, None]

    def _ravel(self, cells) -> np.ndarray:
        return np.ravel_multi_index(tuple(cells.T), (self.H,) * self.D)

    def state_index(self, batch: StateBatch) -> np.ndarray:
        return self._ravel(batch.cells) + batch.terminal * self.H**self.D

    def terminal_count(self) -> int:
        return self.H**self.D

    def terminal_index(self, batch: StateBatch) -> np.ndarray:
        return self._ravel(batch.cells)

    def terminals_from_index(self, idx) -> StateBatch:
        cells = np.stack(np.unravel_index(np.asarray(idx), (self.H,) * self.D), axis=1).astype(np.int64)
        return StateBatch(cells, np.ones(len(cells), dtype=bool))

    def iter_terminal_batches(self, chunk: int = 65536) -> Iterator[StateBatch]:
        total = self.terminal_count()
        for start in range(0, total, chunk):
            yield self.terminals_from_index(np.arange(start, min(total, start + chunk)))
