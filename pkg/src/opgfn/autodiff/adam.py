"""Adam with bias correction, per-slice learning rates and global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation, StepRejected
from .params import ParamStore


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    lr_overrides: dict = field(default_factory=dict)  # slice name -> lr
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    t: int = 0

    @classmethod
    def for_store(cls, store: ParamStore, **kwargs) -> "AdamState":
        return cls(np.zeros(store.size), np.zeros(store.size), **kwargs)

    def lr_vector(self, store: ParamStore) -> np.ndarray:
        lrs = np.full(store.size, self.lr)
        for name, lr in self.lr_overrides.items():
            if name in store.slices:
                start, stop, _ = store.slices[name]
                lrs[start:stop] = lr
        return lrs


def clip_by_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads


def adam_step(store: ParamStore, grads: np.ndarray, state: AdamState) -> ParamStore:
    """Apply one Adam update in place and return ``store``.

    A non-finite gradient leaves both the store and the optimizer state
    untouched and raises StepRejected.
    """
    grads = np.asarray(grads, dtype=float)
    if grads.shape != store.data.shape or state.m.shape != store.data.shape:
        raise ContractViolation(
            f"shape mismatch: params {store.data.shape}, grads {grads.shape}, moments {state.m.shape}"
        )
    bad = ~np.isfinite(grads)
    if bad.any():
        where = [n for n, (a, b, _) in store.slices.items() if bad[a:b].any()]
        raise StepRejected(f"non-finite gradient in slices {where}; step skipped")
    if state.clip_norm is not None:
        grads = clip_by_norm(grads, state.clip_norm)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    store.data -= state.lr_vector(store) * m_hat / (np.sqrt(v_hat) + state.eps)
    return store
