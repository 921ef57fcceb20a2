"""Central finite-difference check of taped gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tape as ad
from .params import ParamStore


def taped_gradient(loss_fn: Callable, store: ParamStore) -> tuple[float, np.ndarray]:
    """``loss_fn(store, tape)`` must return a scalar Node when given a tape."""
    tape = ad.Tape(store)
    out = loss_fn(store, tape)
    return float(ad.value(out)), ad.backward(tape, out)


def finite_difference(loss_fn: Callable, store: ParamStore, coords, h: float = 1e-5) -> np.ndarray:
    fd = np.zeros(len(coords))
    for j, i in enumerate(coords):
        orig = store.data[i]
        store.data[i] = orig + h
        plus = float(ad.value(loss_fn(store, None)))
        store.data[i] = orig - h
        minus = float(ad.value(loss_fn(store, None)))
        store.data[i] = orig
        fd[j] = (plus - minus) / (2.0 * h)
    return fd


def gradient_check(
    loss_fn: Callable,
    store: ParamStore,
    n_coords: int = 64,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Relative error ||autodiff - fd|| / ||fd|| on random coordinates.

    Coordinates are sampled among those with a nonzero taped gradient when
    there are enough of them, so the check is not dominated by exact zeros.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    _, grad = taped_gradient(loss_fn, store)
    active = np.flatnonzero(grad)
    pool = active if active.size >= n_coords else np.arange(store.size)
    coords = rng.choice(pool, size=min(n_coords, pool.size), replace=False)
    fd = finite_difference(loss_fn, store, coords, h)
    denom = max(np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(grad[coords] - fd) / denom)
