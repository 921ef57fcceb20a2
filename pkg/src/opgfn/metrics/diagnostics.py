"""Single-objective exploration diagnostics and the learned-reward landscape."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapabilityError
from .pareto import nondominated_mask


@dataclass(frozen=True)
class ExplorationRatios:
    visited: float  # distinct visited terminals / all terminals
    max_found: float  # distinct visited maximal terminals / all maximal terminals
    max_recent: float  # share of the recent window that lands on maximal terminals


def all_objectives(env) -> np.ndarray:
    """Objective of every terminal, in terminal-index order."""
    try:
        return np.concatenate([env.objective_batch(b) for b in env.iter_terminal_batches()])
    except CapabilityError as exc:
        raise CapabilityError(f"diagnostics need an enumerable environment: {exc}") from exc


def maximal_mask(u: np.ndarray) -> np.ndarray:
    """Maximal terminals: the argmax set for one objective, the Pareto set otherwise."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1 or u.shape[1] == 1:
        flat = u.reshape(-1)
        return flat == flat.max()
    return nondominated_mask(u)


def exploration_ratios(visits, is_max: np.ndarray, recent: int = 4000, distinct_recent: bool = False) -> ExplorationRatios:
    """Ratios from a stream of visited terminal indices.

    With ``distinct_recent`` the third ratio counts distinct maximal terminals
    in the recent window (divided by the window size) instead of maximal
    visits with multiplicity.
    """
    visits = np.asarray(visits, dtype=np.int64)
    n_total = is_max.size
    n_max = int(is_max.sum())
    seen = np.zeros(n_total, dtype=bool)
    seen[visits] = True
    window = visits[-recent:]
    if distinct_recent:
        hits = np.unique(window[is_max[window]]).size
    else:
        hits = int(is_max[window].sum())
    return ExplorationRatios(
        visited=float(seen.sum() / n_total),
        max_found=float((seen & is_max).sum() / n_max) if n_max else 0.0,
        max_recent=float(hits / recent),
    )


def target_distribution(u, beta: float = 1.0) -> np.ndarray:
    """R(x)^beta / Z_beta over all terminals, computed in log space."""
    logr = beta * np.log(np.asarray(u, dtype=float).reshape(-1))
    logr -= logr.max()
    p = np.exp(logr)
    return p / p.sum()


def l1_to_target(window, u, beta: float = 1.0) -> float:
    """sum_x |empirical(x) - R(x)^beta / Z_beta| over the visit window."""
    target = target_distribution(u, beta)
    window = np.asarray(window, dtype=np.int64)
    if window.size == 0:
        return float(np.abs(target).sum())
    emp = np.bincount(window, minlength=target.size) / window.size
    return float(np.abs(emp - target).sum())


def reward_landscape(u, log_rhat, normalize: bool = False) -> list[tuple[float, float]]:
    """Mean learned log-reward per distinct objective level, sorted by level.

    With ``normalize`` the group means are shifted so that their linear-domain
    values sum to 1 (useful for plotting against the normalized objective).
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    log_rhat = np.asarray(log_rhat, dtype=float).reshape(-1)
    levels, inverse = np.unique(u, return_inverse=True)
    sums = np.bincount(inverse, weights=log_rhat)
    means = sums / np.bincount(inverse)
    if normalize:
        m = means.max()
        means = means - (m + np.log(np.sum(np.exp(means - m))))
    return [(float(a), float(b)) for a, b in zip(levels, means)]
