"""Candidate boosting: oversample, keep the candidates the model ranks highest."""

from __future__ import annotations

import numpy as np

from ..envs.base import StateBatch
from ..errors import ConfigError
from ..gfn.exact import terminal_log_rewards
from .sampling import sample_trajectories


def boost_sample(env, model, n_candidates: int, k: int, rng: np.random.Generator, kind: str = "TB", cond=None):
    """Draw ``n_candidates`` terminals and keep the ``k`` with largest learned log-reward.

    The true objective is evaluated only on the kept terminals.

    Returns:
        (states, u, log_rhat) for the kept terminals, best first.
    """
    if not 0 < k <= n_candidates:
        raise ConfigError(f"boosting needs 0 < k <= candidates, got k={k}, candidates={n_candidates}")
    c = None if cond is None else np.atleast_2d(np.asarray(cond, dtype=float))[:1]
    rows = None if c is None else np.repeat(c, n_candidates, axis=0)
    tb = sample_trajectories(env, model, n_candidates, rng, cond=rows, evaluate=False)
    final = tb.final_states()
    score = terminal_log_rewards(model, kind, final, cond=c) if kind != "TB" else _tb_scores(model, tb, final, c)
    score = np.asarray(score, dtype=float).reshape(-1)
    order = np.argsort(-score, kind="stable")[:k]
    kept = StateBatch(final.cells[order], final.terminal[order])
    return kept, env.objective_batch(kept), score[order]


def _tb_scores(model, tb, final, cond):
    # exact log P_T needs enumeration; on a sampled trajectory logZ + logPF - logPB
    # is the per-trajectory estimate that the balance loss drives to log R̂
    if model.env.n_states is not None and cond is None:
        return terminal_log_rewards(model, "TB", final)
    return model.logZ() + tb.logpf - tb.logpb
