"""Exact quantities on enumerable environments by dynamic programming."""

from __future__ import annotations

import numpy as np

from ..autodiff import tape as ad
from ..envs.base import Env, StateBatch


def terminal_log_probs(env: Env, model=None, cond=None) -> np.ndarray:
    """log P_T(x) of the forward sampler for every terminal (terminal-index order).

    Propagates probability mass level by level; every state of one level has
    the same distance from s0 in the supported environments, so each state is
    expanded once. ``model=None`` uses the uniform forward policy.
    """
    out = np.full(env.terminal_count(), -np.inf)
    frontier = env.initial_batch(1)
    logp = np.zeros(1)
    while len(frontier):
        mask = env.forward_mask(frontier)
        if model is None:
            lp = np.where(mask, -np.log(mask.sum(axis=1, keepdims=True)), ad.MASKED_LOGPROB)
        else:
            c = None if cond is None else np.repeat(np.atleast_2d(cond), len(frontier), axis=0)
            lp = model.forward_logprobs(frontier, cond=c)
        rows, acts = np.nonzero(mask)
        child = env.step_batch(frontier[rows], acts)
        clp = logp[rows] + lp[rows, acts]
        term = child.terminal
        if term.any():
            np.logaddexp.at(out, env.terminal_index(child[term]), clp[term])
        rest = child[~term]
        if len(rest) == 0:
            break
        uniq, first, inverse = np.unique(rest.cells, axis=0, return_index=True, return_inverse=True)
        logp = np.full(uniq.shape[0], -np.inf)
        np.logaddexp.at(logp, inverse.reshape(-1), clp[~term])
        frontier = rest[first]
    return out


def terminal_log_rewards(model, kind: str, terminals: StateBatch | None = None, cond=None) -> np.ndarray:
    """Learned log R̂ for each terminal, independent of any sampled trajectory.

    TB: log Z + log P_T(x) (equal to the per-trajectory value once TB holds);
    FM: the edge flow into x; DB/subTB: the flow head at x. With
    ``terminals=None`` every terminal is evaluated in terminal-index order.
    """
    env = model.env
    if terminals is None:
        terminals = env.all_terminals()
    if kind == "TB":
        full = model.logZ() + terminal_log_probs(env, model, cond)
        return full[env.terminal_index(terminals)]
    c = None if cond is None else np.repeat(np.atleast_2d(cond), len(terminals), axis=0)
    if kind == "FM":
        undo = np.flatnonzero(env.backward_mask(terminals)[0])[0]
        parents = env.unstep_batch(terminals, np.full(len(terminals), undo))
        return model.heads(parents, cond=c)["pf"][:, env.n_forward - 1]
    return model.log_flow(terminals, cond=c)


def reachable_states(env: Env) -> StateBatch:
    """Every state reachable from s0 (including s0 and the terminals), level by level."""
    frontier = env.initial_batch(1)
    levels = [frontier]
    while len(frontier):
        mask = env.forward_mask(frontier)
        rows, acts = np.nonzero(mask)
        child = env.step_batch(frontier[rows], acts)
        if len(child) == 0:
            break
        key = np.concatenate([child.cells, child.terminal[:, None].astype(np.int64)], axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        child = child[np.sort(first)]
        levels.append(child)
        frontier = child[~child.terminal]
    return StateBatch.concat(levels)


def mean_backward_kl(model, states: StateBatch | None = None) -> float:
    """Mean over non-initial states of KL(P_B(.|s) || uniform over legal parents)."""
    env = model.env
    if states is None:
        states = reachable_states(env)
    states = states[~env.is_initial(states)]
    mask = env.backward_mask(states)
    logpb = np.asarray(model.backward_logprobs(states), dtype=float)
    p = np.where(mask, np.exp(logpb), 0.0)
    log_u = -np.log(mask.sum(axis=1, keepdims=True))
    kl = np.sum(np.where(mask, p * (logpb - log_u), 0.0), axis=1)
    return float(kl.mean())
