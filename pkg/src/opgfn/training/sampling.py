"""Forward trajectory sampling and backward trajectory augmentation."""

from __future__ import annotations

import numpy as np

from ..autodiff import tape as ad
from ..envs.base import Env, StateBatch, TrajectoryBatch


def stream(seed: int, round_idx: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (seed, round, purpose) triple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(round_idx), int(purpose)]))


def _choose(probs: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Inverse-CDF choice per row; zero-probability entries are never picked."""
    cdf = np.cumsum(probs, axis=1)
    return np.argmax(cdf > draws[:, None] * cdf[:, -1:], axis=1)


def _finish(cells, terminal, fwd, bwd, n_act, u, logpf=None, logpb=None) -> TrajectoryBatch:
    T = int(n_act.max()) if n_act.size else 0
    t = np.arange(T + 1)
    # repeat the terminal state past the end of each trajectory
    src = np.minimum(t[None, :], n_act[:, None])
    rows = np.arange(len(n_act))[:, None]
    return TrajectoryBatch(
        cells[rows, src],
        terminal[rows, src],
        fwd[:, :T],
        bwd[:, :T],
        n_act,
        u,
        logpf,
        logpb,
    )


def sample_trajectories(
    env: Env,
    model,
    n: int,
    rng: np.random.Generator,
    epsilon: float = 0.0,
    temperature: float = 1.0,
    cond=None,
    store=None,
    evaluate: bool = True,
) -> TrajectoryBatch:
    """Roll out ``n`` trajectories from s0 with the forward policy.

    ``model=None`` gives the uniform policy over legal actions, as does
    ``epsilon=1`` for any model. Temperature and epsilon-mixing only shape the sampling
    distribution; the cached ``logpf``/``logpb`` are the clean model
    probabilities used by the losses. ``store`` overrides the model's
    parameters (used for a soft-updated sampling copy). With
    ``evaluate=False`` the objectives are left as NaN.
    """
    T = env.max_traj_len
    draws = rng.random((n, T))
    W = env.width
    cells = np.empty((n, T + 1, W), dtype=np.int64)
    terminal = np.zeros((n, T + 1), dtype=bool)
    fwd = np.full((n, T), -1, dtype=np.int64)
    bwd = np.full((n, T), -1, dtype=np.int64)
    n_act = np.zeros(n, dtype=np.int64)
    logpf = np.zeros(n)
    logpb = np.zeros(n)
    cur = env.initial_batch(n)
    cells[:, 0] = cur.cells
    active = np.arange(n)
    trainable_pb = model is not None and model.cfg.pb_mode == "trainable"
    t = 0
    while active.size:
        s = cur[active]
        mask = env.forward_mask(s)
        if model is None:
            probs = mask / mask.sum(axis=1, keepdims=True)
            clean = np.where(mask, np.log(probs, where=mask, out=np.zeros_like(probs)), ad.MASKED_LOGPROB)
        else:
            h = model.heads(s, cond=None if cond is None else np.asarray(cond)[active], store=store)
            clean = ad.log_softmax_masked(h["pf"], mask)
            probs = ad.softmax_masked(h["pf"], mask, temperature, epsilon)
            if trainable_pb and t > 0:
                # P_B at s for the transition that produced it
                pb = ad.log_softmax_masked(h["pb"], env.backward_mask(s))
                logpb[active] += pb[np.arange(active.size), bwd[active, t - 1]]
        a = _choose(probs, draws[active, t])
        nxt = env.step_batch(s, a)
        fwd[active, t] = a
        bwd[active, t] = env.reverse_action(s, a)
        logpf[active] += clean[np.arange(active.size), a]
        if not trainable_pb and model is not None:
            logpb[active] -= np.log(env.backward_mask(nxt).sum(axis=1))
        cells[active, t + 1] = nxt.cells
        terminal[active, t + 1] = nxt.terminal
        cur.cells[active] = nxt.cells
        cur.terminal[active] = nxt.terminal
        n_act[active] += 1
        active = active[~nxt.terminal]
        t += 1
    final = StateBatch(cells[np.arange(n), n_act], terminal[np.arange(n), n_act])
    u = env.objective_batch(final) if evaluate else np.full((n, env.n_objectives), np.nan)
    if model is None:
        logpf = logpb = None
    return _finish(cells, terminal, fwd, bwd, n_act, u, logpf, logpb)


def augment_backward(
    env: Env,
    terminals: StateBatch,
    u,
    count: int,
    rng: np.random.Generator,
    model=None,
    cond=None,
) -> TrajectoryBatch | None:
    """``count`` trajectories per terminal, sampled by walking P_B back to s0.

    ``model=None`` or a model with uniform P_B uses the uniform backward
    sampler. The cached objective ``u`` is reused, never re-evaluated.
    Returns None when there is nothing to augment.
    """
    u = np.asarray(u, dtype=float)
    if count <= 0 or len(terminals) == 0:
        return None
    idx = np.repeat(np.arange(len(terminals)), count)
    n = idx.size
    T = env.max_traj_len
    draws = rng.random((n, T))
    cur = terminals[idx]
    cur = StateBatch(cur.cells.copy(), cur.terminal.copy())
    rcells = np.empty((n, T + 1, env.width), dtype=np.int64)
    rterm = np.zeros((n, T + 1), dtype=bool)
    rb = np.full((n, T), -1, dtype=np.int64)
    rf = np.full((n, T), -1, dtype=np.int64)
    n_act = np.zeros(n, dtype=np.int64)
    rcells[:, 0] = cur.cells
    rterm[:, 0] = cur.terminal
    use_model = model is not None and model.cfg.pb_mode == "trainable"
    active = np.flatnonzero(~env.is_initial(cur))
    k = 0
    while active.size:
        s = cur[active]
        mask = env.backward_mask(s)
        if use_model:
            c = None if cond is None else np.asarray(cond)[idx[active]]
            probs = ad.softmax_masked(model.heads(s, cond=c)["pb"], mask)
        else:
            probs = mask / mask.sum(axis=1, keepdims=True)
        b = _choose(probs, draws[active, k])
        prev = env.unstep_batch(s, b)
        rb[active, k] = b
        rf[active, k] = env.forward_of_backward(s, b)
        rcells[active, k + 1] = prev.cells
        rterm[active, k + 1] = prev.terminal
        cur.cells[active] = prev.cells
        cur.terminal[active] = prev.terminal
        n_act[active] += 1
        active = active[~env.is_initial(prev)]
        k += 1
    # reverse: forward step t is backward step n-1-t
    Tm = int(n_act.max())
    t = np.arange(Tm + 1)
    rows = np.arange(n)[:, None]
    src = np.clip(n_act[:, None] - t[None, :], 0, None)
    cells = rcells[rows, src]
    terminal = rterm[rows, src]
    ts = np.arange(Tm)
    bsrc = n_act[:, None] - 1 - ts[None, :]
    valid = bsrc >= 0
    bsrc = np.where(valid, bsrc, 0)
    fwd = np.where(valid, rf[rows, bsrc], -1)
    bwd = np.where(valid, rb[rows, bsrc], -1)
    return TrajectoryBatch(cells, terminal, fwd, bwd, n_act, u[idx])
