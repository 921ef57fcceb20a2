"""Parametrized forward/backward policies, state flows and log Z."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import tape as ad
from ..autodiff.net import LOGIT_CLIP, NetSpec, forward_eval, init_params
from ..autodiff.params import ParamStore
from ..envs.base import Env, StateBatch, TrajectoryBatch
from ..errors import ConfigError

PB_MODES = ("uniform", "trainable")


@dataclass
class ModelConfig:
    tabular: bool = True
    hidden: tuple = (256, 256)
    activation: str = "relu"
    pb_mode: str = "uniform"
    cond_dim: int = 0  # width of a preference vector appended to the features

    def __post_init__(self):
        if self.pb_mode not in PB_MODES:
            raise ConfigError(f"model.pb_mode must be one of {PB_MODES}, got {self.pb_mode!r}")
        if self.tabular and self.cond_dim:
            raise ConfigError("preference conditioning needs a network model (model.tabular = false)")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrajEval:
    """Per-transition quantities of a trajectory batch.

    Transition ``j`` goes from ``s_t`` to ``s_{t+1}`` of trajectory
    ``traj[j]`` with ``t = step[j]``. Entries are Nodes when a tape was given.
    """

    traj: np.ndarray
    step: np.ndarray
    n_actions: np.ndarray
    logpf: object  # (M,)
    logpb: object  # (M,)
    logF_parent: object  # (M,)
    logF_child: object  # (M,)
    logF_terminal: object  # (B,)
    sum_logpf: object  # (B,)
    sum_logpb: object  # (B,)
    logZ: object  # scalar
    pb_logp: object  # (M, n_backward) log P_B rows at the child states
    bmask: np.ndarray  # (M, n_backward)
    pf_logits_parent: object  # (M, n_forward) clipped raw forward logits
    fmask: np.ndarray  # (M, n_forward)
    child_states: StateBatch


class FlowModel:
    """Shared encoder with forward-logit, backward-logit and log-flow heads.

    log Z lives in its own scalar slice named ``logZ`` so it can get its own
    learning rate.
    """

    def __init__(self, env: Env, cfg: ModelConfig, rng: np.random.Generator):
        self.env = env
        self.cfg = cfg
        heads = {"pf": env.n_forward, "pb": env.n_backward, "flow": 1}
        if cfg.tabular:
            if env.n_states is None:
                raise ConfigError("tabular model needs an enumerable state space")
            width = env.n_states
        else:
            width = env.feature_width + cfg.cond_dim
        self.spec = NetSpec(width, cfg.hidden, cfg.activation, heads, cfg.tabular)
        self.store = ParamStore()
        self.store.add("logZ", np.zeros(()))
        init_params(self.spec, rng, self.store)

    # ---- raw heads --------------------------------------------------------
    def inputs(self, states: StateBatch, cond=None):
        if self.cfg.tabular:
            return self.env.state_index(states)
        feats = self.env.features(states)
        if self.cfg.cond_dim:
            if cond is None:
                raise ConfigError("conditioned model evaluated without a preference vector")
            feats = np.concatenate([feats, np.asarray(cond, dtype=float)], axis=1)
        return feats

    def heads(self, states: StateBatch, tape=None, cond=None, store: ParamStore | None = None) -> dict:
        out = forward_eval(self.spec, store or self.store, self.inputs(states, cond), tape)
        return {k: ad.clip(v, -LOGIT_CLIP, LOGIT_CLIP) for k, v in out.items()}

    def logZ(self, tape=None, store: ParamStore | None = None):
        if tape is not None:
            return tape.param("logZ")
        return float((store or self.store).view("logZ"))

    # ---- policies ---------------------------------------------------------
    def forward_logprobs(self, states: StateBatch, tape=None, cond=None) -> object:
        mask = self.env.forward_mask(states)
        return ad.log_softmax_masked(self.heads(states, tape, cond)["pf"], mask)

    def backward_logprobs(self, states: StateBatch, tape=None, cond=None, pb_logits=None) -> object:
        mask = self.env.backward_mask(states)
        if self.cfg.pb_mode == "uniform":
            counts = mask.sum(axis=1, keepdims=True)
            return np.where(mask, -np.log(counts), ad.MASKED_LOGPROB)
        if pb_logits is None:
            pb_logits = self.heads(states, tape, cond)["pb"]
        return ad.log_softmax_masked(pb_logits, mask)

    def log_flow(self, states: StateBatch, tape=None, cond=None):
        return ad.reshape(self.heads(states, tape, cond)["flow"], (-1,))

    # ---- trajectories -----------------------------------------------------
    def evaluate(self, tb: TrajectoryBatch, tape=None, cond=None) -> TrajEval:
        """One forward pass over every state of every trajectory in ``tb``."""
        env = self.env
        B = len(tb)
        n = np.asarray(tb.n_actions, dtype=np.int64)
        s_b = np.repeat(np.arange(B), n + 1)
        s_t = np.concatenate([np.arange(k + 1) for k in n]) if B else np.zeros(0, dtype=np.int64)
        states = StateBatch(tb.cells[s_b, s_t], tb.terminal[s_b, s_t])
        state_cond = None if cond is None else np.asarray(cond)[s_b]
        h = self.heads(states, tape, state_cond)

        off = np.concatenate([[0], np.cumsum(n + 1)[:-1]]).astype(np.int64)
        traj = np.repeat(np.arange(B), n)
        step = np.concatenate([np.arange(k) for k in n]) if B else np.zeros(0, dtype=np.int64)
        parent = off[traj] + step
        child = parent + 1
        parents, children = states[parent], states[child]

        fwd = tb.fwd_actions[traj, step]
        bwd = tb.bwd_actions[traj, step]
        fmask = env.forward_mask(parents)
        pf_logits = ad.getitem(h["pf"], parent)
        logpf = ad.pick(ad.log_softmax_masked(pf_logits, fmask), fwd)
        bmask = env.backward_mask(children)
        pb_rows = self.backward_logprobs(children, tape, pb_logits=ad.getitem(h["pb"], child))
        logpb = ad.pick(pb_rows, bwd)

        logF = ad.reshape(h["flow"], (-1,))
        last = off + n
        return TrajEval(
            traj=traj,
            step=step,
            n_actions=n,
            logpf=logpf,
            logpb=logpb,
            logF_parent=ad.getitem(logF, parent),
            logF_child=ad.getitem(logF, child),
            logF_terminal=ad.getitem(logF, last),
            sum_logpf=ad.scatter_add(logpf, traj, B),
            sum_logpb=ad.scatter_add(logpb, traj, B),
            logZ=self.logZ(tape),
            pb_logp=pb_rows,
            bmask=bmask,
            pf_logits_parent=pf_logits,
            fmask=fmask,
            child_states=children,
        )

    def log_reward_tb(self, tb: TrajectoryBatch, tape=None, cond=None):
        """log R̂ = log Z + sum log P_F - sum log P_B along each trajectory."""
        ev = self.evaluate(tb, tape, cond)
        return ad.sub(ad.add(ev.logZ, ev.sum_logpf), ev.sum_logpb)
