"""Balance losses, the order-preserving loss and their composition.

All probabilities are handled as logs. Loss functions take either a tape-backed
:class:`~opgfn.gfn.model.TrajEval` (Nodes) or a plain one (arrays) and return
a matching scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import tape as ad
from ..envs.base import StateBatch, TrajectoryBatch
from ..errors import ConfigError, ContractViolation
from .model import FlowModel, TrajEval

LOSS_KINDS = ("FM", "DB", "TB", "subTB")
PAIRINGS = ("auto", "pareto", "sorted-neighbors", "all-pairs")
LOG_REWARD_FLOOR = np.log(1e-12)


@dataclass
class LossConfig:
    kind: str = "TB"
    order_preserving: bool = True
    lambda_op: float = 1.0
    lambda_kl: float = 0.0
    lambda_subtb: float = 0.9
    beta: float = 1.0
    pairing: str = "auto"
    epsilon: float = 0.0
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss.kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"loss.pairing must be one of {PAIRINGS}, got {self.pairing!r}")
        if self.lambda_op < 0 or self.lambda_kl < 0:
            raise ConfigError("loss.lambda_op and loss.lambda_kl must be nonnegative")
        if not 0 < self.lambda_subtb <= 1:
            raise ConfigError("loss.lambda_subtb must lie in (0, 1]")
        if self.beta < 1:
            raise ConfigError("loss.beta must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ConfigError("loss.epsilon must lie in [0, 1)")
        if self.temperature <= 0:
            raise ConfigError("loss.temperature must be positive")

    def resolved_pairing(self, n_objectives: int) -> str:
        if self.pairing == "auto":
            return "sorted-neighbors" if n_objectives == 1 else "pareto"
        if n_objectives > 1 and self.pairing != "pareto":
            raise ConfigError(
                f"loss.pairing = {self.pairing} compares scalars; use pareto (or auto) with {n_objectives} objectives"
            )
        return self.pairing


# ---------------------------------------------------------------------------
# order-preserving loss


def pareto_mask(u) -> np.ndarray:
    """True for points not strictly dominated by another point (duplicates kept)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    ge = np.all(u[None, :, :] >= u[:, None, :], axis=2)  # ge[i, j]: u_j >= u_i
    gt = np.any(u[None, :, :] > u[:, None, :], axis=2)
    return ~np.any(ge & gt, axis=1)


def op_loss_pareto(log_rhat, u):
    """KL(P_y || R̂-normalized) on one batch, with P_y uniform on its Pareto set."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] < 2:
        raise ContractViolation("order-preserving loss needs a batch of at least 2 terminals")
    y = pareto_mask(u)
    logp = -np.log(y.sum())
    logq = ad.sub(log_rhat, ad.logsumexp(log_rhat, axis=0))
    # only Pareto members carry label mass
    return ad.sum(ad.mul(np.where(y, np.exp(logp), 0.0), ad.sub(np.where(y, logp, 0.0), logq)))


def _xlogx(p):
    return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def op_loss_pairwise(log_rhat_a, log_rhat_b, u_a, u_b):
    """Sum over pairs of KL between the pairwise label and R̂(a)/(R̂(a)+R̂(b))."""
    u_a = np.asarray(u_a, dtype=float).reshape(-1)
    u_b = np.asarray(u_b, dtype=float).reshape(-1)
    p = ((u_a > u_b).astype(float) + (u_a >= u_b)) / 2.0
    d = ad.sub(log_rhat_a, log_rhat_b)
    # -log q = softplus(-d), -log(1-q) = softplus(d)
    cross = ad.add(ad.mul(p, ad.softplus(ad.neg(d))), ad.mul(1.0 - p, ad.softplus(d)))
    return ad.sum(ad.add(cross, _xlogx(p) + _xlogx(1.0 - p)))


def pairs_for(u, pairing: str) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float).reshape(-1)
    if pairing == "sorted-neighbors":
        order = np.argsort(u, kind="stable")
        return order[:-1], order[1:]
    if pairing == "all-pairs":
        i, j = np.triu_indices(u.size, k=1)
        return i, j
    raise ConfigError(f"pairing {pairing!r} is not a pairwise scheme")


def op_loss(log_rhat, u, pairing: str):
    """Batch order-preserving loss; pairwise schemes are averaged over pairs."""
    u = np.asarray(u, dtype=float)
    if pairing == "pareto":
        return op_loss_pareto(log_rhat, u)
    if u.ndim > 1 and u.shape[1] > 1:
        raise ConfigError("pairwise order-preserving loss needs a single objective")
    if u.reshape(-1).size < 2:
        raise ContractViolation("order-preserving loss needs a batch of at least 2 terminals")
    i, j = pairs_for(u, pairing)
    total = op_loss_pairwise(ad.getitem(log_rhat, i), ad.getitem(log_rhat, j), u.reshape(-1)[i], u.reshape(-1)[j])
    return ad.mul(total, 1.0 / len(i))


# ---------------------------------------------------------------------------
# balance losses


def tb_residual(ev: TrajEval, log_r):
    return ad.sub(ad.sub(ad.add(ev.logZ, ev.sum_logpf), log_r), ev.sum_logpb)


def tb_loss(ev: TrajEval, log_r):
    """Mean over trajectories of (log Z + sum log P_F - log R - sum log P_B)^2."""
    return ad.mean(ad.square(tb_residual(ev, log_r)))


def _terminal_transition(ev: TrajEval) -> np.ndarray:
    return ev.step == ev.n_actions[ev.traj] - 1


def db_loss(ev: TrajEval, log_r=None):
    """Detailed balance summed over transitions, averaged over trajectories.

    With ``log_r`` the terminal flow is replaced by the target log-reward;
    without it the flow head at the terminal state is used (learned reward).
    """
    child = ev.logF_child
    if log_r is not None:
        child = ad.where(_terminal_transition(ev), ad.getitem(log_r, ev.traj), child)
    res = ad.sub(ad.sub(ad.add(ev.logF_parent, ev.logpf), child), ev.logpb)
    return ad.mul(ad.sum(ad.square(res)), 1.0 / len(ev.n_actions))


def fm_terminal_logflow(ev: TrajEval):
    """log F(s_{n-1} -> x): forward edge flow into each terminal."""
    last = np.flatnonzero(_terminal_transition(ev))
    # every environment puts its terminal action at the last forward index
    stop = np.full(last.size, ev.fmask.shape[1] - 1)
    return ad.pick(ad.getitem(ev.pf_logits_parent, last), stop)


def _in_flows(model: FlowModel, states: StateBatch, tape):
    """log of the summed edge flow entering each (non-initial) state."""
    env = model.env
    bmask = env.backward_mask(states)
    K, nb = bmask.shape
    pieces, flat_idx = [], []
    for b in range(nb):
        rows = np.flatnonzero(bmask[:, b])
        if rows.size == 0:
            continue
        sub = states[rows]
        parents = env.unstep_batch(sub, np.full(rows.size, b))
        fa = env.forward_of_backward(sub, np.full(rows.size, b))
        pieces.append(ad.pick(model.heads(parents, tape)["pf"], fa))
        flat_idx.append(rows * nb + b)
    vals = ad.concat(pieces) if len(pieces) > 1 else pieces[0]
    grid = ad.reshape(ad.scatter_add(vals, np.concatenate(flat_idx), K * nb), (K, nb))
    grid = ad.add(grid, np.where(bmask, 0.0, ad.MASKED_LOGPROB))
    return ad.logsumexp(grid, axis=1)


def fm_loss(model: FlowModel, ev: TrajEval, tape=None, log_r=None):
    """Flow matching with edge log-flows given by the forward-logit head.

    Each visited non-terminal state s != s0 contributes (log inflow - log outflow)^2.
    With ``log_r``, each terminal also contributes (log F(s_{n-1} -> x) - log R)^2.
    Summed per trajectory and averaged over trajectories.
    """
    inner = np.flatnonzero(~_terminal_transition(ev))
    total = 0.0
    if inner.size:
        states = ev.child_states[inner]
        log_in = _in_flows(model, states, tape)
        # the out-flow of child j is the logsumexp of the next transition's parent logits
        out_logits = ad.add(ad.getitem(ev.pf_logits_parent, inner + 1), np.where(ev.fmask[inner + 1], 0.0, ad.MASKED_LOGPROB))
        log_out = ad.logsumexp(out_logits, axis=1)
        total = ad.sum(ad.square(ad.sub(log_in, log_out)))
    if log_r is not None:
        total = ad.add(total, ad.sum(ad.square(ad.sub(fm_terminal_logflow(ev), log_r))))
    return ad.mul(total, 1.0 / len(ev.n_actions))


def subtb_loss(ev: TrajEval, lam: float, log_r=None):
    """Sub-trajectory balance over all 0 <= u < v <= n with weights lam^(v-u).

    Weights are normalized per trajectory, then trajectories are averaged.
    """
    n = ev.n_actions
    B = len(n)
    T = int(n.max())
    W = T + 1
    # a_t = log F(s_t) - sum_{t' < t} (log P_F - log P_B); residual(u, v) = a_u - a_v
    step_terms = ad.sub(ev.logpf, ev.logpb)
    padded = ad.reshape(ad.scatter_add(step_terms, ev.traj * T + ev.step, B * T), (B, T))
    cum = ad.concat([np.zeros((B, 1)), ad.cumsum(padded, axis=1)], axis=1)
    term = ev.logF_terminal if log_r is None else log_r
    flows = ad.add(
        ad.scatter_add(ev.logF_parent, ev.traj * W + ev.step, B * W),
        ad.scatter_add(term, np.arange(B) * W + n, B * W),
    )
    a = ad.sub(ad.reshape(flows, (B, W)), cum)
    diff = ad.sub(ad.reshape(a, (B, W, 1)), ad.reshape(a, (B, 1, W)))
    uu, vv = np.meshgrid(np.arange(W), np.arange(W), indexing="ij")
    valid = (uu[None] < vv[None]) & (vv[None] <= n[:, None, None])
    weights = np.where(valid, float(lam) ** (vv - uu)[None], 0.0)
    weights = weights / weights.sum(axis=(1, 2), keepdims=True)
    return ad.mul(ad.sum(ad.mul(weights, ad.square(diff))), 1.0 / B)


def kl_reg(ev: TrajEval):
    """Mean over trajectories of (1/n) sum_t KL(P_B(.|s_t) || uniform legal)."""
    counts = ev.bmask.sum(axis=1, keepdims=True)
    logp = ev.pb_logp
    p = ad.exp(logp)
    rows = ad.sum(ad.mul(p, ad.add(logp, np.where(ev.bmask, np.log(counts), 0.0))), axis=1)
    per_traj = ad.scatter_add(rows, ev.traj, len(ev.n_actions))
    return ad.mean(ad.mul(per_traj, 1.0 / ev.n_actions))


def scalarize_preference(u, w, beta: float = 1.0):
    """Linear scalarization w^T u raised to ``beta``; ``w`` must lie on the simplex."""
    w = np.asarray(w, dtype=float)
    if np.any(w < -1e-9) or abs(w.sum(axis=-1) - 1.0).max() > 1e-9:
        raise ContractViolation(f"preference {w} is not on the simplex")
    r = np.sum(np.asarray(u, dtype=float) * w, axis=-1)
    return r**beta


def log_target(u, beta: float) -> np.ndarray:
    """beta * log u for a scalar objective, floored to keep it finite."""
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    if u.shape[1] != 1:
        raise ConfigError("a scalar reward needs one objective or a preference scalarization")
    with np.errstate(divide="ignore"):
        return np.maximum(beta * np.log(u[:, 0]), LOG_REWARD_FLOOR)


# ---------------------------------------------------------------------------
# composition


def learned_log_reward(model: FlowModel, ev: TrajEval, kind: str):
    if kind == "TB":
        return ad.sub(ad.add(ev.logZ, ev.sum_logpf), ev.sum_logpb)
    if kind == "FM":
        return fm_terminal_logflow(ev)
    return ev.logF_terminal


def mdp_loss(model: FlowModel, ev: TrajEval, cfg: LossConfig, tape=None, log_r=None):
    if cfg.kind == "TB":
        return tb_loss(ev, log_r)
    if cfg.kind == "DB":
        return db_loss(ev, log_r)
    if cfg.kind == "FM":
        return fm_loss(model, ev, tape, log_r)
    return subtb_loss(ev, cfg.lambda_subtb, log_r)


def composite_loss(model: FlowModel, tb: TrajectoryBatch, cfg: LossConfig, tape=None, cond=None, log_r=None):
    """Training loss for one batch of complete trajectories.

    * OP with TB: order-preserving loss on the trajectory-induced log R̂.
    * OP otherwise: balance loss with learned terminal flows plus
      ``lambda_op`` times the order-preserving loss on log F(x).
    * OP off: balance loss against ``log_r`` (default ``beta * log u``).
    * plus ``lambda_kl`` times the backward-KL regularizer when it is nonzero.
    """
    if cond is not None and cfg.kind == "FM":
        raise ConfigError("flow matching does not support preference conditioning")
    ev = model.evaluate(tb, tape, cond)
    if cfg.order_preserving:
        pairing = cfg.resolved_pairing(tb.u.shape[1])
        op = op_loss(learned_log_reward(model, ev, cfg.kind), tb.u, pairing)
        if cfg.kind == "TB":
            loss = op
        else:
            loss = ad.add(mdp_loss(model, ev, cfg, tape), ad.mul(op, cfg.lambda_op))
    else:
        if log_r is None:
            log_r = log_target(tb.u, cfg.beta)
        loss = mdp_loss(model, ev, cfg, tape, log_r)
    if cfg.lambda_kl > 0:
        loss = ad.add(loss, ad.mul(kl_reg(ev), cfg.lambda_kl))
    return loss
