"""Training loop: online sampling, backward augmentation and replay."""

from __future__ import annotations

import hashlib
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff import tape as ad
from ..autodiff.adam import AdamState, adam_step
from ..autodiff.params import save_checkpoint
from ..envs.base import EnvDescriptor, TrajectoryBatch
from ..errors import CapabilityError, ConfigError, StepRejected, TrainingAborted
from ..gfn.losses import LOG_REWARD_FLOOR, LossConfig, composite_loss
from ..gfn.model import FlowModel
from ..metrics.diagnostics import exploration_ratios, l1_to_target, maximal_mask
from .replay import ReplayBuffer, TrajectoryReplay, prt_sample
from .sampling import augment_backward, sample_trajectories, stream

TRAIN_MODES = ("algorithm1", "replay")
LOG_COLUMNS = (
    "round",
    "cum_samples",
    "loss",
    "logZ",
    "ratio_visited",
    "ratio_max_found",
    "ratio_max_recent",
    "l1_error",
    "seconds",
)

# stream purposes
_ONLINE, _OFFLINE, _PICK, _PREF = 1, 2, 3, 4


@dataclass
class TrainPlan:
    n_init: int = 200
    n_round: int = 100
    n_new: int = 200
    n_off: int = 0
    n_off_per: int = 1
    batch_size: int = 200
    seed: int = 0
    mode: str = "algorithm1"
    alpha1: float = 50.0
    alpha2: float = 10.0
    prt: str = "auto"  # auto | on | off
    augment_sampler: str = "uniform"  # uniform | model
    replay_source: str = "trajectories"  # trajectories | augment (replay mode only)
    replay_capacity: int = 100000
    warmup: int = 0
    lr: float = 1e-3
    lr_logz: float = 0.1
    clip_norm: float = 0.0  # 0 disables clipping
    recent_window: int = 4000
    l1_window: int = 100000
    checkpoint_every: int = 0
    preference: bool = False
    pref_alpha: float = 1.5
    tau: float = 1.0  # soft-update rate of the sampling copy (preference baseline)
    timing: bool = False

    def __post_init__(self):
        for name in ("n_init", "n_round", "n_new", "n_off"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"train.{name} must be a nonnegative integer")
        for name in ("n_off_per", "batch_size", "replay_capacity", "recent_window", "l1_window"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"train.{name} must be a positive integer")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"train.mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.prt not in ("auto", "on", "off"):
            raise ConfigError("train.prt must be auto, on or off")
        if self.augment_sampler not in ("uniform", "model"):
            raise ConfigError("train.augment_sampler must be uniform or model")
        if self.replay_source not in ("trajectories", "augment"):
            raise ConfigError("train.replay_source must be trajectories or augment")
        if self.replay_capacity < self.warmup:
            raise ConfigError("train.replay_capacity must be at least train.warmup")
        if not 0 < self.tau <= 1:
            raise ConfigError("train.tau must lie in (0, 1]")
        if not 0 <= self.alpha1 <= 100 or not 0 < self.alpha2 <= 100:
            raise ConfigError("train.alpha1 must lie in [0, 100] and train.alpha2 in (0, 100]")


@dataclass
class RunLog:
    rows: list = field(default_factory=list)
    header: str = ""

    def append(self, **row) -> None:
        if self.rows and row["round"] <= self.rows[-1]["round"]:
            raise ValueError("run log rounds must increase")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        lines = [self.header] if self.header else []
        lines.append(",".join(LOG_COLUMNS))
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in LOG_COLUMNS))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def env_fingerprint(desc: EnvDescriptor) -> str:
    return hashlib.sha256(repr(sorted(asdict(desc).items())).encode()).hexdigest()[:16]


@dataclass
class TrainResult:
    model: FlowModel
    log: RunLog
    visits: np.ndarray | None
    buffer: ReplayBuffer
    adam: AdamState


class Trainer:
    """Runs one training job; all randomness derives from ``plan.seed``."""

    def __init__(self, model: FlowModel, plan: TrainPlan, loss: LossConfig, out_dir=None, header: str = ""):
        self.model = model
        self.env = model.env
        self.plan = plan
        self.loss = loss
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.D = self.env.n_objectives
        if plan.preference:
            if loss.order_preserving:
                raise ConfigError("the preference-conditioned baseline trains on a scalarized reward; set loss.order_preserving = false")
            if model.cfg.cond_dim != self.D:
                raise ConfigError(f"preference conditioning needs model.cond_dim = {self.D}")
        elif self.D > 1 and not loss.order_preserving:
            raise ConfigError("several objectives need the order-preserving loss or train.preference = true")
        if loss.order_preserving:
            loss.resolved_pairing(self.D)
        self.use_prt = plan.n_off > 0 and (plan.prt == "on" or (plan.prt == "auto" and self.D == 1))
        if plan.prt == "on" and self.D > 1:
            raise ConfigError("prioritized replay needs a single objective")
        self.adam = AdamState.for_store(
            model.store,
            lr=plan.lr,
            lr_overrides={"logZ": plan.lr_logz},
            clip_norm=plan.clip_norm or None,
        )
        self.buffer = ReplayBuffer(plan.replay_capacity, self.env.width, self.D)
        self.traj_buffer = None
        if plan.mode == "replay" and plan.replay_source == "trajectories":
            self.traj_buffer = TrajectoryReplay(plan.replay_capacity, self.env.max_traj_len, self.env.width, self.D)
        self.log = RunLog(header=header)
        self.sampler_store = model.store.copy() if plan.tau < 1 else None
        self._bad_losses = 0
        self._visits: list[np.ndarray] = []
        self._losses: list[float] = []
        try:
            u_all = np.concatenate([self.env.objective_batch(b) for b in self.env.iter_terminal_batches()])
            self.u_all = u_all
            self.is_max = maximal_mask(u_all)
        except CapabilityError:
            self.u_all = None
            self.is_max = None

    # ---- helpers ----------------------------------------------------------
    def _prefs(self, n: int, round_idx: int, purpose: int):
        if not self.plan.preference:
            return None
        rng = stream(self.plan.seed, round_idx, _PREF * 10 + purpose)
        return rng.dirichlet(np.full(self.D, self.plan.pref_alpha), size=n)

    def _log_r(self, tb: TrajectoryBatch, cond):
        if cond is None:
            return None
        r = np.sum(tb.u * cond, axis=1)
        with np.errstate(divide="ignore"):
            return np.maximum(self.loss.beta * np.log(r), LOG_REWARD_FLOOR)

    def _sample_online(self, n: int, round_idx: int) -> tuple[TrajectoryBatch, np.ndarray | None]:
        cond = self._prefs(n, round_idx, _ONLINE)
        rng = stream(self.plan.seed, round_idx, _ONLINE)
        tb = sample_trajectories(
            self.env,
            self.model,
            n,
            rng,
            self.loss.epsilon,
            self.loss.temperature,
            cond=cond,
            store=self.sampler_store,
        )
        if self.u_all is not None:
            self._visits.append(self.env.terminal_index(tb.final_states()))
        self.buffer.push(tb.final_states(), tb.u, round_idx)
        return tb, cond

    def _random_init(self, n: int) -> tuple[TrajectoryBatch, np.ndarray | None]:
        cond = self._prefs(n, 0, _ONLINE)
        tb = sample_trajectories(self.env, None, n, stream(self.plan.seed, 0, _ONLINE), cond=cond)
        if self.u_all is not None:
            self._visits.append(self.env.terminal_index(tb.final_states()))
        self.buffer.push(tb.final_states(), tb.u, 0)
        return tb, cond

    def _augment(self, states, u, count: int, round_idx: int, cond_purpose: int):
        n = len(states) * count
        cond = self._prefs(n, round_idx, cond_purpose)
        model = self.model if self.plan.augment_sampler == "model" else None
        tb = augment_backward(self.env, states, u, count, stream(self.plan.seed, round_idx, _OFFLINE), model, cond)
        return tb, cond

    def _step(self, tb: TrajectoryBatch, cond, round_idx: int) -> float:
        tape = ad.Tape(self.model.store)
        loss = composite_loss(self.model, tb, self.loss, tape, cond, self._log_r(tb, cond))
        value = float(ad.value(loss))
        if not np.isfinite(value):
            self._bad_losses += 1
            if self._bad_losses >= 2:
                self._abort(round_idx, "non-finite loss on two consecutive updates")
            return value
        try:
            adam_step(self.model.store, ad.backward(tape, loss), self.adam)
        except StepRejected as exc:
            self._bad_losses += 1
            if self._bad_losses >= 2:
                self._abort(round_idx, str(exc))
            return value
        self._bad_losses = 0
        if self.sampler_store is not None:
            tau = self.plan.tau
            self.sampler_store.data[:] = (1 - tau) * self.sampler_store.data + tau * self.model.store.data
        return value

    def _update(self, tb: TrajectoryBatch | None, cond, round_idx: int) -> None:
        """One pass of minibatches over ``tb``; the last chunk is never a singleton."""
        if tb is None or len(tb) == 0:
            return
        k = max(1, len(tb) // self.plan.batch_size)
        for idx in np.array_split(np.arange(len(tb)), k):
            sub = tb.subset(idx)
            self._losses.append(self._step(sub, None if cond is None else cond[idx], round_idx))

    def _abort(self, round_idx: int, why: str):
        path = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path = self.out_dir / "abort_checkpoint.txt"
            self.save(path, round_idx)
        raise TrainingAborted(f"training aborted at round {round_idx}: {why}", path)

    def save(self, path, round_idx: int) -> None:
        meta = {
            "env_hash": env_fingerprint(self.env.desc),
            "seed": self.plan.seed,
            "round": round_idx,
            "optimizer_step": self.adam.t,
            "model": repr(asdict(self.model.cfg)),
        }
        save_checkpoint(path, self.model.store, meta)

    def visits(self) -> np.ndarray | None:
        if self.u_all is None:
            return None
        return np.concatenate(self._visits) if self._visits else np.zeros(0, dtype=np.int64)

    def _record(self, round_idx: int, cum: int, start: float) -> None:
        ratios = (float("nan"),) * 3
        l1 = float("nan")
        visits = self.visits()
        if visits is not None and visits.size:
            r = exploration_ratios(visits, self.is_max, self.plan.recent_window)
            ratios = (r.visited, r.max_found, r.max_recent)
            if self.D == 1:
                l1 = l1_to_target(visits[-self.plan.l1_window :], self.u_all[:, 0], self.loss.beta)
        loss = float(np.mean(self._losses)) if self._losses else float("nan")
        self._losses = []
        self.log.append(
            round=round_idx,
            cum_samples=cum,
            loss=loss,
            logZ=self.model.logZ(),
            ratio_visited=ratios[0],
            ratio_max_found=ratios[1],
            ratio_max_recent=ratios[2],
            l1_error=l1,
            seconds=time.perf_counter() - start if self.plan.timing else 0.0,
        )
        every = self.plan.checkpoint_every
        if every and self.out_dir is not None and round_idx % every == 0:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.save(self.out_dir / f"checkpoint_round{round_idx}.txt", round_idx)

    # ---- loops ------------------------------------------------------------
    def run(self) -> TrainResult:
        if self.plan.mode == "replay":
            self._run_replay()
        else:
            self._run_algorithm1()
        return TrainResult(self.model, self.log, self.visits(), self.buffer, self.adam)

    def _run_algorithm1(self) -> None:
        p = self.plan
        start = time.perf_counter()
        pending, pending_cond = self._random_init(p.n_init) if p.n_init else (None, None)
        cum = p.n_init
        for i in range(1, p.n_round + 1):
            self._update(pending, pending_cond, i)
            pending, pending_cond = self._sample_online(p.n_new, i) if p.n_new else (None, None)
            cum += p.n_new
            if p.n_off and len(self.buffer):
                pick = stream(p.seed, i, _PICK)
                if self.use_prt:
                    idx = prt_sample(self.buffer.objectives()[:, 0], p.n_off, pick, p.alpha1, p.alpha2)
                else:
                    idx = self.buffer.sample_uniform(p.n_off, pick)
                states, u = self.buffer.get(idx)
                aug, aug_cond = self._augment(states, u, p.n_off_per, i, _OFFLINE)
                self._update(aug, aug_cond, i)
            self._record(i, cum, start)
        # the newest online batch has not been trained on yet
        self._update(pending, pending_cond, p.n_round + 1)

    def _run_replay(self) -> None:
        p = self.plan
        start = time.perf_counter()
        cum = 0
        if p.n_init:
            init, _ = self._random_init(p.n_init)
            cum = p.n_init
            if self.traj_buffer is not None:
                self.traj_buffer.push(init)
        for i in range(1, p.n_round + 1):
            online, cond = self._sample_online(p.batch_size, i)
            cum += p.batch_size
            if self.traj_buffer is not None:
                self.traj_buffer.push(online)
            if len(self.buffer) < max(p.warmup, 1):
                batch, bcond = online, cond
            elif self.traj_buffer is not None:
                batch = self.traj_buffer.sample_uniform(p.batch_size, stream(p.seed, i, _PICK))
                bcond = self._prefs(p.batch_size, i, _PICK)
            else:
                idx = self.buffer.sample_uniform(p.batch_size, stream(p.seed, i, _PICK))
                states, u = self.buffer.get(idx)
                batch, bcond = self._augment(states, u, 1, i, _OFFLINE)
            self._losses.append(self._step(batch, bcond, i))
            self._record(i, cum, start)


def train(model: FlowModel, plan: TrainPlan, loss: LossConfig, out_dir=None, header: str = "") -> TrainResult:
    """Train ``model`` in place and return it with its run log and visit stream."""
    return Trainer(model, plan, loss, out_dir, header).run()
