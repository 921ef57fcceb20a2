"""Command-line entry point: train, eval-moo, diagnose, oracle, compare, sample."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import theory
from .autodiff.params import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config
from .envs import make_env
from .errors import CapabilityError, ConfigError, ContractViolation, PreconditionError, TrainingAborted
from .gfn.exact import terminal_log_rewards
from .gfn.model import FlowModel
from .metrics import (
    all_objectives,
    exploration_ratios,
    indicator_report,
    l1_to_target,
    maximal_mask,
    reference_front,
    reward_landscape,
)
from .training import boost_sample, env_fingerprint, sample_trajectories, stream, train

log = logging.getLogger("opgfn")

METRIC_ALIASES = {
    "r1": "ratio_visited",
    "r2": "ratio_max_found",
    "r3": "ratio_max_recent",
    "l1": "l1_error",
}
EVAL_PURPOSE = 7
BOOST_PURPOSE = 8


# ---------------------------------------------------------------------------
# helpers


def _config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["run.out"] = args.out
    if getattr(args, "rounds", None) is not None and args.command == "train":
        overrides["train.n_round"] = args.rounds
    if args.config is None:
        return parse_config("", overrides)
    return load_config(args.config, overrides)


def build_model(cfg: RunConfig) -> FlowModel:
    env = make_env(cfg.env)
    return FlowModel(env, cfg.model, np.random.default_rng(cfg.seed))


def restore_model(cfg: RunConfig, path) -> FlowModel:
    """Rebuild the model from ``cfg`` and load parameters, refusing a foreign checkpoint."""
    store, meta = load_checkpoint(path)
    want = env_fingerprint(cfg.env)
    got = meta.get("env_hash")
    if got != want:
        raise ConfigError(f"checkpoint {path} was trained on env hash {got}, config has env hash {want}")
    model = build_model(cfg)
    if store.slices != model.store.slices:
        raise ConfigError(f"checkpoint {path} does not match the model section of the config")
    model.store.data[:] = store.data
    return model


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_kv(path: Path, header: str, items: dict) -> None:
    lines = [header] + [f"{k}={_kv(v)}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")


def _kv(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_kv(x) for x in v)
    return str(v)


def _pref_cond(cfg: RunConfig, n: int, rng):
    if not cfg.train.preference:
        return None
    return rng.dirichlet(np.full(cfg.model.cond_dim, cfg.train.pref_alpha), size=n)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg)
    (out / "config_echo.txt").write_text(cfg.header() + "\n" + cfg.echo())
    model = build_model(cfg)
    try:
        res = train(model, cfg.plan(), cfg.loss, out_dir=out, header=cfg.header())
    except TrainingAborted as exc:
        log.error("%s (checkpoint: %s)", exc, exc.checkpoint)
        return 3
    res.log.write(out / "run_log.csv")
    meta = {
        "env_hash": env_fingerprint(cfg.env),
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "round": cfg.train.n_round,
        "optimizer_step": res.adam.t,
    }
    save_checkpoint(out / "checkpoint.txt", model.store, meta)
    if res.visits is not None:
        np.savetxt(out / "visits.txt", res.visits, fmt="%d", header=cfg.header()[2:])
    print(f"trained {cfg.train.n_round} rounds; outputs in {out}")
    return 0


def _candidates(cfg: RunConfig, model: FlowModel, total: int, rounds: int) -> np.ndarray:
    per = np.diff(np.linspace(0, total, rounds + 1).round().astype(int))
    us = []
    for r, n in enumerate(per):
        if n == 0:
            continue
        rng = stream(cfg.seed, r, EVAL_PURPOSE)
        cond = _pref_cond(cfg, n, rng)
        us.append(sample_trajectories(model.env, model, int(n), rng, temperature=cfg.eval.temperature, cond=cond).u)
    return np.concatenate(us)


def cmd_eval_moo(args) -> int:
    cfg = _config(args)
    model = restore_model(cfg, args.checkpoint)
    total = args.candidates or cfg.eval.candidates
    rounds = args.rounds or cfg.eval.rounds
    S = _candidates(cfg, model, total, rounds)
    ref = reference_front(model.env, cfg.eval.reference_resolution)
    hv_ref = cfg.eval.hv_ref or None
    report = indicator_report(S, ref.points, hv_ref, cfg.eval.r2_divisions)
    out = _out_dir(cfg)
    items = report.as_dict()
    items["reference"] = ref.provenance
    _write_kv(out / "indicator_report.txt", cfg.header(), items)
    cols = ",".join(model.env.objective_names())
    lines = [cfg.header(), cols] + [",".join(repr(float(v)) for v in row) for row in S]
    (out / "candidates.csv").write_text("\n".join(lines) + "\n")
    for k, v in items.items():
        print(f"{k}={_kv(v)}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    model = restore_model(cfg, args.checkpoint)
    env = model.env
    u = all_objectives(env)
    if u.shape[1] != 1:
        raise CapabilityError("diagnostics need a single-objective environment")
    visits_path = Path(args.checkpoint).with_name("visits.txt")
    visits = np.loadtxt(visits_path, dtype=np.int64, ndmin=1) if visits_path.exists() else np.zeros(0, np.int64)
    plan = cfg.train
    items = {}
    if visits.size:
        r = exploration_ratios(visits, maximal_mask(u), plan.recent_window)
        items.update(r1=r.visited, r2=r.max_found, r3=r.max_recent)
        items["l1_error"] = l1_to_target(visits[-plan.l1_window :], u[:, 0], cfg.loss.beta)
    items["n_visits"] = int(visits.size)
    log_rhat = terminal_log_rewards(model, cfg.loss.kind)
    out = _out_dir(cfg)
    lines = [cfg.header()] + [f"{k}={_kv(v)}" for k, v in items.items()]
    lines.append("landscape: u_level,mean_log_rhat")
    lines += [f"{a!r},{b!r}" for a, b in reward_landscape(u[:, 0], log_rhat)]
    (out / "diagnostics.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[1:]))
    return 0


def cmd_oracle(args) -> int:
    params = {}
    if args.which == "prop3" and args.alpha is not None:
        params["alpha"] = args.alpha
    if args.which == "prop2" and args.seed is not None:
        params["seed"] = args.seed
    try:
        rows = theory.oracle_table(args.which, **params)
    except (ContractViolation, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    width = max(len(r.check) for r in rows)
    ok = True
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        ok &= r.passed
        extra = f"  {r.detail}" if r.detail else ""
        print(f"{r.check:<{width}}  {status}  measured={r.measured:.3e}  tol={r.tolerance:.1e}{extra}")
    return 0 if ok else 1


def _run_metric(cfg: RunConfig, metric: str) -> float:
    model = build_model(cfg)
    res = train(model, cfg.plan(), cfg.loss)
    col = METRIC_ALIASES.get(metric, metric)
    return float(res.log.column(col)[-1])


def cmd_compare(args) -> int:
    cfgs = [load_config(p) for p in args.configs]
    if len(cfgs) < 2:
        raise ConfigError("compare needs at least two configs")
    hashes = {env_fingerprint(c.env) for c in cfgs}
    if len(hashes) > 1:
        raise ConfigError(f"compared configs use different environments (env hashes {sorted(hashes)})")
    metric = args.metric
    if METRIC_ALIASES.get(metric, metric) not in ("loss", "logZ", *METRIC_ALIASES.values()):
        raise ConfigError(f"unknown metric {metric!r}")
    seeds = args.seeds or [0, 1, 2, 3, 4]
    labels = [Path(p).stem for p in args.configs]
    table = np.zeros((len(seeds), len(cfgs)))
    for j, cfg in enumerate(cfgs):
        for i, s in enumerate(seeds):
            cfg_s = load_config(args.configs[j], {"run.seed": s})
            table[i, j] = _run_metric(cfg_s, metric)
    lines = [f"# metric={metric} seeds={' '.join(map(str, seeds))}", "seed," + ",".join(labels)]
    lines += [f"{s}," + ",".join(repr(float(v)) for v in row) for s, row in zip(seeds, table)]
    lines.append("mean," + ",".join(repr(float(v)) for v in table.mean(axis=0)))
    lines.append("std," + ",".join(repr(float(v)) for v in table.std(axis=0)))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_sample(args) -> int:
    cfg = _config(args)
    model = restore_model(cfg, args.checkpoint)
    total = args.candidates or cfg.eval.candidates
    ratio = args.boost_ratio or cfg.eval.boost_ratio
    k = max(1, total // ratio)
    rng = stream(cfg.seed, 0, BOOST_PURPOSE)
    cond = _pref_cond(cfg, 1, rng)
    states, u, score = boost_sample(model.env, model, total, k, rng, cfg.loss.kind, cond=cond)
    out = _out_dir(cfg)
    lines = [cfg.header(), "index,log_rhat," + ",".join(model.env.objective_names()) + ",state"]
    for i in range(len(states)):
        cells = " ".join(map(str, states.cells[i]))
        lines.append(f"{i},{float(score[i])!r}," + ",".join(repr(float(v)) for v in u[i]) + f",{cells}")
    (out / "samples.csv").write_text("\n".join(lines) + "\n")
    print(f"kept {k} of {total} candidates; mean objective {float(np.mean(u)):.6g}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opgfn", description="Order-preserving GFlowNet experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", help="flat section.key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (overrides run.out)")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)

    sp = sub.add_parser("train", help="train a sampler")
    common(sp)
    sp.add_argument("--rounds", type=int, help="override train.n_round")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval-moo", help="multi-objective indicators of generated candidates")
    common(sp, checkpoint=True)
    sp.add_argument("--candidates", type=int)
    sp.add_argument("--rounds", type=int)
    sp.set_defaults(fn=cmd_eval_moo)

    sp = sub.add_parser("diagnose", help="exploration ratios, L1 and reward landscape")
    common(sp, checkpoint=True)
    sp.set_defaults(fn=cmd_diagnose)

    sp = sub.add_parser("oracle", help="closed-form chain checks")
    sp.add_argument("which", choices=("prop1", "prop2", "prop3", "all"))
    sp.add_argument("--alpha", type=float, help="force the ratio for the substring check")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_oracle)

    sp = sub.add_parser("compare", help="paired-seed comparison of configs")
    sp.add_argument("configs", nargs="+")
    sp.add_argument("--seeds", type=int, nargs="*")
    sp.add_argument("--metric", default="r3")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("sample", help="boosted sampling with the learned reward as proxy")
    common(sp, checkpoint=True)
    sp.add_argument("--candidates", type=int)
    sp.add_argument("--boost-ratio", type=int)
    sp.set_defaults(fn=cmd_sample)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, CapabilityError, ContractViolation, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
