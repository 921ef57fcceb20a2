import math
from collections import Counter

import numpy as np
import pytest

from opgfn.envs import EnvDescriptor, StateBatch, make_env
from opgfn.errors import ConfigError, TrainingAborted
from opgfn.gfn import FlowModel, LossConfig, ModelConfig, terminal_log_probs, terminal_log_rewards
from opgfn.training import (
    LOG_COLUMNS,
    ReplayBuffer,
    RunLog,
    TrainPlan,
    TrajectoryReplay,
    augment_backward,
    boost_sample,
    prt_sample,
    sample_trajectories,
    stream,
    train,
)

# 0.99 quantile of the chi-square distribution with 7 degrees of freedom
CHI2_99_DF7 = 18.4753


def grid(dim=2, side=8, r0=0.1, **kw):
    return make_env(EnvDescriptor(kind="hypergrid", dim=dim, side=side, r0=r0, **kw))


def tabular(env, seed=0, pb_mode="uniform"):
    return FlowModel(env, ModelConfig(tabular=True, pb_mode=pb_mode), np.random.default_rng(seed))


def empirical(env, tb):
    counts = np.bincount(env.terminal_index(tb.final_states()), minlength=env.terminal_count())
    return counts / counts.sum()


# ---- sampling ----------------------------------------------------------------------


def test_uniform_sampler_matches_dynamic_programming():
    env = grid(side=2)
    tb = sample_trajectories(env, None, 100000, np.random.default_rng(0))
    exact = np.exp(terminal_log_probs(env))
    assert exact.sum() == pytest.approx(1.0)
    assert np.abs(empirical(env, tb) - exact).sum() < 0.02


def test_epsilon_one_is_uniform():
    env = grid(side=2)
    model = tabular(env)
    model.store.view("net.table")[:, 0] = 40.0  # strongly prefer one direction
    tb = sample_trajectories(env, model, 50000, np.random.default_rng(1), epsilon=1.0)
    assert np.abs(empirical(env, tb) - np.exp(terminal_log_probs(env))).sum() < 0.02


def test_sampling_is_deterministic():
    env = grid(side=4)
    model = tabular(env)
    a = sample_trajectories(env, model, 30, stream(5, 2, 1))
    b = sample_trajectories(env, model, 30, stream(5, 2, 1))
    assert np.array_equal(a.cells, b.cells) and np.array_equal(a.fwd_actions, b.fwd_actions)


def test_cached_logprobs_are_clean_under_exploration():
    env = grid(side=4)
    model = tabular(env)
    model.store.data[:] = np.random.default_rng(0).normal(size=model.store.size)
    tb = sample_trajectories(env, model, 40, np.random.default_rng(2), epsilon=0.3, temperature=0.5)
    ev = model.evaluate(tb)
    assert np.allclose(tb.logpf, ev.sum_logpf, atol=1e-12)
    assert np.allclose(tb.logpb, ev.sum_logpb, atol=1e-12)


def test_trajectories_end_at_terminals():
    env = make_env(EnvDescriptor(kind="seq-prepend-append", alphabet=4, max_len=5, objectives=("bag",)))
    env_ngram = make_env(EnvDescriptor(kind="seq-prepend-append", alphabet=20, max_len=5, objectives=("AC",)))
    tb = sample_trajectories(env_ngram, None, 50, np.random.default_rng(0))
    assert tb.final_states().terminal.all()
    assert np.all(tb.n_actions == 6)
    assert env.max_traj_len == 6


# ---- augmentation ------------------------------------------------------------------


def test_augment_grid_paths():
    env = grid(side=3)
    x = StateBatch(np.array([[1, 1]]), np.array([True]))
    tb = augment_backward(env, x, [[1.0]], 200, np.random.default_rng(0))
    paths = {tuple(map(tuple, tb.cells[b, : tb.n_actions[b] + 1])) for b in range(len(tb))}
    assert len(paths) == 2
    for p in paths:
        assert p[0] == (0, 0) and p[-1] == (1, 1)
    assert np.all(tb.u == 1.0)


def test_augment_zero_count():
    env = grid(side=3)
    x = StateBatch(np.array([[1, 1]]), np.array([True]))
    assert augment_backward(env, x, [[1.0]], 0, np.random.default_rng(0)) is None


def test_augment_sequence_build_orders_uniform():
    env = make_env(EnvDescriptor(kind="seq-prepend-append", alphabet=20, max_len=4, objectives=("AC",)))
    x = StateBatch(np.array([[0, 1, 2, 3]]), np.array([True]))
    n = 10000
    tb = augment_backward(env, x, [[0.5]], n, np.random.default_rng(3))
    orders = Counter(tuple(tb.fwd_actions[b, : tb.n_actions[b]]) for b in range(n))
    assert len(orders) == 2 ** (4 - 1)
    expected = n / len(orders)
    chi2 = sum((c - expected) ** 2 / expected for c in orders.values())
    assert chi2 < CHI2_99_DF7
    # every walk rebuilds the same sequence
    assert np.all(tb.final_states().cells == [0, 1, 2, 3])


# ---- replay --------------------------------------------------------------------------


def test_replay_buffer_fifo_and_capacity():
    env = grid(side=8)
    buf = ReplayBuffer(5, env.width, 1)
    terms = env.all_terminals()[np.arange(8)]
    u = env.objective_batch(terms)
    buf.push(terms, u, 1)
    assert len(buf) == 5
    assert buf.entry(0).cells.tolist() == terms.cells[3].tolist()
    states, cached = buf.get(np.arange(5))
    assert np.array_equal(cached, env.objective_batch(states))
    assert buf.entry(4).round == 1


def test_trajectory_replay_round_trip():
    env = grid(side=4)
    tb = sample_trajectories(env, None, 6, np.random.default_rng(0))
    ring = TrajectoryReplay(4, env.max_traj_len, env.width, 1)
    ring.push(tb)
    assert len(ring) == 4
    out = ring.sample_uniform(20, np.random.default_rng(1))
    assert out.final_states().terminal.all()
    assert np.array_equal(out.u, env.objective_batch(out.final_states()))


def test_prt_top_tier_share():
    values = np.arange(100.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        idx = prt_sample(values, 10, rng, 50, 10)
        assert np.sum(values[idx] >= 90) == 5


def test_prt_equal_values_uniform():
    values = np.ones(4)
    idx = prt_sample(values, 40000, np.random.default_rng(0))
    assert np.allclose(np.bincount(idx, minlength=4) / 40000, 0.25, atol=0.01)


def test_prt_batch_of_one_from_top():
    values = np.arange(100.0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert values[prt_sample(values, 1, rng)[0]] >= 90


def test_prt_small_buffer_with_replacement():
    idx = prt_sample(np.array([1.0, 2.0]), 10, np.random.default_rng(0))
    assert idx.size == 10


# ---- run log and the training loop ----------------------------------------------------


def test_run_log_csv():
    log = RunLog(header="# seed=0")
    row = dict.fromkeys(LOG_COLUMNS, 0.5)
    log.append(**{**row, "round": 1, "cum_samples": 10})
    log.append(**{**row, "round": 2, "cum_samples": 20})
    lines = log.to_csv().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == ",".join(LOG_COLUMNS)
    assert lines[2].startswith("1,10,0.5")
    with pytest.raises(ValueError):
        log.append(**{**row, "round": 2, "cum_samples": 30})


def small_plan(**kw):
    base = dict(n_init=20, n_round=5, n_new=20, batch_size=10, lr=0.1, lr_logz=0.1)
    base.update(kw)
    return TrainPlan(**base)


def test_zero_rounds_trains_on_init_only():
    env = grid(side=4)
    model = tabular(env)
    before = model.store.data.copy()
    res = train(model, small_plan(n_round=0), LossConfig(kind="TB", order_preserving=False))
    assert res.log.rows == []
    assert res.adam.t == 2  # 20 initial trajectories in minibatches of 10
    assert not np.array_equal(before, model.store.data)
    assert len(res.visits) == 20


def test_cumulative_sample_bookkeeping():
    env = grid(side=4)
    res = train(tabular(env), small_plan(n_off=5, n_off_per=2), LossConfig(kind="TB"))
    assert res.log.column("round").tolist() == [1, 2, 3, 4, 5]
    assert res.log.column("cum_samples").tolist() == [20 + 20 * i for i in range(1, 6)]
    assert len(res.visits) == 20 + 5 * 20


def test_training_is_deterministic():
    env = grid(side=4)
    a = train(tabular(env), small_plan(n_off=4), LossConfig(kind="TB"))
    b = train(tabular(env), small_plan(n_off=4), LossConfig(kind="TB"))
    assert a.log.to_csv() == b.log.to_csv()
    assert np.array_equal(a.model.store.data, b.model.store.data)


def test_max_found_ratio_nondecreasing():
    env = grid(side=8)
    res = train(tabular(env), small_plan(n_round=20, n_new=50, n_off=10), LossConfig(kind="TB"))
    r = res.log.column("ratio_max_found")
    assert np.all(np.diff(r) >= 0)


def test_replay_mode_runs_and_counts():
    env = grid(side=4)
    plan = small_plan(mode="replay", n_init=0, n_round=6, batch_size=8, warmup=16)
    res = train(tabular(env), plan, LossConfig(kind="TB"))
    assert res.log.column("cum_samples").tolist() == [8 * i for i in range(1, 7)]
    assert res.adam.t == 6


def test_non_finite_loss_aborts_with_checkpoint(tmp_path):
    env = grid(side=4)
    model = tabular(env)
    model.store.data[:] = np.nan
    with pytest.raises(TrainingAborted) as info:
        train(model, small_plan(), LossConfig(kind="TB", order_preserving=False), out_dir=tmp_path)
    assert (tmp_path / "abort_checkpoint.txt").exists()
    assert info.value.checkpoint == tmp_path / "abort_checkpoint.txt"


def test_several_objectives_need_op_or_preference():
    env = grid(side=4, objectives=("branin", "currin"))
    model = FlowModel(env, ModelConfig(tabular=True), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        train(model, small_plan(), LossConfig(order_preserving=False))
    with pytest.raises(ConfigError):
        train(model, small_plan(prt="on", n_off=2), LossConfig())


def test_invalid_plan():
    with pytest.raises(ConfigError):
        TrainPlan(n_off_per=0)
    with pytest.raises(ConfigError):
        TrainPlan(replay_capacity=10, warmup=20)


def test_tb_target_consistency_tiny_grid():
    # online TB with OP off on a 2x2 grid converges to R/Z
    env = grid(side=2, r0=0.5)
    model = tabular(env)
    plan = TrainPlan(n_init=64, n_round=400, n_new=64, batch_size=64, lr=0.05, lr_logz=0.05)
    train(model, plan, LossConfig(kind="TB", order_preserving=False))
    r = env.objective_batch(env.all_terminals())[:, 0]
    p = np.exp(terminal_log_probs(env, model))
    assert np.abs(p - r / r.sum()).sum() < 1e-3


def test_tb_learned_reward_matches_reward():
    env = grid(side=4, r0=0.1)
    model = tabular(env)
    plan = TrainPlan(n_init=100, n_round=400, n_new=100, batch_size=100, lr=0.05, lr_logz=0.05)
    train(model, plan, LossConfig(kind="TB", order_preserving=False))
    r = env.objective_batch(env.all_terminals())[:, 0]
    rhat = np.exp(terminal_log_rewards(model, "TB"))
    assert np.max(np.abs(rhat / r - 1)) < 0.01


# ---- boosting --------------------------------------------------------------------------


def test_boost_identity_when_k_equals_candidates():
    env = grid(side=4)
    model = tabular(env)
    model.store.data[:] = np.random.default_rng(0).normal(size=model.store.size)
    kept, u, _ = boost_sample(env, model, 16, 16, np.random.default_rng(3))
    ref = sample_trajectories(env, model, 16, np.random.default_rng(3)).final_states()
    assert sorted(map(tuple, kept.cells)) == sorted(map(tuple, ref.cells))
    assert np.array_equal(u, env.objective_batch(kept))


def test_boost_top1_is_argmax():
    env = grid(side=4)
    model = tabular(env)
    model.store.data[:] = np.random.default_rng(1).normal(size=model.store.size)
    kept, _, score = boost_sample(env, model, 8, 1, np.random.default_rng(4))
    cand = sample_trajectories(env, model, 8, np.random.default_rng(4)).final_states()
    all_scores = terminal_log_rewards(model, "TB", cand)
    assert score[0] == pytest.approx(all_scores.max())
    assert len(kept) == 1


def test_boost_rejects_bad_k():
    env = grid(side=4)
    with pytest.raises(ConfigError):
        boost_sample(env, tabular(env), 4, 5, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        boost_sample(env, tabular(env), 4, 0, np.random.default_rng(0))


def test_objective_cached_not_reevaluated():
    env = grid(side=4)
    buf = ReplayBuffer(3, env.width, 1)
    terms = env.all_terminals()[np.arange(2)]
    buf.push(terms, np.array([[7.0], [8.0]]), 0)
    _, u = buf.get([0, 1])
    assert u[:, 0].tolist() == [7.0, 8.0]
    assert math.isclose(buf.objectives()[1, 0], 8.0)
