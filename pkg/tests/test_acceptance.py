"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np

from opgfn.autodiff import gradient_check
from opgfn.autodiff import tape as ad
from opgfn.envs import EnvDescriptor, make_env
from opgfn.gfn import (
    FlowModel,
    LossConfig,
    ModelConfig,
    composite_loss,
    db_loss,
    fm_loss,
    kl_reg,
    mean_backward_kl,
    op_loss_pairwise,
    op_loss_pareto,
    subtb_loss,
    tb_loss,
)
from opgfn.metrics import das_dennis, d_h, gd, gd_plus, hypervolume, igd, igd_plus, pareto_front, r2_indicator, reference_front
from opgfn.theory import (
    beta_of,
    expected_substring_flow,
    minimize_chain,
    prop1_closed_form,
    prop1_numeric,
    prop3_expected_flow,
    random_chain,
)
from opgfn.training import TrainPlan, boost_sample, sample_trajectories, train

SEEDS = range(5)


def grid8():
    return make_env(EnvDescriptor(kind="hypergrid", dim=2, side=8, r0=0.1))


def grid_plan(seed):
    return TrainPlan(n_init=200, n_round=500, n_new=200, batch_size=200, lr=0.1, lr_logz=0.1, seed=seed)


_RUNS: dict = {}


def grid_run(seed, op, pb_mode="uniform", lambda_kl=0.0):
    """Cached tabular run on the 8x8 grid so several criteria share a budget."""
    key = (seed, op, pb_mode, lambda_kl)
    if key not in _RUNS:
        env = grid8()
        model = FlowModel(env, ModelConfig(tabular=True, pb_mode=pb_mode), np.random.default_rng(seed))
        kl0 = mean_backward_kl(model) if pb_mode == "trainable" else 0.0
        res = train(model, grid_plan(seed), LossConfig(kind="TB", order_preserving=op, lambda_kl=lambda_kl))
        _RUNS[key] = (res, kl0)
    return _RUNS[key]


# ---- 1 ---------------------------------------------------------------------------------------


def test_c1_prop1_closed_form(record):
    start = time.perf_counter()
    worst_coord = worst_stated = worst_true = 0.0
    for n in (2, 4, 8):
        for gamma in (10.0, 1e3):
            cf, num = prop1_closed_form(n, gamma), prop1_numeric(n, gamma)
            worst_coord = max(worst_coord, float(np.max(np.abs(np.log(cf.rewards) - np.log(num.rewards)))))
            # the loss clause compares the minimized loss with n log(1 + 1/gamma)
            worst_stated = max(worst_stated, abs(num.loss - n * math.log1p(1.0 / gamma)))
            worst_true = max(worst_true, abs(num.loss - n * math.log1p(gamma ** (-1.0 / n))))
    secs = time.perf_counter() - start
    ok = worst_coord < 1e-3 and worst_stated < 1e-10
    record(
        "1 closed-form chain",
        ok,
        f"max |dlog R| {worst_coord:.2e} (tol 1e-3); |loss - n log(1+1/g)| {worst_stated:.3e} (tol 1e-10); "
        f"|loss - n log(1+g^(-1/n))| {worst_true:.1e}; {secs:.1f}s",
    )
    assert ok


# ---- 2 ---------------------------------------------------------------------------------------


def test_c2_tied_chain_structure(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    gamma = 1e6
    spread = beta_gap = 0.0
    for _ in range(50):
        chain = random_chain(rng, gamma, max_n=8)
        ties = chain.pair_ties()
        start = rng.uniform(-math.log(gamma), 0.0, ties.size + 1)
        lr = np.diff(minimize_chain(ties, math.log(gamma), init=start))
        spread = max(spread, float(np.ptp(lr[~ties])))
        if ties.any():
            spread = max(spread, float(np.ptp(lr[ties])))
            alpha = math.exp(lr[~ties].mean())
            beta_gap = max(beta_gap, abs(math.exp(lr[ties].mean()) - beta_of(alpha)))
    secs = time.perf_counter() - t0
    ok = spread < 1e-3 and beta_gap < 1e-6 and secs < 60
    record("2 tied chain structure", ok, f"log-ratio spread {spread:.1e} (tol 1e-3); beta gap {beta_gap:.1e} (tol 1e-6); {secs:.1f}s")
    assert ok


# ---- 3 ---------------------------------------------------------------------------------------


def test_c3_substring_flow(record):
    worst = 0.0
    for l in range(1, 7):
        for k in range(1, l + 1):
            # exhaustive over build orders and over every position of the substring
            worst = max(worst, abs(expected_substring_flow(l, k, 1.0) - 1.0 / (l - k + 1)))
    seps = [prop3_expected_flow(6, 3, 3, gamma=g) for g in (1e6, 1e8, 1e10)]
    sep_ok = all(r.separated for r in seps if r.condition_met)
    ok = worst < 1e-12 and sep_ok and any(r.condition_met for r in seps)
    alphas = ", ".join(f"{r.alpha:.3g}" for r in seps)
    record("3 substring flow", ok, f"max flow error {worst:.1e} (tol 1e-12); separated at alpha in [{alphas}]: {sep_ok}")
    assert ok


# ---- 4 ---------------------------------------------------------------------------------------


def test_c4_tb_converges(record):
    res, _ = grid_run(0, op=False)
    l1 = res.log.rows[-1]["l1_error"]
    ok = l1 <= 0.1
    record("4 TB L1 to target", ok, f"L1 over last 1e5 samples {l1:.4f} (tol 0.1)")
    assert ok


# ---- 5 ---------------------------------------------------------------------------------------


def test_c5_op_exploits_maxima(record):
    pairs = []
    for s in SEEDS:
        tb = grid_run(s, op=False)[0].log.rows[-1]["ratio_max_recent"]
        op = grid_run(s, op=True)[0].log.rows[-1]["ratio_max_recent"]
        pairs.append((op, tb))
    wins = sum(op > tb for op, tb in pairs)
    ok = wins >= 4
    shown = "; ".join(f"{op:.3f} vs {tb:.3f}" for op, tb in pairs)
    record("5 OP-TB ratio 3 vs TB", ok, f"{wins}/5 seeds won ({shown})")
    assert ok


# ---- 6 ---------------------------------------------------------------------------------------


def test_c6_moo_grid_front(record):
    env = make_env(EnvDescriptor(kind="hypergrid", dim=2, side=32, objectives=("branin", "currin")))
    model = FlowModel(env, ModelConfig(tabular=False, hidden=(64, 64, 64), activation="leaky_relu"), np.random.default_rng(0))
    plan = TrainPlan(mode="replay", n_init=0, n_round=1000, batch_size=128, warmup=128, replay_capacity=100000, lr=0.01, lr_logz=0.1, seed=0)
    train(model, plan, LossConfig(kind="TB"))
    rng = np.random.default_rng(12345)
    S = np.concatenate([sample_trajectories(env, model, 128, rng).u for _ in range(10)])
    P = reference_front(env).points
    P_est = pareto_front(S).points
    igdp, dh = igd_plus(P_est, P), d_h(S, P)
    ok = igdp <= 0.01 and dh <= 0.05
    record("6 MOO grid front", ok, f"IGD+ {igdp:.2e} (tol 0.01); d_H {dh:.4f} (tol 0.05); {len(S)} candidates")
    assert ok


# ---- 7 ---------------------------------------------------------------------------------------


def _brute(S, P):
    def dist(a, b, plus):
        d = np.maximum(b - a, 0) if plus else b - a
        return math.sqrt(float(np.sum(d * d)))

    out = {
        "gd": np.mean([min(dist(s, p, False) for p in P) for s in S]),
        "igd": np.mean([min(dist(s, p, False) for s in S) for p in P]),
        "gd_plus": np.mean([min(dist(s, p, True) for p in P) for s in S]),
        "igd_plus": np.mean([min(dist(s, p, True) for s in S) for p in P]),
    }
    out["d_h"] = max(out["gd"], out["igd"])
    return out


def test_c7_indicator_oracles(record):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    fns = {"gd": gd, "igd": igd, "gd_plus": gd_plus, "igd_plus": igd_plus, "d_h": d_h}
    for _ in range(100):
        D = int(rng.integers(2, 4))
        S, P = rng.random((int(rng.integers(1, 12)), D)), rng.random((int(rng.integers(1, 12)), D))
        ref = _brute(S, P)
        worst = max(worst, max(abs(fns[k](S, P) - ref[k]) for k in fns))
        W = das_dennis(D, 5)
        r2 = np.mean([min(max(w[i] * abs(1 - s[i]) for i in range(D)) for s in S) for w in W])
        worst = max(worst, abs(r2_indicator(S, W) - r2))
    hv_ok = True
    for D in (2, 3):
        for _ in range(3):
            front = pareto_front(rng.random((8, D))).points
            hv = hypervolume(front, np.zeros(D))
            x = rng.random((10**6, D))
            inside = np.zeros(len(x), dtype=bool)
            for p in front:
                inside |= np.all(x <= p, axis=1)
            est = inside.mean()
            hv_ok &= abs(hv - est) < 3 * math.sqrt(est * (1 - est) / len(x))
    compliant = 0
    for _ in range(100):
        P = pareto_front(rng.random((30, 2))).points
        small = pareto_front(rng.random((6, 2))).points
        big = pareto_front(np.vstack([small, rng.random((6, 2))])).points
        # big weakly dominates small: every point of small is covered by a point of big
        compliant += igd_plus(big, P) <= igd_plus(small, P) + 1e-15
    secs = time.perf_counter() - start
    ok = worst < 1e-12 and hv_ok and compliant == 100 and secs < 60
    record("7 indicator oracles", ok, f"max brute-force gap {worst:.1e} (tol 1e-12); HV within 3 SE: {hv_ok}; IGD+ compliant {compliant}/100; {secs:.1f}s")
    assert ok


# ---- 8 ---------------------------------------------------------------------------------------


def test_c8_gradients(record):
    rng = np.random.default_rng(8)
    env = make_env(EnvDescriptor(kind="hypergrid", dim=2, side=4))
    model = FlowModel(env, ModelConfig(tabular=False, hidden=(16, 16), pb_mode="trainable"), rng)
    model.store.data[:] = rng.normal(size=model.store.size) * 0.5
    tb = sample_trajectories(env, model, 10, rng)
    log_r = np.log(tb.u[:, 0])
    env2 = make_env(EnvDescriptor(kind="hypergrid", dim=2, side=4, objectives=("branin", "currin")))
    model2 = FlowModel(env2, ModelConfig(tabular=False, hidden=(16, 16)), rng)
    tb2 = sample_trajectories(env2, model2, 10, rng)
    head, tail = np.arange(9), np.arange(1, 10)

    def pairwise(store, tape):
        lr = model.log_reward_tb(tb, tape)
        return op_loss_pairwise(ad.getitem(lr, head), ad.getitem(lr, tail), tb.u[head, 0], tb.u[tail, 0])

    losses = {
        "FM": (model, lambda s, t: fm_loss(model, model.evaluate(tb, t), t, log_r)),
        "DB": (model, lambda s, t: db_loss(model.evaluate(tb, t), log_r)),
        "TB": (model, lambda s, t: tb_loss(model.evaluate(tb, t), log_r)),
        "subTB": (model, lambda s, t: subtb_loss(model.evaluate(tb, t), 0.9, log_r)),
        "OP-pareto": (model2, lambda s, t: op_loss_pareto(model2.log_reward_tb(tb2, t), tb2.u)),
        "OP-pairwise": (model, pairwise),
        "KL-reg": (model, lambda s, t: kl_reg(model.evaluate(tb, t))),
        "composite": (model, lambda s, t: composite_loss(model, tb, LossConfig(kind="subTB", lambda_kl=0.5), t)),
    }
    errs = {name: gradient_check(fn, m.store, n_coords=64, rng=np.random.default_rng(0)) for name, (m, fn) in losses.items()}
    ok = all(e < 1e-4 for e in errs.values())
    record("8 gradient checks", ok, "; ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (tol 1e-4)")
    assert ok


# ---- 9 ---------------------------------------------------------------------------------------


def test_c9_kl_regularizer(record):
    rows = []
    for s in SEEDS:
        res1, kl0 = grid_run(s, op=True, pb_mode="trainable", lambda_kl=1.0)
        res0, _ = grid_run(s, op=True, pb_mode="trainable", lambda_kl=0.0)
        rows.append((kl0, mean_backward_kl(res1.model), mean_backward_kl(res0.model)))
    wins = sum(reg < free for _, reg, free in rows)
    ok = wins >= 4
    shown = "; ".join(f"{reg:.1e} vs {free:.1e}" for _, reg, free in rows)
    record("9 backward KL", ok, f"{wins}/5 seeds lower with lambda_KL=1 (init KL {rows[0][0]:.1e}; {shown})")
    assert ok


# ---- 10 --------------------------------------------------------------------------------------


def test_c10_boosting(record):
    res, _ = grid_run(0, op=True)
    env, model = res.model.env, res.model
    rng = np.random.default_rng(10)
    boosted, plain = [], []
    for _ in range(100):
        _, u, _ = boost_sample(env, model, 64, 8, rng)
        boosted.append(u.mean())
        plain.append(sample_trajectories(env, model, 8, rng).u.mean())
    b, p = float(np.mean(boosted)), float(np.mean(plain))
    ok = b >= p
    record("10 boosting", ok, f"mean u boosted {b:.3f} vs unboosted {p:.3f} over 100 draws (r_boost 8)")
    assert ok
