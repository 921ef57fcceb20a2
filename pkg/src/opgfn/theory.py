"""Closed-form minimizers of the neighbouring-pair order-preserving loss on ranked chains.

A chain x_0, ..., x_n with u(x_0) <= ... <= u(x_n) is scored by the sum of
pairwise order-preserving losses between neighbours, with every reward
constrained to [1/gamma, 1]. In log space each pair contributes a convex
function of the log-reward difference, so the box-constrained problem is
convex and the numeric minimizer below is a certified oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, PreconditionError

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# chains


@dataclass
class RankedChain:
    """Sorted objective values plus the reward box bound.

    With ``auxiliaries`` two extra states below and above the chain are added
    (objectives -inf and +inf); they make the end rewards interior.
    """

    u: np.ndarray
    gamma: float
    auxiliaries: bool = True

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        if self.u.size < 2:
            raise ContractViolation("a chain needs at least two states")
        if np.any(np.diff(self.u) < 0):
            raise ContractViolation("chain objectives must be sorted ascending")
        if not self.gamma > 1:
            raise ContractViolation("gamma must exceed 1")

    @property
    def n(self) -> int:
        return self.u.size - 1

    @property
    def I1(self) -> np.ndarray:
        return np.flatnonzero(self.u[:-1] < self.u[1:])

    @property
    def I2(self) -> np.ndarray:
        return np.flatnonzero(self.u[:-1] == self.u[1:])

    @property
    def m(self) -> int:
        return int(self.I1.size)

    def pair_ties(self) -> np.ndarray:
        """Tie flag for every neighbouring pair of the (possibly extended) chain."""
        ties = self.u[:-1] == self.u[1:]
        if self.auxiliaries:
            ties = np.concatenate([[False], ties, [False]])
        return ties


@dataclass
class ChainSolution:
    rewards: np.ndarray  # R̂(x_0..x_n)
    alpha: float
    beta: float
    loss: float
    aux_rewards: tuple = ()  # (R̂(x_-1), R̂(x_n+1)) when auxiliaries are used
    gamma0: float = float("nan")


def chain_loss(log_r, ties) -> float:
    """Sum of neighbouring-pair order-preserving losses (KL form).

    A strict pair (lower, higher) costs softplus(log r_lo - log r_hi); a tie
    costs the KL from (1/2, 1/2) to the induced pair distribution.
    """
    d = np.diff(-np.asarray(log_r, dtype=float))  # log r_i - log r_{i+1}
    ties = np.asarray(ties, dtype=bool)
    strict = np.logaddexp(0.0, d)
    tie = 0.5 * (np.logaddexp(0.0, d) + np.logaddexp(0.0, -d)) - LOG2
    return float(np.sum(np.where(ties, tie, strict)))


def _chain_grad(log_r: np.ndarray, ties: np.ndarray) -> np.ndarray:
    d = log_r[:-1] - log_r[1:]
    s = 1.0 / (1.0 + np.exp(-d))
    gd = np.where(ties, s - 0.5, s)
    g = np.zeros_like(log_r)
    g[:-1] += gd
    g[1:] -= gd
    return g


def minimize_chain(ties, log_gamma: float, max_iter: int = 200000, tol: float = 1e-13, init=None) -> np.ndarray:
    """Numeric minimizer of :func:`chain_loss` over the box [-log gamma, 0]^N.

    Projected gradient descent with Nesterov momentum and adaptive restart.
    The loss is 1-smooth in log space (each pair term has curvature at most
    1/4 and every coordinate sits in at most two pairs), so a unit step is
    safe; the step is still halved whenever the loss goes up.
    """
    ties = np.asarray(ties, dtype=bool)
    N = ties.size + 1
    lo = -float(log_gamma)
    x = np.linspace(lo, 0.0, N) if init is None else np.clip(np.asarray(init, dtype=float), lo, 0.0)
    y = x.copy()
    f = chain_loss(x, ties)
    step, t = 1.0, 1.0
    for _ in range(max_iter):
        g = _chain_grad(y, ties)
        x_new = np.clip(y - step * g, lo, 0.0)
        f_new = chain_loss(x_new, ties)
        if f_new > f + 1e-15:
            # restart the momentum; shrink the step if even a plain step fails
            y, t = x.copy(), 1.0
            g = _chain_grad(x, ties)
            x_new = np.clip(x - step * g, lo, 0.0)
            f_new = chain_loss(x_new, ties)
            if f_new > f + 1e-15:
                step *= 0.5
                continue
        gap = np.max(np.abs(x_new - np.clip(x_new - _chain_grad(x_new, ties), lo, 0.0)))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t - 1.0) / t_new * (x_new - x)
        x, f, t = x_new, f_new, t_new
        if gap < tol:
            break
    return x


# ---------------------------------------------------------------------------
# all-distinct chains


def prop1_closed_form(n: int, gamma: float) -> ChainSolution:
    """Minimizer for n+1 strictly increasing objectives without auxiliary states.

    The rewards form a geometric progression from 1/gamma to 1; every pair
    then costs log(1 + gamma^(-1/n)).
    """
    if n < 1 or not gamma > 1:
        raise ContractViolation("need n >= 1 and gamma > 1")
    i = np.arange(n + 1)
    rewards = gamma ** (i / n - 1.0)
    loss = n * math.log1p(gamma ** (-1.0 / n))
    return ChainSolution(rewards, alpha=gamma ** (1.0 / n), beta=float("nan"), loss=loss)


def prop1_numeric(n: int, gamma: float, seed: int = 0, **kwargs) -> ChainSolution:
    """Numeric minimizer started from a random point of the box.

    The default linear start already is the geometric optimum, so a random
    start keeps the comparison with :func:`prop1_closed_form` independent.
    """
    init = kwargs.pop("init", None)
    if init is None:
        init = np.random.default_rng(seed).uniform(-math.log(gamma), 0.0, n + 1)
    log_r = minimize_chain(np.zeros(n, dtype=bool), math.log(gamma), init=init, **kwargs)
    ratios = np.diff(log_r)
    return ChainSolution(np.exp(log_r), float(np.exp(ratios.mean())), float("nan"), chain_loss(log_r, np.zeros(n, bool)))


# ---------------------------------------------------------------------------
# chains with ties


def log_f1(alpha: float, n: int, m: int) -> float:
    """log of alpha^(m+2) * ((alpha-1)/(alpha+3))^(n-m)."""
    if alpha <= 1:
        return -math.inf if n > m else (m + 2) * math.log(alpha)
    return (m + 2) * math.log(alpha) + (n - m) * (math.log(alpha - 1.0) - math.log(alpha + 3.0))


def _bisect(fn, lo: float, hi: float, rel: float = 1e-15, max_iter: int = 400) -> float:
    """Root of an increasing ``fn`` on [lo, hi] with fn(lo) < 0 <= fn(hi)."""
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel * hi:
            break
    return 0.5 * (lo + hi)


def solve_alpha(gamma: float, n: int, m: int) -> float:
    """Unique alpha > 1 with f1(alpha) = gamma."""
    target = math.log(gamma)
    fn = lambda a: log_f1(a, n, m) - target
    lo = 1.0
    hi = max(2.0, gamma ** (1.0 / (m + 2)))
    while fn(hi) < 0:
        hi *= 2.0
    return _bisect(fn, lo, hi)


def gamma0(n: int, m: int, lo: float = 1.0 + 1e-9, hi: float = 1e12) -> float:
    """Smallest box bound above which the tie-aware minimizer preserves the order.

    Root of f1(gamma^(1/(m+1))) = gamma; equals ``lo`` when the left side
    already dominates there (no ties).
    """
    fn = lambda g: log_f1(g ** (1.0 / (m + 1)), n, m) - math.log(g)
    if fn(lo) >= 0:
        return lo
    if fn(hi) < 0:
        raise ContractViolation(f"no threshold below {hi:g} for n={n}, m={m}")
    return _bisect(fn, lo, hi)


def beta_of(alpha: float) -> float:
    return (alpha - 1.0) / (alpha + 3.0)


def prop2_solve(chain: RankedChain) -> ChainSolution:
    """Piecewise-geometric minimizer of a chain with auxiliary end states.

    Consecutive reward ratios are alpha on strict steps and
    beta = (alpha-1)/(alpha+3) on ties, starting from R̂(x_0) = alpha/gamma.

    Raises:
        PreconditionError: gamma does not exceed the order-preserving threshold.
    """
    if not chain.auxiliaries:
        raise ContractViolation("the piecewise-geometric solution assumes auxiliary end states")
    n, m, gamma = chain.n, chain.m, chain.gamma
    g0 = gamma0(n, m)
    if not gamma > g0:
        raise PreconditionError(f"gamma={gamma:g} must exceed gamma0={g0:.12g}", threshold=g0)
    alpha = solve_alpha(gamma, n, m)
    beta = beta_of(alpha)
    steps = np.where(chain.u[:-1] == chain.u[1:], math.log(beta), math.log(alpha))
    log_r = math.log(alpha) - math.log(gamma) + np.concatenate([[0.0], np.cumsum(steps)])
    full = np.concatenate([[-math.log(gamma)], log_r, [0.0]])
    return ChainSolution(
        np.exp(log_r),
        alpha,
        beta,
        chain_loss(full, chain.pair_ties()),
        aux_rewards=(1.0 / gamma, 1.0),
        gamma0=g0,
    )


def prop2_numeric(chain: RankedChain, **kwargs) -> ChainSolution:
    """Numeric minimizer on the same chain; ratios are averaged per pair type."""
    ties = chain.pair_ties()
    full = minimize_chain(ties, math.log(chain.gamma), **kwargs)
    ratios = np.diff(full)
    alpha = float(np.exp(ratios[~ties].mean()))
    beta = float(np.exp(ratios[ties].mean())) if ties.any() else float("nan")
    inner = full[1:-1] if chain.auxiliaries else full
    aux = (math.exp(full[0]), math.exp(full[-1])) if chain.auxiliaries else ()
    return ChainSolution(np.exp(inner), alpha, beta, chain_loss(full, ties), aux_rewards=aux)


def closed_form_chain_loss(alpha: float, n: int, m: int) -> float:
    """Loss of the piecewise-geometric solution as a function of alpha (KL form)."""
    beta = beta_of(alpha)
    strict = (m + 2) * math.log1p(1.0 / alpha)
    tie = (n - m) * (0.5 * (math.log1p(beta) + math.log1p(1.0 / beta)) - LOG2)
    return strict + tie


@dataclass
class TrendReport:
    gammas: list
    alphas: list
    betas: list
    losses: list
    alpha_increasing: bool
    beta_increasing: bool
    loss_decreasing: bool

    @property
    def holds(self) -> bool:
        return self.alpha_increasing and self.beta_increasing and self.loss_decreasing


def sparsification_trend(chain: RankedChain, gammas) -> TrendReport:
    """Solve the chain along an increasing gamma schedule and check monotonicity."""
    gammas = [float(g) for g in gammas]
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ContractViolation("the gamma schedule must increase")
    sols = [prop2_solve(RankedChain(chain.u, g, chain.auxiliaries)) for g in gammas]
    a = [s.alpha for s in sols]
    b = [s.beta for s in sols]
    L = [s.loss for s in sols]
    inc = lambda v: all(y > x for x, y in zip(v, v[1:]))
    return TrendReport(gammas, a, b, L, inc(a), inc(b), inc([-x for x in L]))


# ---------------------------------------------------------------------------
# substring flows in the prepend/append sequence MDP


def build_orders(l: int):
    """Every construction order of a length-l string: start index after each step.

    The first symbol is placed directly; each later step prepends (the window
    grows left) or appends. Yields a tuple of (start, length) per state.
    """
    for bits in itertools.product((0, 1), repeat=l - 1):
        start = sum(1 for b in bits if b == 0)  # number of prepends
        windows = [(start, 1)]
        a, length = start, 1
        for b in bits:
            if b == 0:
                a -= 1
            length += 1
            windows.append((a, length))
        yield windows


def substring_flow_bruteforce(x, s, r_hat: float) -> float:
    """Flow through intermediate state ``s`` on the way to terminal ``x``.

    Uniform backward sampling gives each of the 2^(l-1) build orders the same
    flow r_hat / 2^(l-1); a build order counts when one of its states equals s.
    """
    x, s = tuple(x), tuple(s)
    l, k = len(x), len(s)
    if k > l:
        raise ContractViolation("substring longer than the string")
    hits = total = 0
    for windows in build_orders(l):
        total += 1
        if any(x[a : a + k] == s for a, n in windows if n == k):
            hits += 1
    return r_hat * hits / total


def expected_substring_flow(l: int, k: int, r_hat: float = 1.0) -> float:
    """Average over positions 0..l-k of the brute-force flow through a length-k substring.

    Filler symbols are distinct from the substring so it occurs exactly once.
    """
    if k > l or k < 1:
        raise ContractViolation(f"need 1 <= k <= l, got k={k}, l={l}")
    s = tuple(range(k))
    flows = []
    for a in range(l - k + 1):
        x = tuple(range(k, k + a)) + s + tuple(range(k + a, l))
        flows.append(substring_flow_bruteforce(x, s, r_hat))
    return float(np.mean(flows))


def substring_flow_closed_form(l: int, k: int, r_hat: float = 1.0) -> float:
    return r_hat / (l - k + 1)


@dataclass
class SubstringReport:
    l: int
    k: int
    n: int
    alpha: float
    beta: float
    ef_star: float
    ef_competitor: float
    max_closed_form_error: float
    separated: bool
    condition_met: bool  # alpha > 4
    sufficient_inequality: bool  # 1/(alpha-1) < beta
    notes: list = field(default_factory=list)


def prop3_expected_flow(l: int, k: int, n: int, gamma: float | None = None, alpha: float | None = None) -> SubstringReport:
    """Expected flows through the shared substring and its strongest competitor.

    The dataset is x_0 < ... < x_n = x'_n with piecewise-geometric rewards
    (alpha on the strict steps, beta on the final tie). x_n and x'_n share the
    substring s*; in the worst case a competitor k-substring of x_n also
    appears in every x_i, i < n. Each expectation averages the brute-force
    flow over all positions of the substring in each string.
    """
    if k > l:
        raise ContractViolation(f"substring length k={k} exceeds sequence length l={l}")
    if alpha is None:
        if gamma is None:
            raise ContractViolation("give gamma or alpha")
        u = np.concatenate([np.arange(n + 1), [n]]).astype(float)
        sol = prop2_solve(RankedChain(u, gamma))
        alpha, beta, rewards = sol.alpha, sol.beta, sol.rewards
    else:
        beta = beta_of(alpha)
        # top of the chain at 1/alpha, stepping down by alpha
        base = (1.0 / alpha) * alpha ** (np.arange(n + 1) - n)
        rewards = np.concatenate([base, [base[-1] * beta]])
    r_x, r_top, r_twin = rewards[:n], rewards[n], rewards[n + 1]
    per_string = expected_substring_flow(l, k, 1.0)
    closed = substring_flow_closed_form(l, k, 1.0)
    err = abs(per_string - closed)
    ef_star = (r_top + r_twin) * per_string
    ef_comp = (r_top + float(np.sum(r_x))) * per_string
    notes = []
    if not alpha > 4:
        notes.append("condition unmet: alpha <= 4, separation not asserted")
    return SubstringReport(
        l=l,
        k=k,
        n=n,
        alpha=float(alpha),
        beta=float(beta),
        ef_star=float(ef_star),
        ef_competitor=float(ef_comp),
        max_closed_form_error=float(err),
        separated=bool(ef_star > ef_comp),
        condition_met=bool(alpha > 4),
        sufficient_inequality=bool(1.0 / (alpha - 1.0) < beta) if alpha > 1 else False,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# pass/fail table


@dataclass
class OracleRow:
    check: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""


def random_chain(rng: np.random.Generator, gamma: float, max_n: int = 8) -> RankedChain:
    n = int(rng.integers(1, max_n + 1))
    u = np.sort(rng.integers(0, max(2, n), size=n + 1)).astype(float)
    return RankedChain(u, gamma)


def check_prop1(ns=(2, 4, 8), gammas=(10.0, 1e3), tol: float = 1e-3) -> list[OracleRow]:
    rows = []
    for n in ns:
        for g in gammas:
            cf, num = prop1_closed_form(n, g), prop1_numeric(n, g)
            dev = float(np.max(np.abs(np.log(cf.rewards) - np.log(num.rewards))))
            rows.append(OracleRow(f"prop1 rewards n={n} gamma={g:g}", dev < tol, dev, tol))
            gap = abs(cf.loss - num.loss)
            rows.append(OracleRow(f"prop1 loss n={n} gamma={g:g}", gap < 1e-10, gap, 1e-10, f"loss={cf.loss:.12g}"))
    return rows


def check_prop2(n_chains: int = 50, gamma: float = 1e6, seed: int = 0, tol: float = 1e-3) -> list[OracleRow]:
    rng = np.random.default_rng(seed)
    worst_ratio = worst_beta = worst_coord = 0.0
    for _ in range(n_chains):
        chain = random_chain(rng, gamma)
        ties = chain.pair_ties()
        full = minimize_chain(ties, math.log(gamma))
        lr = np.diff(full)
        spread = max(np.ptp(lr[~ties]), np.ptp(lr[ties]) if ties.any() else 0.0)
        worst_ratio = max(worst_ratio, float(spread))
        a = math.exp(lr[~ties].mean())
        if ties.any():
            worst_beta = max(worst_beta, abs(math.exp(lr[ties].mean()) - beta_of(a)))
        cf = prop2_solve(chain)
        worst_coord = max(worst_coord, float(np.max(np.abs(np.log(cf.rewards) - full[1:-1]))))
    return [
        OracleRow("prop2 log-ratio spread", worst_ratio < tol, worst_ratio, tol),
        OracleRow("prop2 beta relation", worst_beta < 1e-6, worst_beta, 1e-6),
        OracleRow("prop2 closed form vs numeric", worst_coord < tol, worst_coord, tol),
    ]


def check_prop3(max_l: int = 6, gammas=(1e6, 1e8, 1e10), n: int = 3, alpha: float | None = None) -> list[OracleRow]:
    err = 0.0
    for l in range(1, max_l + 1):
        for k in range(1, l + 1):
            err = max(err, abs(expected_substring_flow(l, k) - substring_flow_closed_form(l, k)))
    rows = [OracleRow(f"prop3 expected flow l<={max_l}", err < 1e-12, err, 1e-12)]
    cases = [prop3_expected_flow(max_l, 3, n, alpha=alpha)] if alpha is not None else [
        prop3_expected_flow(max_l, 3, n, gamma=g) for g in gammas
    ]
    for rep in cases:
        margin = rep.ef_star - rep.ef_competitor
        if rep.condition_met:
            rows.append(OracleRow(f"prop3 separation alpha={rep.alpha:.6g}", rep.separated, margin, 0.0))
        else:
            rows.append(OracleRow(f"prop3 separation alpha={rep.alpha:.6g}", True, margin, 0.0, "condition unmet"))
    return rows


def oracle_table(which: str = "all", **params) -> list[OracleRow]:
    checks = {"prop1": check_prop1, "prop2": check_prop2, "prop3": check_prop3}
    if which == "all":
        return [row for fn in checks.values() for row in fn()]
    if which not in checks:
        raise ContractViolation(f"unknown oracle {which!r}; choose prop1, prop2, prop3 or all")
    return checks[which](**params)
