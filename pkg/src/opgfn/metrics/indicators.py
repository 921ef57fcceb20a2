"""Front-quality indicators for maximization problems on [0, 1]^D."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContractViolation
from .pareto import FrontSet, nondominated_mask, pareto_front


def _as_set(x, name: str) -> np.ndarray:
    x = np.asarray(x.points if isinstance(x, FrontSet) else x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ContractViolation(f"{name} is empty")
    return x


def _pairwise(a: np.ndarray, b: np.ndarray, plus: bool) -> np.ndarray:
    """dist[i, j] between a_i (generated) and b_j (reference)."""
    diff = b[None, :, :] - a[:, None, :]
    if plus:
        diff = np.maximum(diff, 0.0)
    return np.sqrt(np.sum(diff * diff, axis=2))


def gd(S, P) -> float:
    """Mean distance from each generated point to its nearest reference point."""
    S, P = _as_set(S, "S"), _as_set(P, "P")
    return float(np.mean(_pairwise(S, P, False).min(axis=1)))


def igd(S, P) -> float:
    """Mean distance from each reference point to its nearest generated point."""
    S, P = _as_set(S, "S"), _as_set(P, "P")
    return float(np.mean(_pairwise(S, P, False).min(axis=0)))


def gd_plus(S, P) -> float:
    S, P = _as_set(S, "S"), _as_set(P, "P")
    return float(np.mean(_pairwise(S, P, True).min(axis=1)))


def igd_plus(S, P) -> float:
    """IGD with the dominance-aware distance ||max(p - s, 0)||."""
    S, P = _as_set(S, "S"), _as_set(P, "P")
    return float(np.mean(_pairwise(S, P, True).min(axis=0)))


def d_h(S, P) -> float:
    return max(gd(S, P), igd(S, P))


# ---------------------------------------------------------------------------
# hypervolume


def _hv2(pts: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-pts[:, 0], kind="stable")
    vol, best_y = 0.0, ref[1]
    for x, y in pts[order]:
        if y > best_y:
            vol += (x - ref[0]) * (y - best_y)
            best_y = y
    return vol


def _hv(pts: np.ndarray, ref: np.ndarray) -> float:
    if pts.shape[0] == 0:
        return 0.0
    d = pts.shape[1]
    if d == 1:
        return float(pts[:, 0].max() - ref[0])
    if d == 2:
        return _hv2(pts, ref)
    # slice along the last axis: between consecutive levels the cross-section
    # is the (d-1)-volume of points reaching at least the upper level
    levels = np.unique(pts[:, -1])[::-1]
    vol = 0.0
    for i, z in enumerate(levels):
        lower = levels[i + 1] if i + 1 < len(levels) else ref[-1]
        active = pts[pts[:, -1] >= z, :-1]
        active = active[nondominated_mask(active)]
        vol += _hv(active, ref[:-1]) * (z - lower)
    return vol


def hypervolume(front, ref) -> float:
    """Lebesgue measure of the union of boxes [ref, p] over the front."""
    pts = np.asarray(front.points if isinstance(front, FrontSet) else front, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pts.size == 0:
        return 0.0
    pts = pts.reshape(-1, ref.size)
    bad = np.flatnonzero(np.any(pts < ref, axis=1))
    if bad.size:
        raise ContractViolation(f"point {pts[bad[0]].tolist()} does not dominate the reference point {ref.tolist()}")
    return float(_hv(pts[nondominated_mask(pts)], ref))


# ---------------------------------------------------------------------------
# coverage and uniformity


def pc_entropy(P_est, P) -> float:
    """Entropy of the nearest-reference histogram of the estimated front.

    Frequencies are divided by |P| (the reference size), not by |P_est|.
    Ties go to the lowest reference index.
    """
    P = _as_set(P, "P")
    Q = np.asarray(P_est.points if isinstance(P_est, FrontSet) else P_est, dtype=float)
    if Q.size == 0:
        return 0.0
    Q = Q.reshape(-1, P.shape[1])
    nearest = np.argmin(_pairwise(Q, P, False), axis=1)
    freq = np.bincount(nearest, minlength=P.shape[0]) / P.shape[0]
    freq = freq[freq > 0]
    return float(-np.sum(freq * np.log(freq)))


def das_dennis(n_obj: int, divisions: int) -> np.ndarray:
    """Simplex-lattice weight vectors with entries in {0, 1/divisions, ..., 1}."""
    if n_obj == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(divisions + n_obj - 1), n_obj - 1):
        parts = np.diff((-1,) + bars + (divisions + n_obj - 1,)) - 1
        rows.append(parts / divisions)
    return np.array(rows, dtype=float)


def r2_indicator(S, weights, z_star=None) -> float:
    """Mean over weights of the best weighted Chebyshev distance to z*."""
    S = _as_set(S, "S")
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    if W.shape[0] == 0:
        raise ContractViolation("R2 needs at least one weight vector")
    z = np.ones(S.shape[1]) if z_star is None else np.asarray(z_star, dtype=float)
    cheb = np.max(W[:, None, :] * np.abs(z - S)[None, :, :], axis=2)
    return float(np.mean(cheb.min(axis=1)))


# ---------------------------------------------------------------------------
# reference fronts


def face_discretization(n_obj: int, resolution: int = 64) -> np.ndarray:
    """Grid points on the faces of [0,1]^D that touch the all-ones corner."""
    axis = np.linspace(0.0, 1.0, resolution)
    pts = set()
    for d in range(n_obj):
        grids = np.meshgrid(*([axis] * (n_obj - 1)), indexing="ij")
        rest = np.stack([g.ravel() for g in grids], axis=1) if n_obj > 1 else np.zeros((1, 0))
        face = np.insert(rest, d, 1.0, axis=1)
        pts.update(map(tuple, face))
    return np.array(sorted(pts, key=lambda p: (-p[0],) + tuple(p[1:])))


def reference_front(env, resolution: int = 64) -> FrontSet:
    """Exact front by enumeration when possible, else the face discretization."""
    if env.n_states is not None or env.terminal_count() <= env.desc.enum_cap:
        u = np.concatenate([env.objective_batch(b) for b in env.iter_terminal_batches()])
        return pareto_front(u, "true-front")
    return FrontSet(face_discretization(env.n_objectives, resolution), "reference-discretization")


# ---------------------------------------------------------------------------
# report


@dataclass
class IndicatorReport:
    gd: float
    igd: float
    gd_plus: float
    igd_plus: float
    d_h: float
    hv: float
    pc_ent: float
    r2: float
    n_samples: int
    n_estimated_front: int
    n_reference: int
    hv_ref: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def indicator_report(S, P, hv_ref=None, r2_divisions: int = 10) -> IndicatorReport:
    """Full suite: distances of S and of its front P' against reference P.

    GD, IGD, GD+ and d_H use the whole sample set S. IGD+, HV and PC-ent use
    the estimated front P' (IGD+ and R2 are the same on S and on P').
    """
    S = _as_set(S, "S")
    P = _as_set(P, "P")
    P_est = pareto_front(S).points
    ref = np.zeros(S.shape[1]) if hv_ref is None else np.asarray(hv_ref, dtype=float)
    return IndicatorReport(
        gd=gd(S, P),
        igd=igd(S, P),
        gd_plus=gd_plus(S, P),
        igd_plus=igd_plus(P_est, P),
        d_h=d_h(S, P),
        hv=hypervolume(P_est, ref),
        pc_ent=pc_entropy(P_est, P),
        r2=r2_indicator(S, das_dennis(S.shape[1], r2_divisions)),
        n_samples=S.shape[0],
        n_estimated_front=P_est.shape[0],
        n_reference=P.shape[0],
        hv_ref=ref.tolist(),
    )
