"""Objective functions. Grid objectives take coordinates scaled to [0, 1]."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from ..errors import ConfigError, ContractViolation

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
MOO_OBJECTIVES = ("branin", "currin", "shubert", "beale")
BAG_SIZE = 13
BAG_SYMBOLS = 7
BAG_BASE = 0.01


def hypergrid(x, r0: float) -> np.ndarray:
    """Corner peaks of height 2.5 + r0 inside plateaux of 0.5 + r0 over an r0 valley."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.abs(x - 0.5)
    plateau = np.all((d > 0.25) & (d <= 0.5), axis=1)
    peak = np.all((d > 0.3) & (d < 0.4), axis=1)
    return r0 + 0.5 * plateau + 2.0 * peak


def _std_normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def cosine_grid(x, r0: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    factors = (np.cos(50.0 * x) + 1.0) * (_std_normal_pdf(0.0) - _std_normal_pdf(5.0 * x))
    return r0 + np.prod(factors, axis=1)


def branin(x1, x2):
    a = 15.0 * x1 - 5.0
    t1 = 15.0 * x2 - 5.1 / (4.0 * np.pi**2) * a**2 + 5.0 / np.pi * a - 6.0
    t2 = (10.0 - 10.0 / (8.0 * np.pi)) * np.cos(a)
    return 1.0 - (t1**2 + t2 + 10.0) / 308.13


def currin(x1, x2):
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(divide="ignore"):
        # x2 -> 0+ limit of the factor is 1
        factor = np.where(x2 > 0, 1.0 - np.exp(-1.0 / (2.0 * np.where(x2 > 0, x2, 1.0))), 1.0)
    num = 2300.0 * x1**3 + 1900.0 * x1**2 + 2092.0 * x1 + 60.0
    den = 13.77 * (100.0 * x1**3 + 500.0 * x1**2 + 4.0 * x1 + 20.0)
    return factor * num / den


def shubert(x1, x2):
    i = np.arange(1, 6, dtype=float)
    s1 = np.sum(i * np.cos(np.multiply.outer(x1, i + 1.0) + i), axis=-1)
    s2 = np.sum(i * np.cos(np.multiply.outer(x2, i + 1.0) + i), axis=-1)
    return s1 * s2 / 397.0 + 186.8 / 397.0


def beale(x1, x2):
    return (
        (1.5 - x1 + x1 * x2) ** 2 + (2.25 - x1 + x1 * x2**2) ** 2 + (2.625 - x1 + x1 * x2**3) ** 2
    ) / 38.8


_MOO = {"branin": branin, "currin": currin, "shubert": shubert, "beale": beale}


def moo_grid(x, names) -> np.ndarray:
    """Stack the named two-dimensional test objectives column-wise."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != 2:
        raise ContractViolation("multi-objective grid objectives are defined for D=2")
    cols = []
    for name in names:
        if name not in _MOO:
            raise ConfigError(f"unknown objective {name!r}; expected one of {MOO_OBJECTIVES}")
        cols.append(_MOO[name](x[:, 0], x[:, 1]))
    return np.stack(cols, axis=1)


def bag_hash(counts, seed: int) -> int:
    """Seeded 64-bit hash of a canonical multiset (symbol counts)."""
    h = hashlib.blake2b(digest_size=8, key=int(seed).to_bytes(8, "little"))
    h.update(bytes(int(c) for c in counts))
    return int.from_bytes(h.digest(), "little")


def bag_value_from_counts(counts, seed: int) -> float:
    counts = [int(c) for c in counts]
    if sum(counts) != BAG_SIZE:
        raise ContractViolation(f"bag must hold {BAG_SIZE} elements, got {sum(counts)}")
    if max(counts) < 7:
        return BAG_BASE
    # the 25% branch of the stochastic objective, fixed per multiset
    return 30.0 if bag_hash(counts, seed) < 2**62 else 10.0


def bag(x, seed: int = 0, n_symbols: int = BAG_SYMBOLS) -> float:
    """Objective of one bag given as any ordering of its symbols."""
    counts = np.bincount(np.asarray(x, dtype=int), minlength=n_symbols)
    return bag_value_from_counts(counts, seed)


def count_overlapping(x: str, gram: str) -> int:
    if not gram:
        raise ConfigError("empty n-gram")
    return sum(1 for i in range(len(x) - len(gram) + 1) if x[i : i + len(gram)] == gram)


def ngram(x: str, grams) -> np.ndarray:
    """Overlapping occurrence counts normalized by the maximal possible count."""
    out = []
    for g in grams:
        c = count_overlapping(x, g)
        denom = len(x) - len(g) + 1
        out.append(min(max(c / denom, 0.0), 1.0) if denom > 0 else 0.0)
    return np.array(out)
