"""Pareto-front extraction (maximization)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROVENANCES = ("true-front", "estimated", "reference-discretization")


@dataclass
class FrontSet:
    points: np.ndarray  # (n, D)
    provenance: str = "estimated"

    def __len__(self):
        return self.points.shape[0]


def nondominated_mask(points, chunk: int = 2048) -> np.ndarray:
    """True where no other point is >= everywhere and > somewhere.

    Identical vectors do not dominate each other, so duplicates on the front
    are all kept.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    keep = np.ones(n, dtype=bool)
    for start in range(0, n, chunk):
        block = pts[start : start + chunk]
        ge = np.all(pts[None, :, :] >= block[:, None, :], axis=2)
        gt = np.any(pts[None, :, :] > block[:, None, :], axis=2)
        keep[start : start + chunk] = ~np.any(ge & gt, axis=1)
    return keep


def pareto_front(points, provenance: str = "estimated") -> FrontSet:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return FrontSet(pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 0), provenance)
    if pts.ndim == 1:
        pts = pts[:, None]
    return FrontSet(pts[nondominated_mask(pts)], provenance)
