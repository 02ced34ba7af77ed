"""Concentric-annuli index over centroids for Exponion candidate retrieval.

For every centroid ``j`` the other centroids are partitioned into blocks of
2, 4, 8, ... members by increasing distance from ``c(j)``; within a block the
order is arbitrary. Block ``f`` is bounded outside by radius ``e(j, f)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CentroidState, centroid_separation, pairwise_centroid_distances


def block_ends(k: int) -> np.ndarray:
    """Cumulative sizes of the doubling blocks covering the k-1 other centroids."""
    ends = []
    total, size = 0, 2
    while total < k - 1:
        total = min(total + size, k - 1)
        ends.append(total)
        size *= 2
    return np.array(ends, dtype=np.int64)


@dataclass
class AnnulusIndex:
    order: np.ndarray  # (k, k-1) other-centroid indices, block-partitioned per row
    radii: np.ndarray  # (k, F) outer radius e(j, f) of each block
    ends: np.ndarray  # (F,) exclusive end offset of each block within a row
    s: np.ndarray  # (k,) nearest-other-centroid distance
    cc: np.ndarray
    n_distance_calcs: int

    @property
    def k(self) -> int:
        return self.order.shape[0]

    @property
    def n_annuli(self) -> int:
        return self.ends.shape[0]

    def members(self, j: int, f: int) -> np.ndarray:
        """w(j, f) with f counted from 1."""
        start = 0 if f == 1 else self.ends[f - 2]
        return self.order[j, start : self.ends[f - 1]]


def build_annuli(centroids) -> AnnulusIndex:
    C = centroids.centroids if isinstance(centroids, CentroidState) else np.asarray(centroids)
    k = C.shape[0]
    cc = pairwise_centroid_distances(np.ascontiguousarray(C, dtype=np.float64))
    ends = block_ends(k)
    if k < 2:
        return AnnulusIndex(
            order=np.zeros((k, 0), dtype=np.int64),
            radii=np.zeros((k, 0)),
            ends=ends,
            s=np.full(k, np.inf),
            cc=cc,
            n_distance_calcs=0,
        )
    rows = cc.copy()
    np.fill_diagonal(rows, -np.inf)
    # position 0 holds the centroid itself; block f ends at column ends[f]
    kth = np.concatenate(([0], ends))
    part = np.argpartition(rows, kth, axis=1)
    order = np.ascontiguousarray(part[:, 1:], dtype=np.int64)
    radii = np.take_along_axis(cc, order[:, ends - 1], axis=1)
    s = np.take_along_axis(cc, order, axis=1).min(axis=1)
    return AnnulusIndex(
        order=order,
        radii=np.ascontiguousarray(radii),
        ends=ends,
        s=s,
        cc=cc,
        n_distance_calcs=k * (k - 1) // 2,
    )


def annulus_cutoff(radii_row: np.ndarray, ends: np.ndarray, R: float) -> int:
    """Number of leading entries of an order row to search for radius R."""
    f = int(np.searchsorted(radii_row, R, side="left"))
    if f >= ends.shape[0]:
        return int(ends[-1]) if ends.shape[0] else 0
    return int(ends[f])


def exponion_candidates(index: AnnulusIndex, j: int, R: float) -> np.ndarray:
    """J*: union of the annuli of ``j`` up to the first whose radius reaches R, plus j."""
    n = annulus_cutoff(index.radii[j], index.ends, R)
    return np.sort(np.concatenate(([j], index.order[j, :n])))


def exact_ball(cc: np.ndarray, j: int, R: float) -> np.ndarray:
    """J: every centroid within R of centroid j (linear scan)."""
    return np.flatnonzero(cc[j] <= R)


def annular_candidates(x_norm: float, sorted_norms: np.ndarray, order: np.ndarray, R: float) -> np.ndarray:
    """Indices j with | |c(j)| - |x| | <= R, found by two binary searches.

    ``sorted_norms`` is ascending and ``order`` maps its positions to centroid indices.
    """
    lo = np.searchsorted(sorted_norms, x_norm - R, side="left")
    hi = np.searchsorted(sorted_norms, x_norm + R, side="right")
    return np.sort(order[lo:hi])


def sorted_centroid_norms(csq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(csq)
    order = np.argsort(norms, kind="stable")
    return np.ascontiguousarray(norms[order]), order.astype(np.int64)


__all__ = [
    "AnnulusIndex",
    "annular_candidates",
    "block_ends",
    "build_annuli",
    "centroid_separation",
    "exact_ball",
    "exponion_candidates",
    "sorted_centroid_norms",
]
