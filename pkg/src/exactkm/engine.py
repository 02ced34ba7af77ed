"""The Lloyd scaffold: round-0 initialisation, then assignment and update until stable."""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from . import kernels as K
from .core import CentroidState, DataMatrix, RoundStats, distance_rows, init_centroids, paired_displacements
from .strategies import ALGORITHMS, Strategy, make_strategy

CHUNK = 2048
FULL_RECOMPUTE_EVERY = 100


@dataclass
class RunConfig:
    algorithm: str
    k: int
    seed: int = 0
    max_rounds: int = 1000
    n_workers: int = 1
    group_count_override: int | None = None

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; valid: {', '.join(ALGORITHMS)}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be at least 1, got {self.max_rounds}")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be at least 1, got {self.n_workers}")
        if self.group_count_override is not None and self.group_count_override < 1:
            raise ValueError("group_count_override must be at least 1")


@dataclass
class RunResult:
    algorithm: str
    final_centroids: np.ndarray
    final_assignments: np.ndarray
    rounds_executed: int
    per_round_stats: list
    converged: bool
    wall_ms: float = 0.0
    digests: list = field(default_factory=list)
    # per-round (assignments, centroids used for them); only when recording
    trajectory: object = None

    def totals(self) -> dict:
        keys = ("dist_calcs_assign", "dist_calcs_centroid", "dist_calcs_init", "changes")
        return {key: int(sum(getattr(r, key) for r in self.per_round_stats)) for key in keys}

    @property
    def dist_calcs_assign(self) -> int:
        return sum(r.dist_calcs_assign for r in self.per_round_stats)

    @property
    def dist_calcs_total(self) -> int:
        return sum(r.dist_calcs_total for r in self.per_round_stats)


@dataclass
class RoundView:
    """What an observer sees: frozen for the duration of the callback."""

    round: int
    strategy: Strategy
    centroids: CentroidState
    assignments: np.ndarray
    previous_assignments: np.ndarray
    data: DataMatrix


def converged(changes: int) -> bool:
    return changes == 0


# ---------------------------------------------------------------------------
# update step


@njit(cache=True)
def _accumulate(X, a, sums, counts):
    sums[:] = 0.0
    counts[:] = 0
    for i in range(X.shape[0]):
        j = a[i]
        counts[j] += 1
        for m in range(X.shape[1]):
            sums[j, m] += X[i, m]


@njit(cache=True)
def _apply_moves(X, changed, old, new, sums, counts):
    for c in range(changed.shape[0]):
        i = changed[c]
        jo = old[i]
        jn = new[i]
        counts[jo] -= 1
        counts[jn] += 1
        for m in range(X.shape[1]):
            sums[jo, m] -= X[i, m]
            sums[jn, m] += X[i, m]


def cluster_sums(data: DataMatrix, assignments: np.ndarray, k: int):
    sums = np.zeros((k, data.dim))
    counts = np.zeros(k, dtype=np.int64)
    _accumulate(data.values, np.asarray(assignments, dtype=np.int64), sums, counts)
    return sums, counts


def update_step(data: DataMatrix, assignments: np.ndarray, changed, prev: CentroidState,
                sums: np.ndarray, counts: np.ndarray, previous_assignments=None) -> CentroidState:
    """Move centroids to the means of their clusters, touching only changed samples.

    ``sums``/``counts`` are updated in place. Samples in ``changed`` are moved
    from ``previous_assignments`` to ``assignments`` in ascending index order.
    A cluster left empty keeps its previous centroid.
    """
    changed = np.sort(np.asarray(list(changed) if isinstance(changed, (set, frozenset)) else changed,
                                 dtype=np.int64))
    if changed.size:
        if previous_assignments is None:
            raise ValueError("previous_assignments is required when samples changed")
        _apply_moves(data.values, changed, np.asarray(previous_assignments, dtype=np.int64),
                     np.asarray(assignments, dtype=np.int64), sums, counts)
    return centroids_from_sums(prev, sums, counts)


def centroids_from_sums(prev: CentroidState, sums: np.ndarray, counts: np.ndarray) -> CentroidState:
    C = prev.centroids.copy()
    live = counts > 0
    C[live] = sums[live] / counts[live, None]
    p = paired_displacements(prev.centroids, C)
    return CentroidState.from_array(C, p)


# ---------------------------------------------------------------------------


class _Pool:
    def __init__(self, n: int, n_workers: int):
        self.chunks = [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]
        self.cnt = np.zeros((len(self.chunks), K.N_COUNTERS), dtype=np.int64)
        self.executor = ThreadPoolExecutor(n_workers) if n_workers > 1 else None

    def run(self, fn: Callable, with_counters: bool = False) -> np.ndarray:
        self.cnt[:] = 0
        if with_counters:
            jobs = [(fn, lo, hi, self.cnt[c]) for c, (lo, hi) in enumerate(self.chunks)]
        else:
            jobs = [(fn, lo, hi) for lo, hi in self.chunks]
        if self.executor is None:
            for job in jobs:
                job[0](*job[1:])
        else:
            # list() re-raises the first worker exception
            list(self.executor.map(lambda job: job[0](*job[1:]), jobs))
        return self.cnt.sum(axis=0)

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()


def _digest(a: np.ndarray) -> str:
    return hashlib.blake2b(a.tobytes(), digest_size=16).hexdigest()


def run(config: RunConfig, data: DataMatrix, observer: Callable | None = None,
        record_trajectory: bool = False, lockstep: bool = False,
        init: CentroidState | None = None) -> RunResult:
    """Run exact k-means.

    Round 0 is a full N*k pass from the seeded centroids. Each later round
    refreshes bounds, reassigns and, unless nothing changed, updates the
    centroids. ``rounds_executed`` counts the rounds after round 0, and
    ``per_round_stats`` holds round 0 followed by one entry per such round.

    ``observer(event, view)`` is called with event ``"refreshed"`` before and
    ``"assigned"`` after each assignment step of rounds >= 1.
    """
    config.validate()
    if config.k > data.n_samples:
        raise ValueError(f"k={config.k} exceeds the number of samples N={data.n_samples}")
    cs = init if init is not None else init_centroids(data, config.k, config.seed)
    if cs.k != config.k:
        raise ValueError("initial centroids do not match k")
    n, k = data.n_samples, config.k
    X, xsq = data.values, data.sq_norms

    strategy = make_strategy(config.algorithm, data, k, config.seed,
                             group_count=config.group_count_override, lockstep=lockstep)
    pool = _Pool(n, config.n_workers)
    traj_a, traj_c = [], []
    stats: list[RoundStats] = []
    digests = []
    start = time.perf_counter()
    try:
        a = np.zeros(n, dtype=np.int64)
        strategy.initialize(cs, a)

        def init_chunk(lo, hi):
            D = np.empty((hi - lo, k))
            distance_rows(X, xsq, cs.centroids, cs.sq_norms, lo, hi, D)
            a[lo:hi] = np.argmin(D, axis=1)
            strategy.init_rows(lo, hi, D)

        pool.run(init_chunk)
        stats.append(RoundStats(round=0, dist_calcs_init=n * k, changes=n))
        digests.append(_digest(a))
        if record_trajectory:
            traj_a.append(a.copy())
            traj_c.append(cs.centroids.copy())

        sums, counts = cluster_sums(data, a, k)
        new_cs = centroids_from_sums(cs, sums, counts)
        stats[0].dist_calcs_centroid += k
        cs = new_cs

        rounds = 0
        done = False
        for t in range(1, config.max_rounds + 1):
            rs = RoundStats(round=t)
            rs.dist_calcs_centroid += strategy.begin_round(t, cs)
            if strategy.has_prepare:
                pool.run(strategy.prepare_chunk)
                strategy.end_prepare()
            a_prev = a.copy()
            if observer is not None:
                observer("refreshed", RoundView(t, strategy, cs, a, a_prev, data))
            cnt = pool.run(strategy.assign_chunk, with_counters=True)
            rs.dist_calcs_assign = int(cnt[K.ASSIGN])
            rs.bound_tightenings = int(cnt[K.TIGHTEN])
            rs.lockstep_sn_extra = int(cnt[K.SN_EXTRA])
            rs.lockstep_violations = int(cnt[K.VIOLATION])
            changed = np.flatnonzero(a != a_prev)
            rs.changes = int(changed.size)
            if observer is not None:
                observer("assigned", RoundView(t, strategy, cs, a, a_prev, data))
            stats.append(rs)
            digests.append(_digest(a))
            if record_trajectory:
                traj_a.append(a.copy())
                traj_c.append(cs.centroids.copy())
            rounds = t
            if converged(rs.changes):
                done = True
                break
            if t % FULL_RECOMPUTE_EVERY == 0:
                sums, counts = cluster_sums(data, a, k)
                cs = centroids_from_sums(cs, sums, counts)
            else:
                cs = update_step(data, a, changed, cs, sums, counts, a_prev)
            rs.dist_calcs_centroid += k
    finally:
        pool.close()
    wall_ms = 1000.0 * (time.perf_counter() - start)

    trajectory = None
    if record_trajectory:
        from .verify import Trajectory

        trajectory = Trajectory(traj_a, traj_c, cs.centroids.copy(), done)
    return RunResult(
        algorithm=config.algorithm,
        final_centroids=cs.centroids.copy(),
        final_assignments=a.copy(),
        rounds_executed=rounds,
        per_round_stats=stats,
        converged=done,
        wall_ms=wall_ms,
        digests=digests,
        trajectory=trajectory,
    )
