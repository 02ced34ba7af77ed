"""Brute-force Lloyd reference, trajectory comparison and runtime bound audits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import CentroidState, DataMatrix, distance_rows, init_centroids
from .engine import RunConfig, RoundView, run
from .strategies import ns_variant

TOL = 1e-9
FULL_AUDIT_MAX_N = 500


@dataclass
class Trajectory:
    """Per-round assignments and the centroids they were computed against.

    Entry 0 is the initial full pass; the run stops after the first round
    without changes or after ``max_rounds`` further rounds.
    """

    assignments: list
    centroids: list
    final_centroids: np.ndarray
    converged: bool

    @property
    def n_rounds(self) -> int:
        return len(self.assignments)


def all_distances(data: DataMatrix, C: np.ndarray) -> np.ndarray:
    C = np.ascontiguousarray(C, dtype=np.float64)
    csq = np.einsum("ij,ij->i", C, C)
    D = np.empty((data.n_samples, C.shape[0]))
    distance_rows(data.values, data.sq_norms, C, csq, 0, data.n_samples, D)
    return D


def objective(data: DataMatrix, C: np.ndarray, a: np.ndarray) -> float:
    D = all_distances(data, C)
    return float((D[np.arange(data.n_samples), a] ** 2).sum())


def lloyd_reference(data: DataMatrix, init: CentroidState, max_rounds: int = 1000) -> Trajectory:
    """Unaccelerated Lloyd: full scan, argmin (lowest index on ties), fresh means."""
    C = init.centroids.copy()
    k = C.shape[0]
    assignments, centroids = [], []
    a = None
    done = False
    for t in range(max_rounds + 1):
        new = np.argmin(all_distances(data, C), axis=1)
        assignments.append(new)
        centroids.append(C.copy())
        if a is not None and np.array_equal(new, a):
            done = True
            break
        a = new
        sums = np.zeros_like(C)
        np.add.at(sums, a, data.values)
        counts = np.bincount(a, minlength=k)
        live = counts > 0
        C = C.copy()
        C[live] = sums[live] / counts[live, None]
    return Trajectory(assignments, centroids, C, done)


@dataclass
class TrajectoryReport:
    ok: bool
    message: str = ""
    round: int | None = None
    sample: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def assert_trajectory_equal(a: Trajectory, b: Trajectory, rtol: float = TOL) -> TrajectoryReport:
    """Compare two trajectories; the report names the first divergence."""
    for t in range(min(a.n_rounds, b.n_rounds)):
        diff = np.flatnonzero(np.asarray(a.assignments[t]) != np.asarray(b.assignments[t]))
        if diff.size:
            i = int(diff[0])
            return TrajectoryReport(
                False,
                f"round {t}: sample {i} assigned {a.assignments[t][i]} vs {b.assignments[t][i]}"
                f" ({diff.size} samples differ)",
                round=t,
                sample=i,
            )
        ca, cb = np.asarray(a.centroids[t]), np.asarray(b.centroids[t])
        scale = np.maximum(np.maximum(np.abs(ca), np.abs(cb)), 1.0)
        bad = np.abs(ca - cb) > rtol * scale
        if bad.any():
            j = int(np.argwhere(bad)[0][0])
            return TrajectoryReport(False, f"round {t}: centroid {j} differs beyond {rtol}", round=t)
    if a.n_rounds != b.n_rounds:
        return TrajectoryReport(False, f"round counts differ: {a.n_rounds} vs {b.n_rounds}",
                                round=min(a.n_rounds, b.n_rounds))
    return TrajectoryReport(True, "trajectories equal")


def run_trajectory(algorithm: str, data: DataMatrix, k: int, seed: int, max_rounds: int = 1000,
                   n_workers: int = 1, **kw):
    cfg = RunConfig(algorithm=algorithm, k=k, seed=seed, max_rounds=max_rounds, n_workers=n_workers)
    return run(cfg, data, record_trajectory=True, **kw)


# ---------------------------------------------------------------------------
# bound audit


@dataclass
class Violation:
    round: int
    event: str
    kind: str
    sample: int
    centroid: int
    bound: float
    true: float

    def __str__(self) -> str:
        return (f"round {self.round} {self.event}: {self.kind} sample {self.sample} "
                f"centroid/group {self.centroid}: bound {self.bound!r} vs true {self.true!r}")


@dataclass
class BoundAuditor:
    """Observer that checks every strategy bound against recomputed distances.

    With ``full`` every sample is checked; otherwise a seeded 1% of samples
    per round (at least one). ``fault`` may mutate strategy state before the
    checks, for fault-injection tests.
    """

    full: bool = True
    seed: int = 0
    fault: Callable | None = None
    violations: list = field(default_factory=list)
    checks: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def _rows(self, n: int) -> np.ndarray:
        if self.full:
            return np.arange(n)
        m = max(1, n // 100)
        return np.sort(self._rng.choice(n, size=m, replace=False))

    def __call__(self, event: str, view: RoundView) -> None:
        if self.fault is not None:
            self.fault(event, view)
        rows = self._rows(view.data.n_samples)
        D = all_distances(view.data, view.centroids.centroids)[rows]
        a = view.assignments[rows]
        r = np.arange(rows.size)
        bounds = view.strategy.effective_bounds()
        t = view.round
        k = D.shape[1]
        d_a = D[r, a]
        others = D.copy()
        others[r, a] = np.inf

        def record(kind, mask, bound_vals, true_vals, cols):
            for idx in np.flatnonzero(mask):
                self.violations.append(Violation(t, event, kind, int(rows[idx]), int(cols[idx]),
                                                 float(bound_vals[idx]), float(true_vals[idx])))

        if "upper" in bounds:
            u = np.asarray(bounds["upper"])[rows]
            record("upper", u < d_a - TOL, u, d_a, a)
            self.checks += rows.size
        if "lower" in bounds:
            L = np.asarray(bounds["lower"])[rows]
            bad = L > D + TOL
            for idx, j in np.argwhere(bad):
                self.violations.append(Violation(t, event, "lower", int(rows[idx]), int(j),
                                                 float(L[idx, j]), float(D[idx, j])))
            self.checks += L.size
        if "lower_single" in bounds and k > 1:
            l = np.asarray(bounds["lower_single"])[rows]
            second = others.min(axis=1)
            record("lower_single", l > second + TOL, l, second, others.argmin(axis=1))
            self.checks += rows.size
        if "lower_group" in bounds:
            groups = bounds["groups"]
            lg = np.asarray(bounds["lower_group"])[rows]
            for f, mem in enumerate(groups.members):
                true = others[:, mem].min(axis=1)
                bad = lg[:, f] > true + TOL
                record("lower_group", bad, lg[:, f], true, np.full(rows.size, f))
            self.checks += lg.size
        if event == "assigned":
            best = np.argmin(D, axis=1)
            record("assignment", best != a, a.astype(float), best.astype(float), a)
            self.checks += rows.size


def audit_bounds(algorithm: str, data: DataMatrix, k: int, seed: int, max_rounds: int = 1000,
                 full: bool | None = None, fault: Callable | None = None,
                 group_count: int | None = None) -> list:
    """Run ``algorithm`` with per-round auditing and return the violations found."""
    if full is None:
        full = data.n_samples <= FULL_AUDIT_MAX_N
    auditor = BoundAuditor(full=full, seed=seed, fault=fault)
    cfg = RunConfig(algorithm=algorithm, k=k, seed=seed, max_rounds=max_rounds,
                    group_count_override=group_count)
    run(cfg, data, observer=auditor)
    return auditor.violations


# ---------------------------------------------------------------------------
# sn / ns lock-step comparison


@dataclass
class LockstepReport:
    base: str
    variant: str
    sn_assign: list
    ns_assign: list
    violations: int
    sn_would_compute: int
    trajectory: TrajectoryReport
    violations_per_round: list = field(default_factory=list)
    sn_extra_per_round: list = field(default_factory=list)

    @property
    def q_a(self) -> list:
        """Per-round ratio of ns to sn assignment distance calculations (1.0 when both are 0)."""
        return [n / s if s else (1.0 if n == 0 else float("inf"))
                for s, n in zip(self.sn_assign, self.ns_assign)]

    @property
    def q_a_lockstep(self) -> list:
        """Per-round ns count over the shadow sn count on the ns run itself.

        Every ns skip the shadow sn bound could not make costs sn at least one
        calculation, so the shadow count is at least ns + extra when no
        violation occurred.
        """
        return [n / (n + e) if n + e else 1.0 for n, e in zip(self.ns_assign, self.sn_extra_per_round)]


def lockstep_pair(base: str, data: DataMatrix, k: int, seed: int, max_rounds: int = 1000) -> LockstepReport:
    """Run an sn strategy and its ns counterpart from the same start.

    The ns run carries shadow sn bounds built from the same stored records,
    counting any use where the ns bound is looser (``violations``) and any
    skip the sn bound could not have made (``sn_would_compute``).
    """
    variant = ns_variant(base)
    sn = run_trajectory(base, data, k, seed, max_rounds)
    ns = run_trajectory(variant, data, k, seed, max_rounds, lockstep=True)
    return LockstepReport(
        base=base,
        variant=variant,
        sn_assign=[r.dist_calcs_assign for r in sn.per_round_stats],
        ns_assign=[r.dist_calcs_assign for r in ns.per_round_stats],
        violations=sum(r.lockstep_violations for r in ns.per_round_stats),
        sn_would_compute=sum(r.lockstep_sn_extra for r in ns.per_round_stats),
        trajectory=assert_trajectory_equal(sn.trajectory, ns.trajectory),
        violations_per_round=[r.lockstep_violations for r in ns.per_round_stats],
        sn_extra_per_round=[r.lockstep_sn_extra for r in ns.per_round_stats],
    )


def reference_for(data: DataMatrix, k: int, seed: int, max_rounds: int = 1000) -> Trajectory:
    return lloyd_reference(data, init_centroids(data, k, seed), max_rounds)
