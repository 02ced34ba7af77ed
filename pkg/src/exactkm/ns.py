"""ns ("norm of sum") bounding.

Bounds are stored as the distance measured when they were last made tight,
together with the round of that measurement. At use time they are drifted by
the net displacement of the centroid since that round, ``P(j, t)``, instead
of the running sum of per-round displacements.

Rounds are addressed by *slot*: slot 0 is the round of the last reset, the
newest slot is the current round. At most ``reset_period`` rounds are stored.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .core import direct_dist, kernel_dist
from .kernels import ASSIGN, SN_EXTRA, TIGHTEN, VIOLATION, better

EPS = 1e-9


def reset_period(n_samples: int, k: int, d: int) -> int:
    return max(1, n_samples // min(k, d))


def ns_test_selk(u0: float, l0: float, Pa: float, Pj: float) -> bool:
    """True when centroid j can be skipped: u0 + P(a, T) < l0 - P(j, T')."""
    return u0 + Pa < l0 - Pj


def group_delta(path: np.ndarray, mode: str) -> float:
    """Drift of a group lower bound over a window of rounds.

    ``path`` has shape (rounds + 1, members, d): the group's centroids from the
    round the bound was tight up to now.
    """
    path = np.asarray(path, dtype=np.float64)
    if path.shape[0] < 1:
        raise ValueError("empty centroid path")
    if path.shape[0] == 1:
        return 0.0
    if mode not in ("SMN", "MSN", "MNS"):
        raise ValueError(f"unknown group delta mode {mode!r}")
    steps = np.sqrt(((path[1:] - path[:-1]) ** 2).sum(axis=2))  # (rounds, members)
    # left-to-right sums in both cases; rounding is monotone, so SMN >= MSN holds in floats too
    if mode == "SMN":
        return float(np.cumsum(steps.max(axis=1))[-1])
    sums = np.cumsum(steps, axis=0)[-1]
    if mode == "MSN":
        return float(sums.max())
    # the net move can round a few ulps past the path length; the path length is also a valid bound
    net = np.sqrt(((path[-1] - path[0]) ** 2).sum(axis=1))
    return float(np.minimum(net, sums).max())


@njit(nogil=True, cache=True)
def _refresh_P(C, store, n_slots, P):
    k = C.shape[0]
    for s in range(n_slots):
        for j in range(k):
            P[j, s] = direct_dist(C, j, store[s], j)


class NsHistory:
    """Stored past centroids C(j, t) and net displacements P(j, t) since the last reset.

    ``sn_tables`` maps a name to a row count; each such table holds, per slot,
    the accumulated per-round drift an sn-bounded strategy would have applied
    since that slot. They exist only for lock-step instrumentation.
    """

    def __init__(self, k: int, d: int, period: int, sn_tables: dict[str, int] | None = None):
        self.k = k
        self.d = d
        self.period = period
        self.base_round = 0
        self.n_slots = 0
        self._cap = 0
        self.store = np.zeros((0, k, d))
        self.P = np.zeros((k, 0))
        self.sn = {name: np.zeros((rows, 0)) for name, rows in (sn_tables or {}).items()}
        self._grow(4)

    def _grow(self, cap: int) -> None:
        n = self.n_slots
        store = np.zeros((cap, self.k, self.d))
        store[:n] = self.store[:n]
        self.store = store
        self.P = _widen(self.P, cap, n)
        self.sn = {name: _widen(tab, cap, n) for name, tab in self.sn.items()}
        self._cap = cap

    @property
    def current_slot(self) -> int:
        return self.n_slots - 1

    def rounds(self) -> list[int]:
        return list(range(self.base_round, self.base_round + self.n_slots))

    def slot_of(self, t: int) -> int:
        s = t - self.base_round
        if not 0 <= s < self.n_slots:
            raise KeyError(f"round {t} is not stored (stored: {self.rounds()})")
        return s

    def record_round(self, C: np.ndarray, t: int, sn_increments: dict | None = None,
                     store: bool = True) -> int:
        """Refresh P against the round-t centroids C, then store C under t.

        With ``store=False`` (a reset round) C is not appended; the caller
        folds its bounds and then calls :meth:`restart`. Returns the number
        of centroid distance calculations spent on P.
        """
        C = np.ascontiguousarray(C, dtype=np.float64)
        _refresh_P(C, self.store, self.n_slots, self.P)
        calcs = self.k * self.n_slots
        if sn_increments:
            for name, inc in sn_increments.items():
                self.sn[name][:, : self.n_slots] += np.asarray(inc)[:, None]
        if self.n_slots and t != self.base_round + self.n_slots:
            raise ValueError(f"rounds must be recorded consecutively, got {t}")
        if not store:
            return calcs
        if self.n_slots == 0:
            self.base_round = t
        if self.n_slots == self._cap:
            self._grow(2 * self._cap)
        s = self.n_slots
        self.store[s] = C
        self.P[:, s] = 0.0
        for tab in self.sn.values():
            tab[:, s] = 0.0
        self.n_slots += 1
        return calcs

    def is_reset_round(self, t: int) -> bool:
        return t > 0 and t % self.period == 0

    def restart(self, C: np.ndarray, t: int) -> None:
        """Drop every stored round and keep only C under t, as slot 0."""
        self.store[0] = C
        self.P[:, 0] = 0.0
        for tab in self.sn.values():
            tab[:, 0] = 0.0
        self.base_round = t
        self.n_slots = 1

    def displacement(self, j: int, t: int) -> float:
        return float(self.P[j, self.slot_of(t)])

    def group_delta(self, members, t0: int, mode: str = "MNS") -> float:
        s0 = self.slot_of(t0)
        path = self.store[s0 : self.n_slots][:, np.asarray(members, dtype=np.int64), :]
        return group_delta(path, mode)


def _widen(tab: np.ndarray, cap: int, n: int) -> np.ndarray:
    out = np.zeros((tab.shape[0], cap))
    out[:, :n] = tab[:, :n]
    return out


def slot_top_two(P: np.ndarray, n_slots: int):
    """Per slot: largest P over centroids, its index, and the second largest."""
    k = P.shape[0]
    Pv = P[:, :n_slots]
    arg1 = np.argmax(Pv, axis=0)
    top1 = Pv[arg1, np.arange(n_slots)]
    if k < 2:
        return top1, arg1, np.zeros(n_slots)
    masked = Pv.copy()
    masked[arg1, np.arange(n_slots)] = -np.inf
    return top1, arg1, masked.max(axis=0)


# ---------------------------------------------------------------------------
# kernels


@njit(nogil=True, cache=True)
def elkan_ns_assign(X, xsq, C, csq, a, l0, T, P, cur, cc, s, use_cc, shadow, CP, lo, hi, cnt):
    k = C.shape[0]
    for i in range(lo, hi):
        ai = a[i]
        ta = T[i, ai]
        ub = l0[i, ai] + P[ai, ta]
        ub_sn = ub
        if shadow:
            ub_sn = l0[i, ai] + CP[ai, ta]
            if ub > ub_sn + EPS:
                cnt[VIOLATION] += 1
        if use_cc:
            h = 0.5 * s[ai]
            if h > ub:
                if shadow and not h > ub_sn:
                    cnt[SN_EXTRA] += 1
                continue
        tight = False
        for j in range(k):
            if j == ai:
                continue
            tj = T[i, j]
            lb = l0[i, j] - P[j, tj]
            lb_sn = lb
            if shadow:
                lb_sn = l0[i, j] - CP[j, tj]
                if lb < lb_sn - EPS:
                    cnt[VIOLATION] += 1
            if use_cc:
                h = 0.5 * cc[ai, j]
                if h > lb:
                    lb = h
                if h > lb_sn:
                    lb_sn = h
            if ub < lb:
                if shadow and not ub_sn < lb_sn:
                    cnt[SN_EXTRA] += 1
                continue
            if not tight:
                ub = kernel_dist(X, i, xsq, C, ai, csq)
                ub_sn = ub
                l0[i, ai] = ub
                T[i, ai] = cur
                tight = True
                cnt[ASSIGN] += 1
                cnt[TIGHTEN] += 1
                if ub < lb:
                    if shadow and not ub < lb_sn:
                        cnt[SN_EXTRA] += 1
                    continue
            dj = kernel_dist(X, i, xsq, C, j, csq)
            l0[i, j] = dj
            T[i, j] = cur
            cnt[ASSIGN] += 1
            cnt[TIGHTEN] += 1
            if better(dj, j, ub, ai):
                ai = j
                ub = dj
                ub_sn = dj
        a[i] = ai


@njit(nogil=True, cache=True)
def elkan_ns_reset(a, l0, T, P, lo, hi):
    k = l0.shape[1]
    for i in range(lo, hi):
        ai = a[i]
        for j in range(k):
            if j == ai:
                l0[i, j] += P[j, T[i, j]]
            else:
                l0[i, j] -= P[j, T[i, j]]
            T[i, j] = 0


@njit(nogil=True, cache=True)
def yinyang_ns_assign(X, xsq, C, csq, a, u0, Tu, l0, Tl, P, Q, cur, group_of, gstart, gmem,
                      shadow, CP, CQ, lo, hi, cnt):
    G = l0.shape[1]
    for i in range(lo, hi):
        ai = a[i]
        ub = u0[i] + P[ai, Tu[i]]
        ub_sn = ub
        if shadow:
            ub_sn = u0[i] + CP[ai, Tu[i]]
            if ub > ub_sn + EPS:
                cnt[VIOLATION] += 1
        minl = np.inf
        minl_sn = np.inf
        for f in range(G):
            e = l0[i, f] - Q[f, Tl[i, f]]
            if e < minl:
                minl = e
            if shadow:
                e_sn = l0[i, f] - CQ[f, Tl[i, f]]
                if e < e_sn - EPS:
                    cnt[VIOLATION] += 1
                if e_sn < minl_sn:
                    minl_sn = e_sn
        if minl > ub:
            if shadow and not minl_sn > ub_sn:
                cnt[SN_EXTRA] += 1
            continue
        tight = False
        for f in range(G):
            e = l0[i, f] - Q[f, Tl[i, f]]
            e_sn = e
            if shadow:
                e_sn = l0[i, f] - CQ[f, Tl[i, f]]
            if e > ub:
                if shadow and not e_sn > ub_sn:
                    cnt[SN_EXTRA] += 1
                continue
            if not tight:
                ub = kernel_dist(X, i, xsq, C, ai, csq)
                ub_sn = ub
                u0[i] = ub
                Tu[i] = cur
                tight = True
                cnt[ASSIGN] += 1
                cnt[TIGHTEN] += 1
                if e > ub:
                    if shadow and not e_sn > ub:
                        cnt[SN_EXTRA] += 1
                    continue
            d1 = np.inf
            j1 = -1
            d2 = np.inf
            j2 = -1
            for m in range(gstart[f], gstart[f + 1]):
                j = gmem[m]
                if j == ai:
                    continue
                dj = kernel_dist(X, i, xsq, C, j, csq)
                cnt[ASSIGN] += 1
                if better(dj, j, d1, j1):
                    d2 = d1
                    j2 = j1
                    d1 = dj
                    j1 = j
                elif better(dj, j, d2, j2):
                    d2 = dj
                    j2 = j
            if j1 >= 0 and better(d1, j1, ub, ai):
                gold = group_of[ai]
                old = ub
                l0[i, f] = d2
                Tl[i, f] = cur
                ai = j1
                ub = d1
                ub_sn = d1
                u0[i] = d1
                Tu[i] = cur
                eg = l0[i, gold] - Q[gold, Tl[i, gold]]
                if old < eg:
                    eg = old
                l0[i, gold] = eg
                Tl[i, gold] = cur
            else:
                l0[i, f] = d1
                Tl[i, f] = cur
        a[i] = ai


@njit(nogil=True, cache=True)
def yinyang_ns_reset(a, u0, Tu, l0, Tl, P, Q, lo, hi):
    G = l0.shape[1]
    for i in range(lo, hi):
        u0[i] += P[a[i], Tu[i]]
        Tu[i] = 0
        for f in range(G):
            l0[i, f] -= Q[f, Tl[i, f]]
            Tl[i, f] = 0


@njit(nogil=True, cache=True)
def exponion_ns_assign(X, xsq, C, csq, a, u0, Tu, l0, Tl, P, top1, arg1, top2, cur,
                       s, order, radii, ends, shadow, CP, CPX, lo, hi, cnt):
    n_ends = ends.shape[0]
    for i in range(lo, hi):
        ai = a[i]
        ub = u0[i] + P[ai, Tu[i]]
        tl = Tl[i]
        lb = l0[i] - (top2[tl] if arg1[tl] == ai else top1[tl])
        h = 0.5 * s[ai]
        m = lb if lb > h else h
        m_sn = m
        ub_sn = ub
        if shadow:
            ub_sn = u0[i] + CP[ai, Tu[i]]
            lb_sn = l0[i] - CPX[ai, tl]
            if ub > ub_sn + EPS or lb < lb_sn - EPS:
                cnt[VIOLATION] += 1
            m_sn = lb_sn if lb_sn > h else h
        if m > ub:
            if shadow and not m_sn > ub_sn:
                cnt[SN_EXTRA] += 1
            continue
        ui = kernel_dist(X, i, xsq, C, ai, csq)
        cnt[ASSIGN] += 1
        cnt[TIGHTEN] += 1
        u0[i] = ui
        Tu[i] = cur
        if m > ui:
            if shadow and not m_sn > ui:
                cnt[SN_EXTRA] += 1
            continue
        d1 = ui
        j1 = ai
        d2 = np.inf
        j2 = -1
        R = 2.0 * ui + s[ai]
        f = np.searchsorted(radii[ai], R, side="left")
        ncand = ends[n_ends - 1] if f >= n_ends else ends[f]
        for pos in range(ncand):
            j = order[ai, pos]
            dj = kernel_dist(X, i, xsq, C, j, csq)
            if better(dj, j, d1, j1):
                d2 = d1
                j2 = j1
                d1 = dj
                j1 = j
            elif better(dj, j, d2, j2):
                d2 = dj
                j2 = j
        cnt[ASSIGN] += ncand
        a[i] = j1
        u0[i] = d1
        Tu[i] = cur
        l0[i] = d2
        Tl[i] = cur


@njit(nogil=True, cache=True)
def exponion_ns_reset(a, u0, Tu, l0, Tl, P, top1, arg1, top2, lo, hi):
    for i in range(lo, hi):
        ai = a[i]
        u0[i] += P[ai, Tu[i]]
        tl = Tl[i]
        l0[i] -= top2[tl] if arg1[tl] == ai else top1[tl]
        Tu[i] = 0
        Tl[i] = 0
