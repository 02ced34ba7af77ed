"""Per-chunk numba kernels for the sn-bounded assignment strategies.

Every kernel processes samples ``lo <= i < hi`` and touches only their rows of
the bound arrays, so chunks can run on separate threads. ``cnt`` is the
chunk's counter row: ``[assign distance calcs, bound tightenings, ...]``.
Ties between equidistant centroids always go to the lower index.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import kernel_dist

ASSIGN = 0
TIGHTEN = 1
SN_EXTRA = 2
VIOLATION = 3
N_COUNTERS = 4

HAM, ANN, EXP = 0, 1, 2


@njit(inline="always")
def better(d, j, d1, j1):
    return d < d1 or (d == d1 and j < j1)


@njit(nogil=True, cache=True)
def full_scan(X, xsq, C, csq, a, lo, hi, cnt):
    k = C.shape[0]
    for i in range(lo, hi):
        best = kernel_dist(X, i, xsq, C, 0, csq)
        bj = 0
        for j in range(1, k):
            dj = kernel_dist(X, i, xsq, C, j, csq)
            if dj < best:
                best = dj
                bj = j
        a[i] = bj
    cnt[ASSIGN] += (hi - lo) * k


# ---------------------------------------------------------------------------
# Elkan family: one lower bound per (sample, centroid)


@njit(nogil=True, cache=True)
def elkan_refresh(u, l, a, p, lo, hi):
    k = l.shape[1]
    for i in range(lo, hi):
        u[i] += p[a[i]]
        for j in range(k):
            l[i, j] -= p[j]


@njit(nogil=True, cache=True)
def elkan_assign(X, xsq, C, csq, a, u, l, cc, s, use_cc, lo, hi, cnt):
    k = C.shape[0]
    for i in range(lo, hi):
        ai = a[i]
        ui = u[i]
        if use_cc and 0.5 * s[ai] > ui:
            continue
        tight = False
        for j in range(k):
            if j == ai:
                continue
            bound = l[i, j]
            if use_cc:
                h = 0.5 * cc[ai, j]
                if h > bound:
                    bound = h
            if ui < bound:
                continue
            if not tight:
                ui = kernel_dist(X, i, xsq, C, ai, csq)
                l[i, ai] = ui
                tight = True
                cnt[ASSIGN] += 1
                cnt[TIGHTEN] += 1
                if ui < bound:
                    continue
            dj = kernel_dist(X, i, xsq, C, j, csq)
            l[i, j] = dj
            cnt[ASSIGN] += 1
            cnt[TIGHTEN] += 1
            if better(dj, j, ui, ai):
                ai = j
                ui = dj
        a[i] = ai
        u[i] = ui


# ---------------------------------------------------------------------------
# Hamerly family: a single lower bound on all non-assigned centroids


@njit(nogil=True, cache=True)
def hamerly_refresh(u, l, a, p, top1, arg1, top2, lo, hi):
    for i in range(lo, hi):
        ai = a[i]
        u[i] += p[ai]
        if ai == arg1:
            l[i] -= top2
        else:
            l[i] -= top1


@njit(nogil=True, cache=True)
def hamerly_assign(X, xsq, C, csq, a, u, l, b, s, mode,
                   snorms, sorder, order, radii, ends, lo, hi, cnt):
    k = C.shape[0]
    n_ends = ends.shape[0]
    for i in range(lo, hi):
        ai = a[i]
        m = 0.5 * s[ai]
        if l[i] > m:
            m = l[i]
        if m > u[i]:
            continue
        ui = kernel_dist(X, i, xsq, C, ai, csq)
        cnt[ASSIGN] += 1
        cnt[TIGHTEN] += 1
        if m > ui:
            u[i] = ui
            continue
        d1 = ui
        j1 = ai
        d2 = np.inf
        j2 = -1
        if mode == HAM:
            for j in range(k):
                if j == ai:
                    continue
                dj = kernel_dist(X, i, xsq, C, j, csq)
                if better(dj, j, d1, j1):
                    d2 = d1
                    j2 = j1
                    d1 = dj
                    j1 = j
                elif better(dj, j, d2, j2):
                    d2 = dj
                    j2 = j
            cnt[ASSIGN] += k - 1
        elif mode == ANN:
            bi = b[i]
            db = kernel_dist(X, i, xsq, C, bi, csq)
            cnt[ASSIGN] += 1
            if better(db, bi, d1, j1):
                d2 = d1
                j2 = j1
                d1 = db
                j1 = bi
            else:
                d2 = db
                j2 = bi
            R = ui if ui > db else db
            xn = math.sqrt(xsq[i])
            start = np.searchsorted(snorms, xn - R, side="left")
            stop = np.searchsorted(snorms, xn + R, side="right")
            for pos in range(start, stop):
                j = sorder[pos]
                if j == ai or j == bi:
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
            b[i] = j2
        else:
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
        u[i] = d1
        l[i] = d2


# ---------------------------------------------------------------------------
# Yinyang family: one lower bound per group of centroids


@njit(nogil=True, cache=True)
def yinyang_refresh(u, lg, a, p, q, lo, hi):
    G = lg.shape[1]
    for i in range(lo, hi):
        u[i] += p[a[i]]
        for f in range(G):
            lg[i, f] -= q[f]


@njit(inline="always")
def yinyang_local_skip(lg_refreshed, q_f, p_j, r2):
    """True when centroid j of a failing group cannot be n1 or n2.

    ``lg_refreshed + q_f`` is the group bound before this round's refresh; it
    bounds each member's previous distance, so minus ``p_j`` it bounds j now.
    """
    return lg_refreshed + q_f - p_j > r2


@njit(nogil=True, cache=True)
def yinyang_assign(X, xsq, C, csq, a, u, lg, group_of, gstart, gmem, q, p, local, lo, hi, cnt):
    G = lg.shape[1]
    for i in range(lo, hi):
        ai = a[i]
        ui = u[i]
        minl = np.inf
        for f in range(G):
            if lg[i, f] < minl:
                minl = lg[i, f]
        if minl > ui:
            continue
        a0 = ai
        tight = False
        for f in range(G):
            lf = lg[i, f]
            if lf > ui:
                continue
            if not tight:
                ui = kernel_dist(X, i, xsq, C, ai, csq)
                tight = True
                cnt[ASSIGN] += 1
                cnt[TIGHTEN] += 1
                if lf > ui:
                    continue
            d1 = np.inf
            j1 = -1
            d2 = np.inf
            j2 = -1
            for m in range(gstart[f], gstart[f + 1]):
                j = gmem[m]
                if j == ai:
                    continue
                if local and j != a0 and yinyang_local_skip(lf, q[f], p[j], d2):
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
            if j1 >= 0 and better(d1, j1, ui, ai):
                gold = group_of[ai]
                old = ui
                lg[i, f] = d2
                ai = j1
                ui = d1
                if old < lg[i, gold]:
                    lg[i, gold] = old
            else:
                lg[i, f] = d1
        a[i] = ai
        u[i] = ui


# ---------------------------------------------------------------------------
# initialisation helpers (vectorised over a chunk's full distance rows)


def top_two(D: np.ndarray):
    """Nearest index/distance and second-nearest index/distance per row, lower index on ties."""
    rows = np.arange(D.shape[0])
    n1 = np.argmin(D, axis=1)
    d1 = D[rows, n1]
    if D.shape[1] < 2:
        return n1, d1, n1.copy(), np.full(D.shape[0], np.inf)
    D2 = D.copy()
    D2[rows, n1] = np.inf
    n2 = np.argmin(D2, axis=1)
    return n1, d1, n2, D2[rows, n2]


def group_minima(D: np.ndarray, n1: np.ndarray, members) -> np.ndarray:
    """min over each group of distances, excluding the assigned centroid."""
    rows = np.arange(D.shape[0])
    Dm = D.copy()
    Dm[rows, n1] = np.inf
    out = np.empty((D.shape[0], len(members)))
    for f, mem in enumerate(members):
        out[:, f] = Dm[:, mem].min(axis=1)
    return out
