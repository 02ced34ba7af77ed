"""Assignment strategies.

A strategy owns the per-sample bound state of one algorithm. The engine
drives it through a fixed round protocol:

``initialize`` -> per round: ``begin_round`` (serial, builds shared
structures) -> ``prepare_chunk`` over chunks -> ``end_prepare`` ->
``assign_chunk`` over chunks.

``prepare_chunk`` and ``assign_chunk`` touch only rows ``lo:hi`` of the
per-sample state and read shared state that is frozen for the round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from . import ns as NS
from .annuli import build_annuli, sorted_centroid_norms
from .core import CentroidState, DataMatrix, centroid_separation, pairwise_centroid_distances

_DUMMY_F1 = np.zeros(1)
_DUMMY_F2 = np.zeros((1, 1))
_DUMMY_I1 = np.zeros(1, dtype=np.int64)
_DUMMY_I2 = np.zeros((1, 1), dtype=np.int64)


def top_two_displacements(p: np.ndarray):
    """(largest, its index, second largest) of the per-centroid displacements."""
    arg1 = int(np.argmax(p))
    top1 = float(p[arg1])
    if p.shape[0] < 2:
        return top1, arg1, 0.0
    rest = np.delete(p, arg1)
    return top1, arg1, float(rest.max())


def max_other_displacement(p: np.ndarray) -> np.ndarray:
    """For every j, max over j' != j of p(j')."""
    top1, arg1, top2 = top_two_displacements(p)
    out = np.full(p.shape[0], top1)
    out[arg1] = top2
    return out


# ---------------------------------------------------------------------------
# centroid groups for the Yinyang family


@dataclass
class GroupState:
    members: list
    group_of: np.ndarray
    gstart: np.ndarray
    gmem: np.ndarray

    @property
    def group_count(self) -> int:
        return len(self.members)

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "GroupState":
        members = [np.flatnonzero(labels == g) for g in np.unique(labels)]
        group_of = np.empty(labels.shape[0], dtype=np.int64)
        for f, mem in enumerate(members):
            group_of[mem] = f
        sizes = np.array([len(m) for m in members], dtype=np.int64)
        gstart = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        gmem = np.concatenate(members).astype(np.int64)
        return cls(members, group_of, gstart, gmem)

    def group_max(self, values: np.ndarray) -> np.ndarray:
        """Per group, the max of ``values`` (rows = centroids) over its members."""
        return np.stack([values[m].max(axis=0) for m in self.members])


def default_group_count(k: int) -> int:
    return max(1, k // 10)


def build_groups(centroids: np.ndarray, n_groups: int, seed: int, rounds: int = 5) -> GroupState:
    """Group centroids by a short standard k-means run over the centroid vectors.

    Empty groups are dropped, so the result may have fewer than ``n_groups``.
    """
    k = centroids.shape[0]
    n_groups = max(1, min(n_groups, k))
    rng = np.random.default_rng(seed)
    centres = centroids[rng.choice(k, size=n_groups, replace=False)].copy()
    labels = np.zeros(k, dtype=np.int64)
    for _ in range(rounds):
        d2 = ((centroids[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        for g in range(n_groups):
            mask = labels == g
            if mask.any():
                centres[g] = centroids[mask].mean(axis=0)
    return GroupState.from_labels(labels)


# ---------------------------------------------------------------------------


class Strategy:
    name = ""
    bound_kind = None  # "elkan", "hamerly", "group" or None

    def __init__(self, data: DataMatrix, k: int, seed: int, group_count=None, lockstep=False):
        self.data = data
        self.X = data.values
        self.xsq = data.sq_norms
        self.k = k
        self.seed = seed
        self.group_count = group_count
        self.lockstep = lockstep
        self.a = None
        self.cs = None

    # -- round 0
    def initialize(self, cs: CentroidState, a: np.ndarray) -> None:
        self.cs = cs
        self.a = a

    def init_rows(self, lo: int, hi: int, D: np.ndarray) -> None:
        pass

    # -- rounds >= 1
    def begin_round(self, t: int, cs: CentroidState) -> int:
        self.cs = cs
        return 0

    has_prepare = False

    def prepare_chunk(self, lo: int, hi: int) -> None:
        pass

    def end_prepare(self) -> None:
        pass

    def assign_chunk(self, lo: int, hi: int, cnt: np.ndarray) -> None:
        raise NotImplementedError

    # -- inspection
    def effective_bounds(self) -> dict:
        """Current bounds in the form the auditor checks against true distances."""
        return {}


class Standard(Strategy):
    name = "sta"

    def assign_chunk(self, lo, hi, cnt):
        cs = self.cs
        K.full_scan(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, lo, hi, cnt)


class Elkan(Strategy):
    """selk (``use_cc=False``) and elk (``use_cc=True``)."""

    bound_kind = "elkan"
    has_prepare = True

    def __init__(self, *args, use_cc=False, **kw):
        super().__init__(*args, **kw)
        self.use_cc = use_cc
        self.name = "elk" if use_cc else "selk"

    def initialize(self, cs, a):
        super().initialize(cs, a)
        n = self.X.shape[0]
        self.u = np.zeros(n)
        self.l = np.zeros((n, self.k))

    def init_rows(self, lo, hi, D):
        self.l[lo:hi] = D
        self.u[lo:hi] = D[np.arange(hi - lo), self.a[lo:hi]]

    def begin_round(self, t, cs):
        self.cs = cs
        self.cc, self.s = _DUMMY_F2, _DUMMY_F1
        if self.use_cc:
            self.cc = pairwise_centroid_distances(cs.centroids)
            self.s = centroid_separation(self.cc)
            cs.cc, cs.s = self.cc, self.s
            return self.k * (self.k - 1) // 2
        return 0

    def prepare_chunk(self, lo, hi):
        K.elkan_refresh(self.u, self.l, self.a, self.cs.p, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs = self.cs
        K.elkan_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.u, self.l,
                       self.cc, self.s, self.use_cc, lo, hi, cnt)

    def effective_bounds(self):
        return {"upper": self.u, "lower": self.l}


class Hamerly(Strategy):
    """ham, ann and exp: one upper and one lower bound per sample."""

    bound_kind = "hamerly"
    has_prepare = True
    _names = {K.HAM: "ham", K.ANN: "ann", K.EXP: "exp"}

    def __init__(self, *args, mode=K.HAM, **kw):
        super().__init__(*args, **kw)
        self.mode = mode
        self.name = self._names[mode]

    def initialize(self, cs, a):
        super().initialize(cs, a)
        n = self.X.shape[0]
        self.u = np.zeros(n)
        self.l = np.zeros(n)
        self.b = np.zeros(n, dtype=np.int64)

    def init_rows(self, lo, hi, D):
        _, d1, n2, d2 = K.top_two(D)
        self.u[lo:hi] = d1
        self.l[lo:hi] = d2
        self.b[lo:hi] = n2

    def begin_round(self, t, cs):
        self.cs = cs
        self.top = top_two_displacements(cs.p)
        self.snorms, self.sorder = _DUMMY_F1, _DUMMY_I1
        self.order, self.radii, self.ends = _DUMMY_I2, _DUMMY_F2, _DUMMY_I1
        if self.mode == K.EXP:
            self.index = build_annuli(cs)
            self.s = self.index.s
            self.order, self.radii, self.ends = self.index.order, self.index.radii, self.index.ends
            cs.s = self.s
            return self.index.n_distance_calcs
        cc = pairwise_centroid_distances(cs.centroids)
        self.s = centroid_separation(cc)
        cs.s = self.s
        if self.mode == K.ANN:
            self.snorms, self.sorder = sorted_centroid_norms(cs.sq_norms)
        return self.k * (self.k - 1) // 2

    def prepare_chunk(self, lo, hi):
        top1, arg1, top2 = self.top
        K.hamerly_refresh(self.u, self.l, self.a, self.cs.p, top1, arg1, top2, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs = self.cs
        K.hamerly_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.u, self.l,
                         self.b, self.s, self.mode, self.snorms, self.sorder,
                         self.order, self.radii, self.ends, lo, hi, cnt)

    def effective_bounds(self):
        return {"upper": self.u, "lower_single": self.l}


class Yinyang(Strategy):
    """syin (``local=False``) and yin (``local=True``)."""

    bound_kind = "group"
    has_prepare = True

    def __init__(self, *args, local=False, **kw):
        super().__init__(*args, **kw)
        self.local = local
        self.name = "yin" if local else "syin"

    def initialize(self, cs, a):
        super().initialize(cs, a)
        G = self.group_count or default_group_count(self.k)
        self.groups = build_groups(cs.centroids, G, self.seed)
        n = self.X.shape[0]
        self.u = np.zeros(n)
        self.lg = np.zeros((n, self.groups.group_count))

    def init_rows(self, lo, hi, D):
        n1 = self.a[lo:hi]
        self.u[lo:hi] = D[np.arange(hi - lo), n1]
        self.lg[lo:hi] = K.group_minima(D, n1, self.groups.members)

    def begin_round(self, t, cs):
        self.cs = cs
        self.q = self.groups.group_max(cs.p)
        return 0

    def prepare_chunk(self, lo, hi):
        K.yinyang_refresh(self.u, self.lg, self.a, self.cs.p, self.q, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs, g = self.cs, self.groups
        K.yinyang_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.u, self.lg,
                         g.group_of, g.gstart, g.gmem, self.q, cs.p, self.local, lo, hi, cnt)

    def effective_bounds(self):
        return {"upper": self.u, "lower_group": self.lg, "groups": self.groups}


# ---------------------------------------------------------------------------
# ns variants


class NsStrategy(Strategy):
    has_prepare = True
    sn_tables: dict = {}

    def initialize(self, cs, a):
        super().initialize(cs, a)
        n, d = self.X.shape
        tables = self._sn_table_rows() if self.lockstep else None
        self.history = NS.NsHistory(self.k, d, NS.reset_period(n, self.k, d), tables)
        self.history.record_round(cs.centroids, 0)
        self.cur = 0
        self._resetting = False
        self._derive()

    def _sn_table_rows(self) -> dict:
        return {"CP": self.k}

    def _sn_increments(self, p) -> dict:
        return {"CP": p}

    def _derive(self) -> None:
        """Recompute per-slot quantities derived from P."""

    def sn_table(self, name):
        return self.history.sn[name] if self.lockstep else _DUMMY_F2

    def begin_round(self, t, cs):
        self.cs = cs
        incs = self._sn_increments(cs.p) if self.lockstep else None
        self._resetting = self.history.is_reset_round(t)
        self._t = t
        calcs = self.history.record_round(cs.centroids, t, incs, store=not self._resetting)
        self._derive()
        self.cur = self.history.current_slot
        return calcs + self._round_structures(cs)

    def _round_structures(self, cs) -> int:
        return 0

    def end_prepare(self):
        if self._resetting:
            self.history.restart(self.cs.centroids, self._t)
            self._derive()
            self.cur = 0
            self._resetting = False


class ElkanNs(NsStrategy):
    bound_kind = "elkan"

    def __init__(self, *args, use_cc=False, **kw):
        super().__init__(*args, **kw)
        self.use_cc = use_cc
        self.name = "elk-ns" if use_cc else "selk-ns"

    def initialize(self, cs, a):
        n = self.X.shape[0]
        self.l0 = np.zeros((n, self.k))
        self.T = np.zeros((n, self.k), dtype=np.int64)
        super().initialize(cs, a)

    def init_rows(self, lo, hi, D):
        self.l0[lo:hi] = D

    def _round_structures(self, cs):
        self.cc, self.s = _DUMMY_F2, _DUMMY_F1
        if self.use_cc:
            self.cc = pairwise_centroid_distances(cs.centroids)
            self.s = centroid_separation(self.cc)
            cs.cc, cs.s = self.cc, self.s
            return self.k * (self.k - 1) // 2
        return 0

    def prepare_chunk(self, lo, hi):
        if self._resetting:
            NS.elkan_ns_reset(self.a, self.l0, self.T, self.history.P, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs = self.cs
        NS.elkan_ns_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.l0, self.T,
                           self.history.P, self.cur, self.cc, self.s, self.use_cc,
                           self.lockstep, self.sn_table("CP"), lo, hi, cnt)

    def effective_bounds(self):
        P = self.history.P
        n = self.X.shape[0]
        lower = self.l0 - P[np.arange(self.k)[None, :], self.T]
        rows = np.arange(n)
        upper = self.l0[rows, self.a] + P[self.a, self.T[rows, self.a]]
        # the assigned centroid's slot holds the upper record, not a lower bound
        lower[rows, self.a] = -np.inf
        return {"upper": upper, "lower": lower}


class YinyangNs(NsStrategy):
    bound_kind = "group"
    name = "syin-ns"

    def initialize(self, cs, a):
        n = self.X.shape[0]
        G = self.group_count or default_group_count(self.k)
        self.groups = build_groups(cs.centroids, G, self.seed)
        self.u0 = np.zeros(n)
        self.Tu = np.zeros(n, dtype=np.int64)
        self.l0 = np.zeros((n, self.groups.group_count))
        self.Tl = np.zeros((n, self.groups.group_count), dtype=np.int64)
        super().initialize(cs, a)

    def init_rows(self, lo, hi, D):
        n1 = self.a[lo:hi]
        self.u0[lo:hi] = D[np.arange(hi - lo), n1]
        self.l0[lo:hi] = K.group_minima(D, n1, self.groups.members)

    def _sn_table_rows(self):
        return {"CP": self.k, "CQ": self.groups.group_count}

    def _sn_increments(self, p):
        return {"CP": p, "CQ": self.groups.group_max(p)}

    def _derive(self):
        h = self.history
        self.Q = np.ascontiguousarray(self.groups.group_max(h.P[:, : h._cap]))

    def prepare_chunk(self, lo, hi):
        if self._resetting:
            NS.yinyang_ns_reset(self.a, self.u0, self.Tu, self.l0, self.Tl,
                                self.history.P, self.Q, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs, g = self.cs, self.groups
        NS.yinyang_ns_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.u0, self.Tu,
                             self.l0, self.Tl, self.history.P, self.Q, self.cur,
                             g.group_of, g.gstart, g.gmem, self.lockstep,
                             self.sn_table("CP"), self.sn_table("CQ"), lo, hi, cnt)

    def effective_bounds(self):
        P = self.history.P
        upper = self.u0 + P[self.a, self.Tu]
        G = self.groups.group_count
        lower = self.l0 - self.Q[np.arange(G)[None, :], self.Tl]
        return {"upper": upper, "lower_group": lower, "groups": self.groups}


class ExponionNs(NsStrategy):
    bound_kind = "hamerly"
    name = "exp-ns"

    def initialize(self, cs, a):
        n = self.X.shape[0]
        self.u0 = np.zeros(n)
        self.Tu = np.zeros(n, dtype=np.int64)
        self.l0 = np.zeros(n)
        self.Tl = np.zeros(n, dtype=np.int64)
        super().initialize(cs, a)

    def init_rows(self, lo, hi, D):
        _, d1, _, d2 = K.top_two(D)
        self.u0[lo:hi] = d1
        self.l0[lo:hi] = d2

    def _sn_table_rows(self):
        return {"CP": self.k, "CPX": self.k}

    def _sn_increments(self, p):
        return {"CP": p, "CPX": max_other_displacement(p)}

    def _derive(self):
        h = self.history
        cap = h._cap
        top1, arg1, top2 = NS.slot_top_two(h.P, cap)
        self.top1 = np.ascontiguousarray(top1)
        self.arg1 = np.ascontiguousarray(arg1, dtype=np.int64)
        self.top2 = np.ascontiguousarray(top2)

    def _round_structures(self, cs):
        self.index = build_annuli(cs)
        self.s = self.index.s
        cs.s = self.s
        return self.index.n_distance_calcs

    def prepare_chunk(self, lo, hi):
        if self._resetting:
            NS.exponion_ns_reset(self.a, self.u0, self.Tu, self.l0, self.Tl, self.history.P,
                                 self.top1, self.arg1, self.top2, lo, hi)

    def assign_chunk(self, lo, hi, cnt):
        cs, ix = self.cs, self.index
        NS.exponion_ns_assign(self.X, self.xsq, cs.centroids, cs.sq_norms, self.a, self.u0, self.Tu,
                              self.l0, self.Tl, self.history.P, self.top1, self.arg1, self.top2,
                              self.cur, self.s, ix.order, ix.radii, ix.ends, self.lockstep,
                              self.sn_table("CP"), self.sn_table("CPX"), lo, hi, cnt)

    def effective_bounds(self):
        P = self.history.P
        upper = self.u0 + P[self.a, self.Tu]
        drift = np.where(self.arg1[self.Tl] == self.a, self.top2[self.Tl], self.top1[self.Tl])
        return {"upper": upper, "lower_single": self.l0 - drift}


# ---------------------------------------------------------------------------

_FACTORIES = {
    "sta": lambda *a, **kw: Standard(*a, **kw),
    "selk": lambda *a, **kw: Elkan(*a, use_cc=False, **kw),
    "elk": lambda *a, **kw: Elkan(*a, use_cc=True, **kw),
    "ham": lambda *a, **kw: Hamerly(*a, mode=K.HAM, **kw),
    "ann": lambda *a, **kw: Hamerly(*a, mode=K.ANN, **kw),
    "exp": lambda *a, **kw: Hamerly(*a, mode=K.EXP, **kw),
    "syin": lambda *a, **kw: Yinyang(*a, local=False, **kw),
    "yin": lambda *a, **kw: Yinyang(*a, local=True, **kw),
    "selk-ns": lambda *a, **kw: ElkanNs(*a, use_cc=False, **kw),
    "elk-ns": lambda *a, **kw: ElkanNs(*a, use_cc=True, **kw),
    "syin-ns": lambda *a, **kw: YinyangNs(*a, **kw),
    "exp-ns": lambda *a, **kw: ExponionNs(*a, **kw),
}

ALGORITHMS = tuple(_FACTORIES)
SN_ALGORITHMS = ("selk", "elk", "ham", "ann", "exp", "syin", "yin")
NS_BASES = {"selk": "selk-ns", "elk": "elk-ns", "syin": "syin-ns", "exp": "exp-ns"}


def make_strategy(name: str, data: DataMatrix, k: int, seed: int, group_count=None, lockstep=False):
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; valid: {', '.join(ALGORITHMS)}") from None
    return factory(data, k, seed, group_count=group_count, lockstep=lockstep)


def ns_variant(base: str) -> str:
    """Name of the ns-bounded counterpart of an sn strategy."""
    try:
        return NS_BASES[base]
    except KeyError:
        raise ValueError(f"no ns variant of {base!r}; bases: {', '.join(NS_BASES)}") from None
