import numpy as np
import pytest

from exactkm import RunConfig, gaussian_mixture, run
from exactkm import kernels as K
from exactkm.annuli import annular_candidates, build_annuli, exact_ball, exponion_candidates, sorted_centroid_norms
from exactkm.core import centroid_separation, pairwise_centroid_distances
from exactkm.strategies import build_groups, default_group_count, max_other_displacement, top_two_displacements
from exactkm.verify import audit_bounds, reference_for, assert_trajectory_equal, run_trajectory

from .conftest import matrix

F1 = np.zeros(1)
F2 = np.zeros((1, 1))
I1 = np.zeros(1, dtype=np.int64)
I2 = np.zeros((1, 1), dtype=np.int64)


def setup(xs, cs):
    X = np.asarray(xs, dtype=np.float64).reshape(len(xs), -1)
    C = np.asarray(cs, dtype=np.float64).reshape(len(cs), -1)
    return X, (X**2).sum(axis=1), C, (C**2).sum(axis=1)


def counters():
    return np.zeros(K.N_COUNTERS, dtype=np.int64)


# ---------------------------------------------------------------------------
# sta


def test_sta_nearest():
    X, xsq, C, csq = setup([0.4], [0.0, 1.0])
    a = np.zeros(1, dtype=np.int64)
    cnt = counters()
    K.full_scan(X, xsq, C, csq, a, 0, 1, cnt)
    assert a[0] == 0 and cnt[K.ASSIGN] == 2


def test_sta_tie_goes_to_lower_index():
    X, xsq, C, csq = setup([0.5], [1.0, 0.0])
    a = np.full(1, 7, dtype=np.int64)
    K.full_scan(X, xsq, C, csq, a, 0, 1, counters())
    assert a[0] == 0


def test_sta_random_matches_argmin():
    rng = np.random.default_rng(0)
    X, xsq, C, csq = setup(rng.normal(size=(200, 3)), rng.normal(size=(7, 3)))
    a = np.zeros(200, dtype=np.int64)
    cnt = counters()
    K.full_scan(X, xsq, C, csq, a, 0, 200, cnt)
    D = np.sqrt(np.maximum(xsq[:, None] + csq[None] - 2 * X @ C.T, 0))
    assert np.array_equal(a, np.argmin(D, axis=1))
    assert cnt[K.ASSIGN] == 200 * 7


# ---------------------------------------------------------------------------
# Elkan family


def test_elkan_refresh_identity_and_substitution():
    u = np.array([1.0])
    l = np.array([[0.3, 0.7]])
    a = np.array([0])
    K.elkan_refresh(u, l, a, np.zeros(2), 0, 1)
    assert u.tolist() == [1.0] and l.tolist() == [[0.3, 0.7]]
    K.elkan_refresh(u, l, a, np.array([0.25, 0.5]), 0, 1)
    assert u.tolist() == [1.25]
    assert l[0] == pytest.approx([0.05, 0.2], abs=1e-15)


def test_selk_skips_when_upper_below_lower():
    X, xsq, C, csq = setup([0.0], [0.5, 0.7])
    a = np.zeros(1, dtype=np.int64)
    u = np.array([0.5])
    l = np.array([[0.5, 0.7]])
    cnt = counters()
    K.elkan_assign(X, xsq, C, csq, a, u, l, F2, F1, False, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 0 and a[0] == 0


def test_selk_tightens_upper_first():
    X, xsq, C, csq = setup([0.0], [0.5, 0.7])
    a = np.zeros(1, dtype=np.int64)
    u = np.array([0.9])  # loose; tightening to 0.5 makes the retest pass
    l = np.array([[0.5, 0.7]])
    cnt = counters()
    K.elkan_assign(X, xsq, C, csq, a, u, l, F2, F1, False, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 1 and cnt[K.TIGHTEN] == 1
    assert u[0] == 0.5


def test_elk_outer_test():
    X, xsq, C, csq = setup([0.0], [0.0, 1.0])
    cc = pairwise_centroid_distances(C)
    s = centroid_separation(cc)
    assert s.tolist() == [1.0, 1.0]
    a = np.zeros(1, dtype=np.int64)
    u = np.array([0.4])
    l = np.array([[0.0, 0.0]])
    cnt = counters()
    K.elkan_assign(X, xsq, C, csq, a, u, l, cc, s, True, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 0


def test_elk_inner_test_uses_half_centroid_distance():
    # outer test fails (s/2 = 0.5 < 0.6) but cc(a, j)/2 = 1.0 > 0.6 skips j
    X, xsq, C, csq = setup([0.0], [0.0, 2.0, 1.0])
    cc = pairwise_centroid_distances(C)
    s = centroid_separation(cc)
    a = np.zeros(1, dtype=np.int64)
    u = np.array([0.6])
    l = np.array([[0.0, 0.1, 0.9]])
    cnt = counters()
    K.elkan_assign(X, xsq, C, csq, a, u, l, cc, s, True, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 0


def test_elk_never_computes_what_selk_skips():
    """Given identical bounds, elk's per-sample distance count is at most selk's."""
    data = gaussian_mixture(300, 4, 5, seed=2)
    X, xsq = data.values, data.sq_norms
    rng = np.random.default_rng(1)
    C = X[rng.choice(300, 12, replace=False)] + rng.normal(scale=0.3, size=(12, 4))
    csq = (C**2).sum(axis=1)
    cc = pairwise_centroid_distances(C)
    s = centroid_separation(cc)
    D = np.sqrt(((X[:, None] - C[None]) ** 2).sum(axis=2))
    a = rng.integers(0, 12, size=300)
    u0 = D[np.arange(300), a] + rng.uniform(0, 1, 300)
    l0 = D - rng.uniform(0, 1, D.shape)
    for i in range(300):
        res = []
        for use_cc in (False, True):
            cnt = counters()
            K.elkan_assign(X, xsq, C, csq, a.copy(), u0.copy(), l0.copy(), cc, s, use_cc, i, i + 1, cnt)
            res.append(cnt[K.ASSIGN])
        assert res[1] <= res[0]


# ---------------------------------------------------------------------------
# Hamerly family


def ham_call(X, xsq, C, csq, a, u, l, b, s, mode, **kw):
    cnt = counters()
    K.hamerly_assign(X, xsq, C, csq, a, u, l, b, s, mode,
                     kw.get("snorms", F1), kw.get("sorder", I1),
                     kw.get("order", I2), kw.get("radii", F2), kw.get("ends", I1),
                     0, X.shape[0], cnt)
    return cnt


def test_ham_test_passes_without_distances():
    X, xsq, C, csq = setup([0.0], [0.0, 1.0])
    cnt = ham_call(X, xsq, C, csq, np.zeros(1, dtype=np.int64), np.array([0.5]),
                   np.array([0.9]), I1.copy(), np.array([0.4, 0.4]), K.HAM)
    assert cnt[K.ASSIGN] == 0


def test_ham_failure_path_costs_k():
    X, xsq, C, csq = setup([0.0], [0.1, 0.2, 0.3, 0.4])
    a = np.array([3])
    u = np.array([5.0])
    l = np.array([0.0])
    cnt = ham_call(X, xsq, C, csq, a, u, l, I1.copy(), np.full(4, 0.1), K.HAM)
    assert cnt[K.ASSIGN] == 4
    assert a[0] == 0 and u[0] == pytest.approx(0.1) and l[0] == pytest.approx(0.2)


def test_ham_refresh_uses_max_over_others():
    u = np.array([1.0, 1.0])
    l = np.array([2.0, 2.0])
    a = np.array([0, 1])
    p = np.array([0.5, 0.2, 0.1])
    top1, arg1, top2 = top_two_displacements(p)
    assert (top1, arg1, top2) == (0.5, 0, 0.2)
    K.hamerly_refresh(u, l, a, p, top1, arg1, top2, 0, 2)
    assert u.tolist() == [1.5, 1.2]
    assert l.tolist() == [1.8, 1.5]
    assert max_other_displacement(p).tolist() == [0.2, 0.5, 0.5]


def test_ann_counts_candidate_set():
    rng = np.random.default_rng(4)
    C = rng.normal(size=(100, 2)) * 10
    X = np.array([[0.3, -0.2]])
    X, xsq, C, csq = setup(X, C)
    D = np.sqrt(((X[0] - C) ** 2).sum(axis=1))
    n = np.argsort(D)
    a = np.array([n[0]])
    b = np.array([n[1]])
    snorms, sorder = sorted_centroid_norms(csq)
    R = max(D[n[0]], D[n[1]])
    J = annular_candidates(float(np.sqrt(xsq[0])), snorms, sorder, R)
    assert n[0] in J and n[1] in J
    cnt = ham_call(X, xsq, C, csq, a, np.array([D[n[0]] + 1.0]), np.array([0.0]), b,
                   np.zeros(100), K.ANN, snorms=snorms, sorder=sorder)
    # a's distance is the tightening itself, so the total is |J|
    assert cnt[K.ASSIGN] == len(J)
    assert cnt[K.TIGHTEN] == 1
    assert a[0] == n[0] and b[0] == n[1]


def test_ann_covering_radius_behaves_as_ham():
    X, xsq, C, csq = setup([[0.0, 0.0]], [[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0]])
    snorms, sorder = sorted_centroid_norms(csq)
    args = dict(snorms=snorms, sorder=sorder)
    res = []
    for mode in (K.HAM, K.ANN):
        a, u, l, b = np.array([2]), np.array([10.0]), np.array([0.0]), np.array([1])
        cnt = ham_call(X, xsq, C, csq, a, u, l, b, np.zeros(3), mode, **args)
        res.append((a[0], u[0], l[0], cnt[K.ASSIGN]))
    assert res[0] == res[1]


def test_exp_line_example():
    ix = build_annuli(np.array([[0.0], [1.0], [3.0], [7.0]]))
    assert ix.s[0] == 1.0
    R = 2 * 0.4 + ix.s[0]
    assert R == pytest.approx(1.8)
    J = exact_ball(ix.cc, 0, R)
    assert J.tolist() == [0, 1]
    # x = 0.4: n1 = 0, n2 = 1, both inside J and J*
    Js = exponion_candidates(ix, 0, R)
    assert {0, 1} <= set(J) <= set(Js)


def test_exp_failure_path_searches_first_annulus():
    X, xsq, C, csq = setup([0.6], [0.0, 1.0, 3.0, 7.0])
    ix = build_annuli(C)
    # max(l, s/2) = 0.5 < u = 0.6, so the candidate path runs with R = 2.2
    a, u, l = np.array([0]), np.array([0.6]), np.array([0.0])
    cnt = ham_call(X, xsq, C, csq, a, u, l, I1.copy(), ix.s, K.EXP,
                   order=ix.order, radii=ix.radii, ends=ix.ends)
    assert a[0] == 1
    assert u[0] == pytest.approx(0.4) and l[0] == pytest.approx(0.6)
    # tighten plus the first annulus {1, 2}
    assert cnt[K.ASSIGN] == 3


def test_exp_large_radius_searches_all():
    X, xsq, C, csq = setup([0.4], [0.0, 1.0, 3.0, 7.0])
    ix = build_annuli(C)
    a, u, l = np.array([0]), np.array([50.0]), np.array([0.0])
    X2, xsq2 = np.array([[20.0]]), np.array([400.0])
    cnt = ham_call(X2, xsq2, C, csq, a, u, l, I1.copy(), ix.s, K.EXP,
                   order=ix.order, radii=ix.radii, ends=ix.ends)
    assert cnt[K.ASSIGN] == 4
    assert a[0] == 3


# ---------------------------------------------------------------------------
# Yinyang family


def test_group_count_default():
    assert default_group_count(5) == 1
    assert default_group_count(20) == 2
    assert default_group_count(100) == 10


def test_groups_partition_centroids():
    C = np.random.default_rng(0).normal(size=(50, 3))
    g = build_groups(C, 5, seed=1)
    assert sorted(np.concatenate(g.members).tolist()) == list(range(50))
    for f, mem in enumerate(g.members):
        assert np.all(g.group_of[mem] == f)
        assert g.gmem[g.gstart[f] : g.gstart[f + 1]].tolist() == mem.tolist()
    assert g.group_count <= 5
    p = np.arange(50, dtype=float)
    assert g.group_max(p).tolist() == [float(m.max()) for m in g.members]


def test_groups_drop_empty():
    # identical centroids: any seeding leaves all but one group empty
    g = build_groups(np.zeros((10, 2)), 4, seed=0)
    assert g.group_count == 1


def test_syin_outer_pass():
    X, xsq, C, csq = setup([0.0], [0.0, 5.0, 6.0])
    g = build_groups(C, 1, seed=0)
    a = np.zeros(1, dtype=np.int64)
    cnt = counters()
    K.yinyang_assign(X, xsq, C, csq, a, np.array([1.0]), np.array([[2.0]]), g.group_of, g.gstart,
                     g.gmem, np.zeros(1), np.zeros(3), False, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 0


def test_syin_single_group_failure_costs_k():
    X, xsq, C, csq = setup([0.0], [0.1, 0.2, 0.3, 0.4])
    g = build_groups(C, 1, seed=0)
    a = np.array([3])
    lg = np.array([[0.0]])
    cnt = counters()
    K.yinyang_assign(X, xsq, C, csq, a, np.array([9.0]), lg, g.group_of, g.gstart, g.gmem,
                     np.zeros(1), np.zeros(4), False, 0, 1, cnt)
    assert cnt[K.ASSIGN] == 4
    assert a[0] == 0 and lg[0, 0] == pytest.approx(0.2)


def test_yin_local_filter():
    # refreshed bound 2.0 plus q 0.5 gives the previous bound 2.5; minus p(j) = 2.4 > 1.2
    assert K.yinyang_local_skip(2.0, 0.5, 0.1, 1.2)
    assert not K.yinyang_local_skip(0.5, 0.5, 0.1, 1.2)
    # p(j) = q(f): degenerates to the refreshed bound against r2
    for lg in (1.0, 1.25, 1.5):
        assert K.yinyang_local_skip(lg, 0.25, 0.25, 1.25) == (lg > 1.25)


# ---------------------------------------------------------------------------
# engine-level properties


SN = ("selk", "elk", "ham", "ann", "exp", "syin", "yin")


@pytest.mark.parametrize("alg", SN)
def test_trajectory_equals_reference(alg):
    data = gaussian_mixture(300, 5, 10, seed=3)
    ref = reference_for(data, 10, seed=4, max_rounds=20)
    res = run_trajectory(alg, data, 10, 4, max_rounds=20)
    rep = assert_trajectory_equal(ref, res.trajectory)
    assert rep, rep.message


@pytest.mark.parametrize("alg", SN)
def test_bounds_valid_every_round(alg):
    data = gaussian_mixture(250, 3, 8, seed=9)
    assert audit_bounds(alg, data, 20, seed=1) == []


def test_selk_dominated_by_sta_every_round():
    data = gaussian_mixture(500, 4, 8, seed=0)
    sta = run(RunConfig("sta", 16, 2), data)
    selk = run(RunConfig("selk", 16, 2), data)
    for rs, rl in zip(sta.per_round_stats, selk.per_round_stats):
        assert rl.dist_calcs_assign <= rs.dist_calcs_assign


def test_yin_local_filter_never_costs_more():
    data = gaussian_mixture(2000, 3, 30, seed=1)
    cfg = dict(k=60, seed=3)
    syin = run(RunConfig("syin", **cfg), data)
    yin = run(RunConfig("yin", **cfg), data)
    assert syin.digests == yin.digests
    for a, b in zip(syin.per_round_stats, yin.per_round_stats):
        assert b.dist_calcs_assign <= a.dist_calcs_assign


def test_static_centroids_cost_nothing():
    # two exact clusters: after round 1 nothing moves, so bounded rounds are free
    data = matrix([[0.0], [0.2], [10.0], [10.2]])
    from exactkm.core import CentroidState

    init = CentroidState.from_array(np.array([[0.1], [10.1]]))
    for alg in ("selk", "elk", "ham", "ann", "exp", "syin", "yin"):
        res = run(RunConfig(alg, 2, 0), data, init=init)
        assert res.per_round_stats[1].dist_calcs_assign == 0, alg
