import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cctree import bounds as B
from cctree import frechet as F
from cctree.geometry import ingest

from conftest import polylines


def feats(pts):
    return B.precompute(ingest(pts))


def test_precompute_examples():
    f = feats([[0, 0], [1, 0]])
    assert f.bbox[0].tolist() == [0, 0] and f.bbox[1].tolist() == [1, 0]
    assert f.st_dist[0] <= 0 <= f.st_dist[1] + 1e-12
    assert f.reach == 1.0
    g = feats([[0, 0], [1, 1], [2, 0]])
    assert g.bbox[1].tolist() == [2, 1]
    assert g.st_dist[0] - 1e-9 <= 1.0 <= g.st_dist[1] + 1e-9
    assert feats([[0, 0, 0], [1, 2, 3]]).rotated_bboxes is None
    assert len(g.rotated_bboxes) == 2


def test_lb_sev_examples():
    a = feats([[0, 0], [5, 5]])
    assert B.lb_sev(a, a) == 0
    assert B.lb_sev(a, feats([[3, 0], [5, 5]])) == 3
    assert B.lb_sev(a, feats([[1, 0], [5, 9]])) == 4


def test_lb_bb_examples():
    P = feats([[0, 0], [1, 1]])
    assert B.lb_bb(P, P) == 0
    Q = feats([[3, 0], [4, 1]])
    assert B.lb_bb(P, Q, rotate=False) == pytest.approx(3.0)
    assert 3.0 - 1e-12 <= B.lb_bb(P, Q) <= F.distance_exact(ingest([[0, 0], [1, 1]]), ingest([[3, 0], [4, 1]])) + 1e-9
    lo = np.zeros(4)
    P4 = feats([lo, [1, 1, 1, 1]])
    Q4 = feats([lo, [5, 1, 1, 1]])
    assert B.lb_bb(P4, Q4) == 4.0


def test_lb_bb_three_dimensional_uses_facets():
    # corresponding box edges give sqrt(2) here although the true distance is 1
    P = ingest([[0, 10, 0], [10, 0, 0]])
    Q = ingest([[1, 10, 0], [10, 1, 0]])
    assert F.distance_exact(P, Q) == 1.0
    assert B.lb_bb(B.precompute(P), B.precompute(Q)) <= 1.0


def test_lb_st_examples():
    seg = feats([[0, 0], [10, 0]])
    seg2 = feats([[0, 3], [7, 3]])
    assert B.lb_st(seg, seg2) == 0
    tent = feats([[0, 0], [5, 4], [10, 0]])
    assert B.lb_st(seg, tent) == pytest.approx(2.0, abs=1e-8)
    assert B.lb_st(tent, seg) == B.lb_st(seg, tent)


def test_lb_tr_examples():
    A = ingest([[0, 0], [3, 1], [5, 0]])
    assert not B.lb_tr(A, A, 0.0)
    P, Q = ingest([[0, 0], [4, 0]]), ingest([[0, 5], [4, 5]])
    assert B.lb_tr(P, Q, 1.0)
    assert not B.lb_tr(P, Q, 10.0)


def test_ub_bb_examples():
    pt = feats([[0, 0], [0, 0.0 + 1e-300]])
    assert B.ub_bb(pt, pt) <= 1e-299
    P, Q = feats([[0, 0], [1, 1]]), feats([[0, 1], [1, 0]])
    assert B.ub_bb(P, Q, rotate=False) == pytest.approx(math.sqrt(2))
    assert B.ub_bb(P, Q) <= math.sqrt(2) + 1e-12
    P3, Q3 = feats([[0, 0, 0], [1, 1, 0]]), feats([[0, 0, 1], [1, 0, 1]])
    assert B.ub_bb(P3, Q3) == pytest.approx(math.sqrt(3))


def test_ub_adf_examples():
    A = ingest([[0, 0], [3, 1], [5, 0]])
    for v in ("forward", "reverse", "diagonal"):
        assert B.ub_adf(A, A, v) == 0
        assert B.ub_adf(ingest([[0, 0], [1, 0]]), ingest([[0, 1], [1, 1]]), v) == 1
    assert B.ub_adf(ingest([[0, 0], [2, 0]]), ingest([[0, 0], [1, 1], [2, 0]]), "forward") == pytest.approx(math.sqrt(2))


def test_group_examples():
    A = feats([[0, 0], [3, 1], [5, 0]])
    assert B.lb_group(A, A) == 0 and B.ub_group(A, A) == 0
    P, Q = feats([[0, 0], [1, 2], [4, 1]]), feats([[1, 0], [2, 2], [3, 3]])
    assert not B.lb_fd(P, Q, B.ub_group(P, Q))


def _sound(V, W):
    fp, fq = B.precompute(V), B.precompute(W)
    d = F.distance_exact(V, W, F.BISECTION, 1e-9)
    slack = 1e-9 * max(1.0, d) + 1e-9
    assert B.lb_group(fp, fq) <= d + slack
    assert B.ub_group(fp, fq) >= d - slack
    for a in (0.5 * d, 0.99 * d, d, 1.5 * d):
        if B.lb_fd(fp, fq, a):
            assert not F.decide(V, W, a)


@given(polylines(d=2, max_size=10), polylines(d=2, max_size=10))
def test_soundness_2d(V, W):
    _sound(V, W)


@given(polylines(d=3, max_size=8), polylines(d=3, max_size=8))
def test_soundness_3d(V, W):
    _sound(V, W)


@given(polylines(d=8, max_size=6), polylines(d=8, max_size=6))
def test_soundness_8d(V, W):
    _sound(V, W)


@given(polylines(), polylines())
def test_rotation_dominance(V, W):
    fp, fq = B.precompute(V), B.precompute(W)
    assert B.lb_bb(fp, fq) >= B.lb_bb(fp, fq, rotate=False)
    assert B.ub_bb(fp, fq) <= B.ub_bb(fp, fq, rotate=False)


@given(polylines(), polylines(), st.floats(0, 5), st.floats(0, 5))
def test_lb_st_monotone_under_widening(V, W, w1, w2):
    fp, fq = B.precompute(V), B.precompute(W)
    base = B.lb_st(fp, fq)
    a = fp.st_dist
    wide = dataclasses.replace(fp, st_dist=(a[0] - w1, a[1] + w2))
    assert B.lb_st(wide, fq) <= base


@given(polylines(), polylines())
def test_batch_matches_single(V, W):
    table = B.FeatureTable(2)
    fp, fq = B.precompute(V), B.precompute(W)
    table.append(fp)
    ids = np.array([0])
    assert table.lb_many(ids, fq)[0] == B.lb_group(fp, fq)
    assert table.ub_many(ids, fq)[0] == B.ub_group(fp, fq)


@given(polylines(d=2, max_size=6), polylines(d=2, max_size=6))
def test_race_never_contradicts_decide_at_the_distance(V, W):
    d = F.distance_exact(V, W, F.CRITICAL)
    fp, fq = B.precompute(V), B.precompute(W)
    assert F.decide(V, W, d)
    assert not B.lb_fd(fp, fq, d)


@given(polylines(d=2, max_size=4), polylines(d=2, max_size=4))
def test_upper_bound_never_below_endpoint_gap(V, W):
    fp, fq = B.precompute(V), B.precompute(W)
    assert B.ub_group(fp, fq) >= B.lb_sev(fp, fq)
    assert B.lb_group(fp, fq) <= B.ub_group(fp, fq)


def test_group_bounds_pin_tight_pairs():
    # for parallel translated segments every component is exact, so the group must pin the value
    P, Q = feats([[0, 0], [0, 1]]), feats([[3, 0], [3, 1]])
    assert B.lb_group(P, Q) == B.ub_group(P, Q) == 3.0
