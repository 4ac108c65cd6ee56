import itertools
import json
import math

import numpy as np
import pytest

from cctree import index as I
from cctree.errors import DuplicateId, EmptySet, IndexFormatError
from cctree.frechet import distance_exact
from cctree.geometry import TrajectorySet, ingest, write_csv
from cctree.instrument import Instrumentation
from cctree.session import PairSession

from conftest import random_walk_set, small_synthetic, vertical, verticals


def shape(idx, v=None):
    v = v or idx.root
    key = (idx.id_of(v.center), v.radius)
    return key if v.is_leaf else (key, [shape(idx, c) for c in v.children])


THREE_TREE = ((0, 10.0), [((0, 4.0), [(0, 0.0), (1, 0.0)]), (2, 0.0)])


@pytest.mark.parametrize("build", [I.build_exact, I.build_relaxed, I.build_approx])
def test_three_segments_hand_trace(three, build):
    idx = build(three, first=0)
    assert shape(idx) == THREE_TREE
    assert idx.node_count() == 5
    assert idx.check_structure() == []


def test_build_exact_pick_order(three):
    idx = I.build_exact(three, first=0)
    assert idx.pick_order == [0, 2, 1]


@pytest.mark.parametrize("build", [I.build_exact, I.build_relaxed, I.build_approx])
def test_singleton(build):
    idx = build(verticals([3.0]))
    assert idx.root.is_leaf and idx.root.radius == 0
    assert idx.build_stats["df_calls"] == 0


@pytest.mark.parametrize("build", [I.build_exact, I.build_relaxed, I.build_approx])
def test_empty_set(build):
    with pytest.raises(EmptySet):
        build(TrajectorySet())


def test_seed_drives_first_pick():
    S = random_walk_set(1, 30)
    a = I.build_relaxed(S, seed=5)
    b = I.build_relaxed(S, seed=5)
    assert shape(a) == shape(b)
    firsts = {I.build_relaxed(S, seed=s).root.center for s in range(8)}
    assert len(firsts) > 1


@pytest.mark.parametrize("variant", ["exact", "relaxed", "approx"])
@pytest.mark.parametrize("seed", [0, 1])
def test_batch_invariants(variant, seed):
    S = small_synthetic(seed, total=120)
    idx = I.build(S, variant, seed)
    assert idx.check_structure() == []
    assert idx.bounding_violations() == []
    assert idx.node_count() <= 2 * len(S) - 1
    if variant == "approx":
        assert idx.build_stats["df_calls"] == 0 and idx.build_stats["dfd_calls"] == 0


@pytest.mark.parametrize("variant", ["exact", "approx", "standard"])
def test_insert_invariants(variant):
    S = random_walk_set(4, 100)
    idx = I.build_by_inserts(S, variant)
    assert idx.check_structure() == []
    assert idx.bounding_violations() == []
    if variant != "exact":
        assert idx.build_stats["df_calls"] == 0 and idx.build_stats["dfd_calls"] == 0


def test_insert_into_empty_index():
    idx = I._empty_index(2)
    I.insert_exact(idx, vertical(1.0, 0))
    assert idx.root.is_leaf and idx.id_of(idx.root.center) == 0


def test_insert_duplicate_geometry_keeps_radii(three):
    idx = I.build_exact(three, first=0)
    before = [v.radius for v in idx.nodes() if not v.is_leaf]
    I.insert_exact(idx, vertical(4.0, "dup"))
    after = [v.radius for v in idx.nodes() if not v.is_leaf]
    assert sorted(after) == sorted(before + [0.0])
    leaf = idx.leaf_of[idx.store.slot_of["dup"]]
    assert idx.id_of(leaf.parent.center) == 1


def test_insert_duplicate_id(three):
    idx = I.build_relaxed(three)
    with pytest.raises(DuplicateId):
        I.insert_standard(idx, vertical(99.0, 1))


def test_fix_radius_grows_root():
    idx = I.build_exact(verticals([0.0, 1.0]), first=0)
    assert idx.root.radius == 1.0
    slot = idx.store.add(vertical(7.0, "far"))
    leaf = I._split_leaf(idx, idx.leaf_of[1], slot)
    I.fix_ancestor_radius(idx, leaf, I.EXACT)
    assert idx.root.radius == 7.0
    assert idx.bounding_violations() == []


def test_fix_radius_zero_distance_is_noop():
    idx = I.build_exact(verticals([0.0, 5.0]), first=0)
    slot = idx.store.add(vertical(0.0, "twin"))
    leaf = I._split_leaf(idx, idx.leaf_of[0], slot)
    I.fix_ancestor_radius(idx, leaf, I.EXACT)
    assert [v.radius for v in idx.nodes() if not v.is_leaf] == [5.0, 0.0]


def test_fix_radius_ub_only_makes_no_distance_calls():
    S = random_walk_set(9, 20)
    idx = I.build_relaxed(S)
    instr = Instrumentation()
    s = PairSession(idx.store, instr)
    P = ingest(np.array([[50.0, 50.0], [60.0, 40.0]]), "out")
    slot = idx.store.add(P)
    leaf = I._split_leaf(idx, idx.leaf_of[0], slot)
    I.fix_ancestor_radius(idx, leaf, I.UPPER, session=s)
    assert instr.df_calls == 0 and instr.dfd_calls == 0
    assert idx.root.radius_kind == I.UPPER
    assert idx.bounding_violations() == []


def test_session_keeps_lower_bound_below_upper():
    store = I.TrajectoryStore(2)
    for P in verticals([0.0, 2.0]):
        store.add(P)
    s = PairSession(store)
    s._ub[(0, 1)] = 1.9999999999999998  # a sound upper bound rounded one ulp low
    assert s.lb(0, 1) == 1.9999999999999998
    s2 = PairSession(store)
    assert s2.lb(0, 1) == 2.0
    s2._reconcile_ub((0, 1), 1.9999999999999998)
    assert s2._lb[(0, 1)] == 1.9999999999999998


class StubSession:
    """Vacuous bounds with scripted distances, for exercising the predicate table."""

    def __init__(self, lb=None, ub=None, d=None):
        self.instr = Instrumentation()
        self._lb, self._ub, self._d = lb or {}, ub or {}, d or {}

    def lb(self, a, b):
        return self._lb.get(b, 0.0)

    def ub(self, a, b):
        return self._ub.get(b, math.inf)

    def lb_fd(self, a, b, alpha):
        return False

    def dist(self, a, b):
        self.instr.count_df()
        return self._d[b]

    def decide(self, a, b, eps):
        self.instr.count_dfd()
        return self._d[b] <= eps


def test_bisector_test_one():
    s = StubSession(lb={"c1": 2.0}, ub={"c2": 1.0})
    assert I.bisector_localize(s, "p", "c1", "c2") == "c2"
    assert s.instr.bisector_tests[1] == 1 and s.instr.df_calls == 0


def test_bisector_test_two():
    s = StubSession(lb={"c2": 2.0}, ub={"c1": 1.0})
    assert I.bisector_localize(s, "p", "c1", "c2") == "c1"
    assert s.instr.bisector_tests[2] == 1


def test_bisector_test_five_relaxed_only():
    s = StubSession(d={"c1": 1.0, "c2": 1.5})
    assert I.bisector_localize(s, "p", "c1", "c2", relaxed=True, rad_c1=3.0) == "c1"
    assert s.instr.bisector_tests[5] == 1 and s.instr.df_calls == 1
    s2 = StubSession(d={"c1": 1.0, "c2": 0.5})
    assert I.bisector_localize(s2, "p", "c1", "c2", relaxed=False, rad_c1=3.0) == "c2"
    assert s2.instr.bisector_tests[5] == 0


def test_bisector_matches_oracle():
    S = random_walk_set(12, 40)
    store = I.TrajectoryStore(2)
    for P in S:
        store.add(P)
    s = PairSession(store)
    for p, c1, c2 in itertools.islice(itertools.permutations(range(12), 3), 300):
        w = I.bisector_localize(s, p, c1, c2)
        d1 = distance_exact(store.trajs[p], store.trajs[c1])
        d2 = distance_exact(store.trajs[p], store.trajs[c2])
        assert (w == c1 and d1 <= d2 + 1e-9) or (w == c2 and d2 <= d1 + 1e-9)


def _k_center_radius(D, k):
    n = len(D)
    return min(D[:, list(A)].min(axis=1).max() for A in itertools.combinations(range(n), k))


@pytest.mark.parametrize("seed", range(5))
def test_gonzalez_two_approximation(seed):
    S = random_walk_set(100 + seed, 9, m=5)
    idx = I.build_exact(S, seed=seed)
    trajs = idx.store.trajs
    n = len(trajs)
    D = np.array([[distance_exact(a, b) for b in trajs] for a in trajs])
    picks = idx.pick_order
    assert sorted(picks) == list(range(n))
    for k in range(1, n):
        cover = D[:, picks[:k]].min(axis=1).max()
        assert cover == pytest.approx(D[picks[k], picks[:k]].min())
        R = _k_center_radius(D, k)
        assert R - 1e-9 <= cover <= 2 * R + 1e-9


def test_save_load_round_trip(tmp_path):
    S = small_synthetic(3, total=80)
    idx = I.build_relaxed(S, seed=3)
    path = tmp_path / "idx.json"
    write_csv(idx.store.trajs, tmp_path / "idx.json.traj.csv")
    I.save(idx, path, "idx.json.traj.csv")
    back = I.load(path)
    assert shape(back) == shape(idx)
    assert back.variant == "relaxed" and back.seed == 3
    I.save(back, tmp_path / "again.json", "idx.json.traj.csv")
    assert (tmp_path / "again.json").read_text() == path.read_text()


def test_load_rejects_broken_nesting(tmp_path, three):
    idx = I.build_exact(three, first=0)
    write_csv(three, tmp_path / "t.csv")
    doc = I.to_document(idx, "t.csv")
    doc["nodes"][1]["center"] = 2  # the root no longer has a same-center child
    doc["nodes"][2]["center"] = 1
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(IndexFormatError):
        I.load(tmp_path / "bad.json")
    doc = I.to_document(idx, "t.csv")
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(IndexFormatError):
        I.load(tmp_path / "v.json")
