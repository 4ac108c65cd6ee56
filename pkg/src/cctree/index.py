"""Cluster Center Tree: structure, batch construction, inserts and persistence.

A node stores a center trajectory (by store slot), a radius and its
children. Two structural rules hold for every internal node ``v``:

* one child has the same center as ``v``;
* every descendant center lies within ``rad(v)`` of ``C(v)``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bounds import FeatureTable, precompute
from .errors import DuplicateId, EmptySet, IndexFormatError
from .geometry import Trajectory, TrajectorySet, read_csv
from .instrument import Instrumentation
from .session import QUERY, PairSession

EXACT = "exact"
UPPER = "upper-bound"
FORMAT_VERSION = 1
VARIANTS = ("exact", "relaxed", "approx")


class TrajectoryStore:
    """Trajectories by slot, plus their precomputed bound features."""

    def __init__(self, d: int):
        self.d = d
        self.trajs: list[Trajectory] = []
        self.slot_of: dict = {}
        self.features = FeatureTable(d)

    def add(self, P: Trajectory, features=None) -> int:
        if P.id in self.slot_of:
            raise DuplicateId(f"trajectory {P.id!r} already indexed")
        if P.d != self.d:
            from .errors import DimensionMismatch

            raise DimensionMismatch(f"trajectory {P.id!r} has d={P.d}, index has d={self.d}")
        slot = len(self.trajs)
        self.trajs.append(P)
        self.slot_of[P.id] = slot
        self.features.append(features if features is not None else precompute(P))
        return slot

    def __len__(self):
        return len(self.trajs)

    def id_of(self, slot: int):
        return self.trajs[slot].id

    def as_set(self) -> TrajectorySet:
        return TrajectorySet.from_iter(self.trajs)


@dataclass(eq=False)
class CCTNode:
    center: int
    radius: float = 0.0
    children: list = field(default_factory=list)
    radius_kind: str = EXACT
    parent: "CCTNode | None" = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def add_child(self, node: "CCTNode"):
        node.parent = self
        self.children.append(node)


class CCTIndex:
    def __init__(self, store: TrajectoryStore, root: CCTNode | None = None):
        self.store = store
        self.root = root
        self.leaf_of: dict[int, CCTNode] = {}
        self.seed: int | None = None
        self.variant: str | None = None
        self.build_stats: dict = {}
        self.pick_order: list[int] = []
        if root is not None:
            self._reindex_leaves()

    def __len__(self):
        return len(self.store)

    def _reindex_leaves(self):
        self.leaf_of = {n.center: n for n in self.nodes() if n.is_leaf}

    def nodes(self):
        """Nodes in preorder (first child first)."""
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(reversed(v.children))

    def node_count(self) -> int:
        return sum(1 for _ in self.nodes())

    def leaves_under(self, v: CCTNode) -> list[CCTNode]:
        out = []
        stack = [v]
        while stack:
            u = stack.pop()
            if u.is_leaf:
                out.append(u)
            else:
                stack.extend(reversed(u.children))
        return out

    def depth(self, v: CCTNode) -> int:
        d = 0
        while v.parent is not None:
            v = v.parent
            d += 1
        return d

    def id_of(self, slot):
        return self.store.id_of(slot)

    # -- checks -----------------------------------------------------------

    def check_structure(self) -> list[str]:
        """Nesting, leaf/store correspondence and size checks (no distances)."""
        problems = []
        if self.root is None:
            if len(self.store):
                problems.append("empty tree over a non-empty store")
            return problems
        leaves = []
        count = 0
        for v in self.nodes():
            count += 1
            if v.is_leaf:
                leaves.append(v.center)
                if v.radius != 0:
                    problems.append(f"leaf {self.id_of(v.center)!r} has radius {v.radius}")
            else:
                if len(v.children) < 2:
                    problems.append(f"internal node {self.id_of(v.center)!r} has one child")
                if not any(c.center == v.center for c in v.children):
                    problems.append(f"nesting violated at node {self.id_of(v.center)!r}")
                for c in v.children:
                    if c.parent is not v:
                        problems.append("broken parent pointer")
        if sorted(leaves) != list(range(len(self.store))):
            problems.append("leaf centers differ from stored trajectories")
        if count > max(1, 2 * len(self.store) - 1):
            problems.append(f"{count} nodes for {len(self.store)} trajectories")
        return problems

    def bounding_violations(self, tol: float = 1e-9, session: PairSession | None = None) -> list:
        """Pairs (node, descendant) whose exact distance exceeds the node radius."""
        s = session or PairSession(self.store)
        bad = []
        for v in self.nodes():
            if v.is_leaf:
                continue
            for leaf in self.leaves_under(v):
                if leaf.center == v.center:
                    continue
                if not s.decide(v.center, leaf.center, v.radius + tol):
                    bad.append((self.id_of(v.center), self.id_of(leaf.center), v.radius))
        return bad


# ---------------------------------------------------------------------------
# bisector localization


def bisector_localize(s: PairSession, p, c1, c2, relaxed: bool = False, rad_c1: float | None = None):
    """Return whichever of c1, c2 is closer to p, spending as few distance calls as possible.

    Ten tests in fixed order; the first conclusive one decides. Test 5 is
    only valid when c2 is a furthest member of c1's cluster (relaxed build),
    with ``rad_c1`` the distance from c1 to c2.
    """
    tally = s.instr.bisector_tests
    ub2 = s.ub(p, c2)
    lb1 = s.lb(p, c1)
    if ub2 <= lb1:
        tally[1] += 1
        return c2
    ub1 = s.ub(p, c1)
    lb2 = s.lb(p, c2)
    if ub1 <= lb2:
        tally[2] += 1
        return c1
    if s.lb_fd(p, c1, ub2):
        tally[3] += 1
        return c2
    if s.lb_fd(p, c2, ub1):
        tally[4] += 1
        return c1
    d1 = s.dist(p, c1)
    if relaxed and rad_c1 is not None and d1 < rad_c1 / 2:
        tally[5] += 1
        return c1
    if d1 < lb2:
        tally[6] += 1
        return c1
    if d1 > ub2:
        tally[7] += 1
        return c2
    if s.lb_fd(p, c2, d1):
        tally[8] += 1
        return c1
    if s.decide(p, c2, d1):
        tally[9] += 1
        return c2
    tally[10] += 1
    return c1


def _split_batch(s: PairSession, ids, c1, c2, relaxed, rad_c1):
    """Vectorized tests 1-2 over many members, falling back to the full predicate."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return ids, ids
    lb1 = s.lb_many(ids, c1)
    ub2 = s.ub_many(ids, c2)
    to2 = ub2 <= lb1
    rest = ~to2
    ub1 = s.ub_many(ids[rest], c1)
    lb2 = s.lb_many(ids[rest], c2)
    to1_rest = ub1 <= lb2
    tally = s.instr.bisector_tests
    tally[1] += int(to2.sum())
    tally[2] += int(to1_rest.sum())
    goes2 = to2.copy()
    undecided = np.flatnonzero(rest)[~to1_rest]
    for t in undecided.tolist():
        x = int(ids[t])
        if bisector_localize(s, x, c1, c2, relaxed, rad_c1) == c2:
            goes2[t] = True
    return ids[~goes2], ids[goes2]


# ---------------------------------------------------------------------------
# batch construction


def _new_store(S) -> TrajectoryStore:
    if isinstance(S, TrajectoryStore):
        return S
    trajs = list(S)
    if not trajs:
        raise EmptySet("cannot build an index over an empty set")
    store = TrajectoryStore(trajs[0].d)
    for P in trajs:
        store.add(P)
    return store


def _finish(idx: CCTIndex, variant, seed, instr, s):
    idx.variant = variant
    idx.seed = seed
    idx._reindex_leaves()
    idx.build_stats = instr.snapshot()
    idx.build_stats["seed"] = seed
    idx.build_stats["variant"] = variant
    return idx


def _first_pick(n, seed, first):
    if first is not None:
        return first
    return int(np.random.default_rng(seed).integers(n))


def _furthest_exact(s: PairSession, others, c, lbs, ubs):
    """Member of ``others`` farthest from ``c``; distances computed only where undecided."""
    known = lbs == ubs
    best = -1
    bv = -math.inf
    if known.any():
        kv = lbs[known]
        j = int(np.flatnonzero(known)[np.argmax(kv)])
        best, bv = int(others[j]), float(lbs[j])
        # smallest id among exact ties
        ties = others[known][kv == bv]
        best = int(ties.min())
    alpha = float(lbs.max())
    order = np.lexsort((others, -ubs))
    for t in order.tolist():
        u = ubs[t]
        x = int(others[t])
        if best != -1 and (u < bv or u < alpha):
            break
        if u == bv and x > best:
            continue
        d = s.dist(x, c)
        if d > bv or (d == bv and x < best):
            best, bv = x, d
    return best, bv


def build_relaxed(S, seed: int = 0, first: int | None = None) -> CCTIndex:
    """Recursive two-way split around a center and its furthest member."""
    store = _new_store(S)
    instr = Instrumentation(stage="build")
    s = PairSession(store, instr)
    root = CCTNode(_first_pick(len(store), seed, first))
    stack = [(root, np.arange(len(store), dtype=np.int64))]
    while stack:
        v, members = stack.pop()
        instr.count_visit()
        c = v.center
        others = members[members != c]
        if others.size == 0:
            continue
        ubs = s.ub_many(others, c)
        lbs = np.minimum(s.lb_many(others, c), ubs)
        far, rad = _furthest_exact(s, others, c, lbs, ubs)
        v.radius = rad
        rest = others[others != far]
        near1, near2 = _split_batch(s, rest, c, far, True, rad)
        v1, v2 = CCTNode(c), CCTNode(far)
        v.add_child(v1)
        v.add_child(v2)
        stack.append((v2, np.concatenate(([far], near2))))
        stack.append((v1, np.concatenate(([c], near1))))
    idx = CCTIndex(store, root)
    return _finish(idx, "relaxed", seed, instr, s)


def build_approx(S, seed: int = 0, first: int | None = None) -> CCTIndex:
    """Relaxed split driven by upper bounds only; radii are upper bounds."""
    store = _new_store(S)
    instr = Instrumentation(stage="build")
    s = PairSession(store, instr)
    root = CCTNode(_first_pick(len(store), seed, first), radius_kind=UPPER)
    stack = [(root, np.arange(len(store), dtype=np.int64))]
    while stack:
        v, members = stack.pop()
        instr.count_visit()
        c = v.center
        others = members[members != c]
        if others.size == 0:
            v.radius_kind = EXACT
            continue
        ubs = s.ub_many(others, c)
        top = ubs.max()
        far = int(others[ubs == top].min())
        v.radius = float(top)
        rest = others[others != far]
        ub_c = s.ub_many(rest, c)
        ub_f = s.ub_many(rest, far)
        to_far = ub_f < ub_c
        v1, v2 = CCTNode(c, radius_kind=UPPER), CCTNode(far, radius_kind=UPPER)
        v.add_child(v1)
        v.add_child(v2)
        stack.append((v2, np.concatenate(([far], rest[to_far]))))
        stack.append((v1, np.concatenate(([c], rest[~to_far]))))
    idx = CCTIndex(store, root)
    return _finish(idx, "approx", seed, instr, s)


def build_exact(S, seed: int = 0, first: int | None = None) -> CCTIndex:
    """Farthest-first clustering run to completion, recorded as a binary tree.

    Each element keeps a bound interval on the distance to its current
    center; exact distances are computed only when the farthest element
    cannot be told apart by bounds. Radii are fixed bottom-up afterwards.
    """
    store = _new_store(S)
    n = len(store)
    instr = Instrumentation(stage="build")
    s = PairSession(store, instr)
    c0 = _first_pick(n, seed, first)
    root = CCTNode(c0)
    leaf = {c0: root}
    picks = [c0]
    remaining = np.array([i for i in range(n) if i != c0], dtype=np.int64)
    assigned = np.full(n, c0, dtype=np.int64)
    lo = np.zeros(n)
    hi = np.zeros(n)
    if remaining.size:
        hi[remaining] = s.ub_many(remaining, c0)
        lo[remaining] = np.minimum(s.lb_many(remaining, c0), hi[remaining])
    while remaining.size:
        instr.count_visit()
        rl, rh = lo[remaining], hi[remaining]
        alpha = rl.max()
        cand = rh >= alpha
        if cand.sum() == 1:
            pick = int(remaining[np.flatnonzero(cand)[0]])
        else:
            best, bv = -1, -math.inf
            order = np.lexsort((remaining, -rh))
            for t in order.tolist():
                x = int(remaining[t])
                if best != -1 and (rh[t] < bv or rh[t] < alpha):
                    break
                if rh[t] == bv and x > best:
                    continue
                d = s.dist(x, int(assigned[x]))
                lo[x] = hi[x] = d
                if d > bv or (d == bv and x < best):
                    best, bv = x, d
            pick = best
        parent_center = int(assigned[pick])
        v = leaf[parent_center]
        u1, u2 = CCTNode(parent_center), CCTNode(pick)
        v.add_child(u1)
        v.add_child(u2)
        leaf[parent_center] = u1
        leaf[pick] = u2
        picks.append(pick)
        remaining = remaining[remaining != pick]
        if not remaining.size:
            break
        # reassign members that are closer to the new center
        by_center = {}
        for x in remaining.tolist():
            by_center.setdefault(int(assigned[x]), []).append(x)
        for c, xs in by_center.items():
            keep, move = _split_reassign(s, np.array(xs, dtype=np.int64), c, pick, lo, hi)
            if move.size:
                assigned[move] = pick
                hi[move] = s.ub_many(move, pick)
                lo[move] = np.minimum(s.lb_many(move, pick), hi[move])
    idx = CCTIndex(store, root)
    idx.pick_order = picks
    for x in picks[1:]:
        fix_ancestor_radius(idx, idx.leaf_of[x], EXACT, session=s)
    return _finish(idx, "exact", seed, instr, s)


def _split_reassign(s, ids, c1, c2, lo, hi):
    """Tests 1-2 use the maintained interval to c1; the rest goes through the predicate."""
    lb2 = s.lb_many(ids, c2)
    ub2 = s.ub_many(ids, c2)
    lb1, ub1 = lo[ids], hi[ids]
    to2 = ub2 <= lb1
    to1 = ~to2 & (ub1 <= lb2)
    tally = s.instr.bisector_tests
    tally[1] += int(to2.sum())
    tally[2] += int(to1.sum())
    goes2 = to2.copy()
    for t in np.flatnonzero(~to2 & ~to1).tolist():
        if bisector_localize(s, int(ids[t]), c1, c2) == c2:
            goes2[t] = True
    return ids[~goes2], ids[goes2]


BUILDERS = {"exact": build_exact, "relaxed": build_relaxed, "approx": build_approx}


def build(S, variant: str = "relaxed", seed: int = 0) -> CCTIndex:
    try:
        fn = BUILDERS[variant]
    except KeyError:
        raise ValueError(f"unknown build variant {variant!r}") from None
    return fn(S, seed)


# ---------------------------------------------------------------------------
# radius maintenance and inserts


def fix_ancestor_radius(idx: CCTIndex, leaf: CCTNode, mode: str = EXACT,
                        session: PairSession | None = None, handle=None) -> None:
    """Grow ancestor radii so they cover ``leaf``'s center.

    exact: upper bound, then traversal race plus decision procedure, and
    only then an exact distance. ub-only: take the upper bound as is.
    """
    s = session or PairSession(idx.store)
    x = leaf.center if handle is None else handle
    a = leaf.parent
    while a is not None:
        if a.center != leaf.center:
            c = a.center
            if mode == EXACT:
                if s.ub(c, x) <= a.radius:
                    pass
                elif not s.lb_fd(c, x, a.radius) and s.decide(c, x, a.radius):
                    pass
                else:
                    d = s.dist(c, x)
                    if d > a.radius:
                        a.radius = d
            else:
                u = s.ub(c, x)
                if u > a.radius:
                    a.radius = u
                    a.radius_kind = UPPER
        a = a.parent


def _split_leaf(idx: CCTIndex, v: CCTNode, slot: int) -> CCTNode:
    u1, u2 = CCTNode(v.center), CCTNode(slot)
    v.add_child(u1)
    v.add_child(u2)
    idx.leaf_of[v.center] = u1
    idx.leaf_of[slot] = u2
    return u2


def _insert(idx: CCTIndex, P: Trajectory, locate, mode, instr):
    if P.id in idx.store.slot_of:
        raise DuplicateId(f"trajectory {P.id!r} already indexed")
    instr = instr if instr is not None else Instrumentation(stage="build")
    feats = precompute(P)
    if idx.root is None:
        slot = idx.store.add(P, feats)
        idx.root = CCTNode(slot)
        idx.leaf_of[slot] = idx.root
        return slot
    s = PairSession(idx.store, instr, query=feats)
    target = locate(idx, s)
    slot = idx.store.add(P, feats)
    new_leaf = _split_leaf(idx, idx.leaf_of[target], slot)
    fix_ancestor_radius(idx, new_leaf, mode, session=s, handle=QUERY)
    return slot


def _locate_exact(idx, s):
    from .queries import nn_slots

    return nn_slots(idx, s, implicit=False)


def _locate_implicit(idx, s):
    from .queries import nn_slots

    return nn_slots(idx, s, implicit=True)


def _locate_descend(idx, s):
    v = idx.root
    while not v.is_leaf:
        s.instr.count_visit()
        v = min(v.children, key=lambda u: (s.lb(u.center, QUERY), u.center))
    s.instr.count_visit()
    return v.center


def _empty_index(d) -> CCTIndex:
    return CCTIndex(TrajectoryStore(d))


def insert_exact(idx: CCTIndex, P: Trajectory, instr: Instrumentation | None = None) -> int:
    return _insert(idx, P, _locate_exact, EXACT, instr)


def insert_approx(idx: CCTIndex, P: Trajectory, instr: Instrumentation | None = None) -> int:
    return _insert(idx, P, _locate_implicit, UPPER, instr)


def insert_standard(idx: CCTIndex, P: Trajectory, instr: Instrumentation | None = None) -> int:
    return _insert(idx, P, _locate_descend, UPPER, instr)


INSERTERS = {"exact": insert_exact, "approx": insert_approx, "standard": insert_standard}


def build_by_inserts(S, variant: str = "exact", instr: Instrumentation | None = None) -> CCTIndex:
    trajs = list(S)
    if not trajs:
        raise EmptySet("cannot build an index over an empty set")
    idx = _empty_index(trajs[0].d)
    instr = instr if instr is not None else Instrumentation(stage="build")
    fn = INSERTERS[variant]
    for P in trajs:
        fn(idx, P, instr)
    idx.variant = f"insert-{variant}"
    idx.build_stats = instr.snapshot()
    return idx


# ---------------------------------------------------------------------------
# persistence


def to_document(idx: CCTIndex, trajectory_file: str) -> dict:
    ids = {}
    nodes = []
    for k, v in enumerate(idx.nodes()):
        ids[id(v)] = k
        nodes.append({
            "id": k,
            "parent": None if v.parent is None else ids[id(v.parent)],
            "center": idx.id_of(v.center),
            "radius": v.radius,
            "radius_kind": v.radius_kind,
        })
    return {
        "version": FORMAT_VERSION,
        "d": idx.store.d,
        "build_variant": idx.variant,
        "seed": idx.seed,
        "trajectory_file": trajectory_file,
        "build_stats": idx.build_stats,
        "nodes": nodes,
    }


def save(idx: CCTIndex, path, trajectory_file: str) -> None:
    doc = to_document(idx, trajectory_file)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


REQUIRED_KEYS = ("d", "trajectory_file", "nodes")


def _check_header(doc):
    if not isinstance(doc, dict) or doc.get("version") != FORMAT_VERSION:
        got = doc.get("version") if isinstance(doc, dict) else type(doc).__name__
        raise IndexFormatError(f"unsupported index version {got!r}")
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise IndexFormatError(f"index document lacks {', '.join(missing)}")


def from_document(doc: dict, trajs: TrajectorySet) -> CCTIndex:
    _check_header(doc)
    if trajs.d != doc["d"]:
        raise IndexFormatError(f"index has d={doc['d']}, trajectories have d={trajs.d}")
    store = TrajectoryStore(doc["d"])
    for P in trajs:
        store.add(P)
    made = {}
    root = None
    for rec in doc["nodes"]:
        if not all(k in rec for k in ("id", "center", "radius", "parent")):
            raise IndexFormatError(f"malformed node record {rec!r}")
        try:
            slot = store.slot_of[rec["center"]]
        except KeyError:
            raise IndexFormatError(f"node center {rec['center']!r} not among trajectories") from None
        node = CCTNode(slot, float(rec["radius"]), radius_kind=rec.get("radius_kind", EXACT))
        made[rec["id"]] = node
        if rec["parent"] is None:
            if root is not None:
                raise IndexFormatError("more than one root")
            root = node
        else:
            try:
                made[rec["parent"]].add_child(node)
            except KeyError:
                raise IndexFormatError(f"node {rec['id']} listed before its parent") from None
    idx = CCTIndex(store, root)
    idx.variant = doc.get("build_variant")
    idx.seed = doc.get("seed")
    idx.build_stats = doc.get("build_stats", {})
    problems = idx.check_structure()
    if problems:
        raise IndexFormatError("; ".join(problems[:5]))
    return idx


def load(path) -> CCTIndex:
    with open(path) as fh:
        doc = json.load(fh)
    _check_header(doc)
    tpath = doc["trajectory_file"]
    if not os.path.isabs(tpath):
        tpath = os.path.join(os.path.dirname(os.path.abspath(path)), tpath)
    return from_document(doc, read_csv(tpath))
