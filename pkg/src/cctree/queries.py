"""Prune / Reduce / Decide queries over a CCT, the improved linear scan and a brute-force oracle.

Every query owns a :class:`PairSession` (memo + counters). Candidate sets are
kept as store slots; results are translated back to trajectory ids.
"""
from __future__ import annotations

import heapq
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bounds import precompute
from .errors import ConfigInvalid, ConsistencyError, EmptyIndex, EmptySet, KTooLarge, OracleCapExceeded
from .frechet import distance_exact
from .geometry import Trajectory
from .instrument import Instrumentation
from .session import QUERY, PairSession

KNN, NN, RNN = "knn", "nn", "rnn"
ADDITIVE, RELATIVE, IMPLICIT = "additive", "relative", "implicit"
DEFAULT_KAPPA = 1.25
DEFAULT_ORACLE_CAP = 5000
INF = math.inf


def oracle_cap() -> int:
    raw = os.environ.get("CCT_ORACLE_CAP")
    if raw is None or raw == "":
        return DEFAULT_ORACLE_CAP
    try:
        return int(raw)
    except ValueError:
        raise ConfigInvalid(f"CCT_ORACLE_CAP must be an integer, got {raw!r}") from None


@dataclass
class QuerySpec:
    Q: Trajectory
    kind: str = NN
    k: int = 1
    tau: float = 0.0
    error_model: str = ADDITIVE
    e_add: float = 0.0
    e_rel: float = 0.0
    seed: int = 0
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if self.kind not in (KNN, NN, RNN):
            raise ConfigInvalid(f"unknown query kind {self.kind!r}")
        if self.error_model not in (ADDITIVE, RELATIVE, IMPLICIT):
            raise ConfigInvalid(f"unknown error model {self.error_model!r}")
        if self.kind == NN:
            self.k = 1
        if self.k < 1:
            raise ConfigInvalid("k must be at least 1")
        if self.tau < 0 or self.e_add < 0 or self.e_rel < 0:
            raise ConfigInvalid("tau and error budgets must be non-negative")


@dataclass
class QueryResult:
    ids: list
    instr: Instrumentation
    seed: int = 0
    reported_error: dict | None = None
    distances: dict | None = None
    slots: list = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# Prune


def _prune_knn(idx, s: PairSession, k: int, e_add: float, shortcut: bool = False):
    """Guided DFS collecting leaf candidates; returns (slots, beta_k, shortcut_hit)."""
    cands = []
    heap = []  # max-heap on (ub, slot) via negation
    stack = [idx.root]
    with s.instr.in_stage("prune"):
        while stack:
            v = stack.pop()
            s.instr.count_examined()
            if v.is_leaf:
                x = v.center
                if len(heap) < k:
                    s.instr.count_visit()
                    u = s.ub(x, QUERY)
                    cands.append(x)
                    heapq.heappush(heap, (-u, -x))
                else:
                    beta = -heap[0][0]
                    if s.lb(x, QUERY) >= beta:
                        continue
                    s.instr.count_visit()
                    u = s.ub(x, QUERY)
                    if u < beta or not s.lb_fd(x, QUERY, beta):
                        cands.append(x)
                        if (u, x) < (beta, -heap[0][1]):
                            heapq.heapreplace(heap, (-u, -x))
                    else:
                        continue
                if shortcut and u <= e_add:
                    return [x], u, True
                continue
            if len(heap) >= k:
                beta = -heap[0][0]
                if s.lb(v.center, QUERY) > beta + v.radius - e_add:
                    continue
            s.instr.count_visit()
            kids = sorted(v.children, key=lambda c: (s.lb(c.center, QUERY), c.center), reverse=True)
            stack.extend(kids)
    return cands, -heap[0][0], False


# ---------------------------------------------------------------------------
# Reduce


def _kth(values, k):
    """k-th smallest (1-based) or +inf if there are fewer than k values."""
    if len(values) < k:
        return INF
    return float(np.partition(np.asarray(values, dtype=float), k - 1)[k - 1])


def _reduce_knn(s: PairSession, cands, k, beta, e_add):
    """Filter by the final beta_k, then early-admit clear winners. Returns (admitted, survivors)."""
    with s.instr.in_stage("reduce"):
        kept = []
        for x in cands:
            u = s.ub(x, QUERY)
            if u <= beta:
                kept.append(x)
            elif s.lb(x, QUERY) < beta - e_add and not s.lb_fd(x, QUERY, beta - e_add):
                kept.append(x)
        if len(kept) < k:
            raise ConsistencyError(f"reduce kept {len(kept)} < k={k} candidates")
        if len(kept) == k:
            return kept, []
        lbs = [s.lb(x, QUERY) for x in kept]
        a_k = _kth(lbs, k)
        a_k1 = _kth(lbs, k + 1)
        cap = min(a_k + e_add, beta)
        admit = []
        for x in kept:
            u = s.ub(x, QUERY)
            if u < a_k1 or u <= cap:
                admit.append((u, x))
        admit.sort()
        admitted = [x for _, x in admit[:k]]
        chosen = set(admitted)
        return admitted, [x for x in kept if x not in chosen]


# ---------------------------------------------------------------------------
# Decide


def _closer_or_equal(s: PairSession, x, pi) -> bool:
    if s.ub(x, QUERY) <= pi:
        return True
    if s.lb(x, QUERY) > pi:
        return False
    if s.lb_fd(x, QUERY, pi):
        return False
    return s.decide(x, QUERY, pi)


def decide_select(s: PairSession, cands, need: int, rng) -> list:
    """Pick ``need`` nearest members of ``cands`` by random-pivot partitioning."""
    chosen = []
    F = list(cands)
    with s.instr.in_stage("decide"):
        while need > 0:
            if len(F) <= need:
                chosen.extend(F)
                break
            p = F[int(rng.integers(len(F)))]
            pi = s.dist(p, QUERY)
            close, far = [], []
            for x in F:
                if x == p:
                    continue
                (close if _closer_or_equal(s, x, pi) else far).append(x)
            if len(close) >= need:
                F = close
            else:
                chosen.extend(close)
                chosen.append(p)
                need -= len(close) + 1
                F = far
    return chosen


def _decide_nn(s: PairSession, cands):
    with s.instr.in_stage("decide"):
        by_lb = sorted(cands, key=lambda x: (s.lb(x, QUERY), x))
        p1 = by_lb[0]
        a2 = s.lb(by_lb[1], QUERY)
        if not s.lb_fd(p1, QUERY, a2) and s.decide(p1, QUERY, a2):
            return p1
        # challengers are scanned in lower-bound order: the lower bounds are
        # much tighter than the upper bounds, so the first few are usually the best
        best = p1
        pi = s.dist(best, QUERY)
        for x in by_lb[1:]:
            if s.lb(x, QUERY) >= pi:
                break
            if s.lb_fd(x, QUERY, pi) or not s.decide(x, QUERY, pi):
                continue
            d = s.dist(x, QUERY)
            if d < pi:
                best, pi = x, d
        return best


# ---------------------------------------------------------------------------
# kNN / NN


def _implicit_knn_error(s: PairSession, admitted, survivors, k, beta_prune):
    pool = admitted + survivors
    rest = sorted(survivors, key=lambda x: (s.ub(x, QUERY), x))
    picked = rest[: k - len(admitted)]
    chosen = admitted + picked
    unchosen = rest[k - len(admitted):]
    beta = 0.0
    for x in admitted:
        beta = max(beta, min(s.ub(x, QUERY), beta_prune))
    for x in picked:
        beta = max(beta, s.ub(x, QUERY))
    a_kth = _kth([s.lb(x, QUERY) for x in pool], k)
    lb_unchosen = min((s.lb(x, QUERY) for x in unchosen), default=INF)
    lb_chosen = max(s.lb(x, QUERY) for x in chosen)
    alpha = max(a_kth, min(lb_unchosen, lb_chosen))
    return chosen, _error_report(beta, alpha)


def _error_report(beta, alpha):
    e_add = max(0.0, beta - alpha)
    zero = alpha == 0
    if zero:
        e_rel = 0.0 if e_add == 0 else INF
    else:
        e_rel = e_add / alpha
    return {"E_add": e_add, "E_rel": e_rel, "alpha": alpha, "beta": beta, "zero_denominator": zero and e_add > 0}


def _knn_slots(idx, s: PairSession, k, e_add, e_rel, relative, implicit, rng, nn):
    """Core of kNN and NN; returns (slots, reported_error or None)."""
    cands, beta, hit = _prune_knn(idx, s, k, 0.0 if relative else e_add, shortcut=nn)
    if hit:
        err = _error_report(beta, 0.0) if implicit else None
        return cands, err
    if relative:
        e_add = e_rel * _kth([s.lb(x, QUERY) for x in cands], k)
    admitted, survivors = _reduce_knn(s, cands, k, beta, e_add)
    if implicit:
        return _implicit_knn_error(s, admitted, survivors, k, beta)
    need = k - len(admitted)
    if need == 0:
        return admitted, None
    if nn:
        return [_decide_nn(s, survivors)], None
    return admitted + decide_select(s, survivors, need, rng), None


def _session(idx, spec_or_q, instr=None):
    if idx.root is None or len(idx.store) == 0:
        raise EmptyIndex("query on an empty index")
    Q = spec_or_q.Q if isinstance(spec_or_q, QuerySpec) else spec_or_q
    if Q.d != idx.store.d:
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"query has d={Q.d}, index has d={idx.store.d}")
    return PairSession(idx.store, instr or Instrumentation(), query=precompute(Q))


def _result(idx, slots, s, spec, err=None):
    slots = sorted(slots)
    return QueryResult([idx.id_of(x) for x in slots], s.instr, spec.seed, err, slots=slots)


def query_knn(idx, spec: QuerySpec) -> QueryResult:
    if spec.k > len(idx.store):
        if len(idx.store) == 0:
            raise EmptyIndex("query on an empty index")
        raise KTooLarge(f"k={spec.k} exceeds index size {len(idx.store)}")
    s = _session(idx, spec)
    slots, err = _knn_slots(idx, s, spec.k, spec.e_add, spec.e_rel, spec.error_model == RELATIVE,
                            spec.error_model == IMPLICIT, np.random.default_rng(spec.seed), nn=False)
    return _result(idx, slots, s, spec, err)


def query_nn(idx, spec: QuerySpec) -> QueryResult:
    s = _session(idx, spec)
    slots, err = _knn_slots(idx, s, 1, spec.e_add, spec.e_rel, spec.error_model == RELATIVE,
                            spec.error_model == IMPLICIT, np.random.default_rng(spec.seed), nn=True)
    return _result(idx, slots, s, spec, err)


def nn_slots(idx, s: PairSession, implicit: bool = False) -> int:
    """NN of the session's query trajectory as a store slot (used by inserts)."""
    slots, _ = _knn_slots(idx, s, 1, 0.0, 0.0, False, implicit, np.random.default_rng(0), nn=True)
    return slots[0]


# ---------------------------------------------------------------------------
# RNN


def _rnn_slots(idx, s: PairSession, tau, e_add, kappa, implicit):
    admitted, cands = [], []
    stack = [idx.root]
    with s.instr.in_stage("prune"):
        while stack:
            v = stack.pop()
            s.instr.count_examined()
            lb = s.lb(v.center, QUERY)
            if v.is_leaf:
                if lb <= tau:
                    s.instr.count_visit()
                    cands.append(v.center)
                continue
            if lb > tau + v.radius:
                continue
            s.instr.count_visit()
            if kappa * lb + v.radius < tau and s.ub(v.center, QUERY) + v.radius <= tau:
                for leaf in idx.leaves_under(v):
                    admitted.append(leaf.center)
                continue
            stack.extend(sorted(v.children, key=lambda c: (s.lb(c.center, QUERY), c.center), reverse=True))
    survivors = []
    with s.instr.in_stage("reduce"):
        for x in cands:
            if s.ub(x, QUERY) < tau + e_add:
                admitted.append(x)
            elif not s.lb_fd(x, QUERY, tau):
                survivors.append(x)
    if implicit:
        beta = max((s.ub(x, QUERY) for x in survivors), default=tau)
        e = max(0.0, beta - tau)
        zero = tau == 0
        rel = (0.0 if e == 0 else INF) if zero else e / tau
        err = {"E_add": e, "E_rel": rel, "alpha": tau, "beta": beta, "zero_denominator": zero and e > 0}
        return admitted + survivors, err
    with s.instr.in_stage("decide"):
        for x in survivors:
            if s.decide(x, QUERY, tau):
                admitted.append(x)
    return admitted, None


def query_rnn(idx, spec: QuerySpec) -> QueryResult:
    s = _session(idx, spec)
    e_add = spec.e_rel * spec.tau if spec.error_model == RELATIVE else spec.e_add
    if spec.error_model == IMPLICIT:
        e_add = 0.0
    slots, err = _rnn_slots(idx, s, spec.tau, e_add, spec.kappa, spec.error_model == IMPLICIT)
    return _result(idx, slots, s, spec, err)


def query_implicit(idx, spec: QuerySpec) -> QueryResult:
    if spec.error_model != IMPLICIT:
        spec = QuerySpec(spec.Q, spec.kind, spec.k, spec.tau, IMPLICIT, seed=spec.seed, kappa=spec.kappa)
    return query(idx, spec)


def query(idx, spec: QuerySpec) -> QueryResult:
    if spec.kind == KNN:
        return query_knn(idx, spec)
    if spec.kind == NN:
        return query_nn(idx, spec)
    return query_rnn(idx, spec)


# ---------------------------------------------------------------------------
# baselines


def linear_scan_nn(store, Q: Trajectory, instr: Instrumentation | None = None) -> QueryResult:
    """Exact NN by one pass over all trajectories with a running best upper bound."""
    if len(store) == 0:
        raise EmptySet("linear scan over an empty set")
    s = PairSession(store, instr or Instrumentation(), query=precompute(Q))
    with s.instr.in_stage("prune"):
        slots = np.arange(len(store), dtype=np.int64)
        lbs = s.lb_many(slots, QUERY)
        beta = INF
        cands = []
        for x in slots.tolist():
            if lbs[x] < beta and not s.lb_fd(x, QUERY, beta):
                cands.append(x)
                beta = min(beta, s.ub(x, QUERY))
    with s.instr.in_stage("reduce"):
        cands = [x for x in cands if lbs[x] <= beta]
    best = cands[0] if len(cands) == 1 else _decide_nn(s, cands)
    return QueryResult([store.id_of(best)], s.instr, slots=[best])


def _members(S):
    if hasattr(S, "store"):
        S = S.store
    if hasattr(S, "trajs"):
        return list(S.trajs)
    return list(S)


def brute_force(S, Q: Trajectory, kind: str = NN, k: int = 1, tau: float = 0.0,
                cap: int | None = None) -> QueryResult:
    """Exact answer from distances to every member; ``distances`` maps id to distance."""
    members = _members(S)
    cap = oracle_cap() if cap is None else cap
    if len(members) > cap:
        raise OracleCapExceeded(f"{len(members)} trajectories exceed oracle cap {cap}")
    if not members:
        raise EmptySet("brute force over an empty set")
    instr = Instrumentation(stage="decide")
    dist = {}
    for P in members:
        instr.count_df()
        dist[P.id] = distance_exact(P, Q)
    if kind == RNN:
        ids = [i for i, v in dist.items() if v <= tau]
    else:
        k = 1 if kind == NN else k
        if k > len(members):
            raise KTooLarge(f"k={k} exceeds set size {len(members)}")
        ids = [i for _, i in sorted((v, i) for i, v in dist.items())[:k]]
    return QueryResult(sorted(ids, key=_id_key), instr, distances=dist)


def _id_key(i):
    return (0, i, "") if isinstance(i, int) else (1, 0, str(i))
