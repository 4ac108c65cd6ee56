"""Memoized, instrumented access to bounds and distances between trajectories.

Every construction or query owns one :class:`PairSession`. Trajectories are
addressed by store slot; the query trajectory (if any) uses ``QUERY``.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .bounds import TrajectoryFeatures, precompute
from .frechet import distance_exact
from .instrument import Instrumentation

QUERY = -1
INF = math.inf


class PairSession:
    def __init__(self, store, instr: Instrumentation | None = None, query=None):
        self.store = store
        self.instr = instr if instr is not None else Instrumentation()
        self.qf: TrajectoryFeatures | None = None
        if query is not None:
            self.qf = query if isinstance(query, TrajectoryFeatures) else precompute(query)
        self._lb: dict = {}
        self._ub: dict = {}
        self._exact: dict = {}

    @staticmethod
    def _key(a, b):
        return (a, b) if a <= b else (b, a)

    def feat(self, h) -> TrajectoryFeatures:
        return self.qf if h == QUERY else self.store.features[h]

    def known(self, a, b):
        return self._exact.get(self._key(a, b))

    def lb(self, a, b) -> float:
        k = self._key(a, b)
        v = self._exact.get(k)
        if v is not None:
            return v
        v = self._lb.get(k)
        if v is None:
            fa, fb = self.feat(a), self.feat(b)
            v = float(K.lb_group_kernel(
                fa.start, fa.end, fa.bbox[0], fa.bbox[1], fa.rotated, fa.st_dist[0], fa.st_dist[1],
                fb.start, fb.end, fb.bbox[0], fb.bbox[1], fb.rotated, fb.st_dist[0], fb.st_dist[1]))
            v = self._reconcile_lb(k, v)
            self._lb[k] = v
            self._count_lb(1)
        return v

    def ub(self, a, b) -> float:
        k = self._key(a, b)
        v = self._exact.get(k)
        if v is not None:
            return v
        v = self._ub.get(k)
        if v is None:
            fa, fb = self.feat(a), self.feat(b)
            v = float(K.ub_group_kernel(fa.vertices, fb.vertices, fa.bbox[0], fa.bbox[1], fa.rotated,
                                        fb.bbox[0], fb.bbox[1], fb.rotated))
            self._reconcile_ub(k, v)
            self._ub[k] = v
            self._count_ub(1)
        return v

    def lb_fd(self, a, b, alpha: float) -> bool:
        """True proves dist(a, b) > alpha; False is inconclusive."""
        if alpha == INF:
            return False
        v = self._exact.get(self._key(a, b))
        if v is not None:
            return v > alpha
        self.instr.count_bound("lb_tr")
        return bool(K.lb_tr_kernel(self.feat(a).vertices, self.feat(b).vertices, float(alpha)))

    def dist(self, a, b) -> float:
        k = self._key(a, b)
        v = self._exact.get(k)
        if v is None and k in self._lb and self._lb[k] == self._ub.get(k):
            # bounds already pin the value down
            v = self._exact[k] = self._lb[k]
        if v is None:
            self.instr.count_df()
            v = distance_exact(self.feat(a).vertices, self.feat(b).vertices)
            self._exact[k] = v
        return v

    def decide(self, a, b, eps: float) -> bool:
        v = self._exact.get(self._key(a, b))
        if v is not None:
            return v <= eps
        self.instr.count_dfd()
        return bool(K.decide(self.feat(a).vertices, self.feat(b).vertices, float(eps)))

    # batch variants fill the memo for many slots against one handle

    def lb_many(self, ids, h) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        out = np.empty(ids.shape[0])
        miss = []
        for t, i in enumerate(ids.tolist()):
            k = self._key(i, h)
            v = self._exact.get(k)
            if v is None:
                v = self._lb.get(k)
            if v is None:
                miss.append(t)
            else:
                out[t] = v
        if miss:
            sel = ids[miss]
            vals = self.store.features.lb_many(sel, self.feat(h))
            for t, i, v in zip(miss, sel.tolist(), vals.tolist()):
                k = self._key(i, h)
                out[t] = self._lb[k] = self._reconcile_lb(k, v)
            self._count_lb(len(miss))
        return out

    def ub_many(self, ids, h) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        out = np.empty(ids.shape[0])
        miss = []
        for t, i in enumerate(ids.tolist()):
            k = self._key(i, h)
            v = self._exact.get(k)
            if v is None:
                v = self._ub.get(k)
            if v is None:
                miss.append(t)
            else:
                out[t] = v
        if miss:
            sel = ids[miss]
            vals = self.store.features.ub_many(sel, self.feat(h))
            out[miss] = vals
            for i, v in zip(sel.tolist(), vals.tolist()):
                k = self._key(i, h)
                self._reconcile_ub(k, v)
                self._ub[k] = v
            self._count_ub(len(miss))
        return out

    # Both bounds are sound, so a lower bound above the upper bound can only be
    # rounding noise between two values that pin the same distance.

    def _reconcile_lb(self, k, v):
        u = self._ub.get(k)
        return u if u is not None and v > u else v

    def _reconcile_ub(self, k, v):
        lo = self._lb.get(k)
        if lo is not None and lo > v:
            self._lb[k] = v

    def _count_lb(self, n):
        for kind in ("lb_sev", "lb_bb", "lb_st"):
            self.instr.count_bound(kind, n)

    def _count_ub(self, n):
        for kind in ("ub_bb", "ub_adf"):
            self.instr.count_bound(kind, n)

    def clear(self):
        self._lb.clear()
        self._ub.clear()
        self._exact.clear()
