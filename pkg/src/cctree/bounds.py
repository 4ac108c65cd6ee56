"""Cheap lower and upper bounds on the continuous Frechet distance.

Per-trajectory inputs (boxes, rotated boxes, distance to the start-end
segment) are computed once by :func:`precompute`. The grouped bounds are

* ``lb_group``: max of start/end vertices, bounding boxes and the
  simplified-trajectory bound,
* ``ub_group``: min of the bounding-box bound and three greedy couplings,
* ``lb_fd``: the traversal race, a one-sided decision test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .geometry import Trajectory, _segment_interval

ROTATIONS_DEG = (22.5, 45.0)
ST_REL_TOL = 1e-9
ST_ABS_TOL_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class TrajectoryFeatures:
    start: np.ndarray
    end: np.ndarray
    bbox: tuple[np.ndarray, np.ndarray]
    # (r, 2, d) array of (lo, hi) corners of rotated boxes; r = 2 for d = 2, else 0
    rotated: np.ndarray
    st_dist: tuple[float, float]
    reach: float
    vertices: np.ndarray

    @property
    def d(self) -> int:
        return self.start.shape[0]

    @property
    def rotated_bboxes(self):
        if self.rotated.shape[0] == 0:
            return None
        return [(r[0], r[1]) for r in self.rotated]


def _rotation(deg):
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


_ROT = [_rotation(a) for a in ROTATIONS_DEG]


def rotated_boxes(V: np.ndarray) -> np.ndarray:
    d = V.shape[1]
    if d != 2:
        return np.empty((0, 2, d))
    out = np.empty((len(_ROT), 2, 2))
    for r, R in enumerate(_ROT):
        W = V @ R.T
        out[r, 0] = W.min(axis=0)
        out[r, 1] = W.max(axis=0)
    return out


def precompute(P: Trajectory | np.ndarray) -> TrajectoryFeatures:
    V = P.vertices if isinstance(P, Trajectory) else np.ascontiguousarray(P, dtype=np.float64)
    r = float(np.sqrt(((V[1:] - V[0]) ** 2).sum(axis=1)).max())
    tol = max(ST_REL_TOL * r, ST_ABS_TOL_FLOOR)
    seg = np.ascontiguousarray(V[[0, -1]])
    st = _segment_interval(V, seg, tol)
    return TrajectoryFeatures(
        start=V[0],
        end=V[-1],
        bbox=(V.min(axis=0), V.max(axis=0)),
        rotated=rotated_boxes(V),
        st_dist=st,
        reach=r,
        vertices=V,
    )


def _feat(x):
    return x if isinstance(x, TrajectoryFeatures) else precompute(x)


def lb_sev(fp: TrajectoryFeatures, fq: TrajectoryFeatures) -> float:
    return max(K.dist(fp.start, fq.start), K.dist(fp.end, fq.end))


def lb_bb(fp: TrajectoryFeatures, fq: TrajectoryFeatures, rotate: bool = True) -> float:
    rp = fp.rotated if rotate else fp.rotated[:0]
    rq = fq.rotated if rotate else fq.rotated[:0]
    return float(K.lb_bb_kernel(fp.bbox[0], fp.bbox[1], fq.bbox[0], fq.bbox[1], rp, rq))


def lb_st(fp: TrajectoryFeatures, fq: TrajectoryFeatures) -> float:
    a, b = fp.st_dist, fq.st_dist
    return max(0.0, 0.5 * max(a[0] - b[1], b[0] - a[1]))


def lb_tr(P, Q, alpha: float) -> bool:
    """True only if the distance of P and Q is certainly greater than alpha."""
    a = P.vertices if hasattr(P, "vertices") else P
    b = Q.vertices if hasattr(Q, "vertices") else Q
    return bool(K.lb_tr_kernel(a, b, float(alpha)))


def ub_bb(fp: TrajectoryFeatures, fq: TrajectoryFeatures, rotate: bool = True) -> float:
    rp = fp.rotated if rotate else fp.rotated[:0]
    rq = fq.rotated if rotate else fq.rotated[:0]
    return float(K.ub_bb_kernel(fp.bbox[0], fp.bbox[1], fq.bbox[0], fq.bbox[1], rp, rq))


_ADF = {"forward": K.adf_forward, "reverse": K.adf_reverse, "diagonal": K.adf_diagonal}


def ub_adf(P, Q, variant: str = "forward") -> float:
    a = P.vertices if hasattr(P, "vertices") else P
    b = Q.vertices if hasattr(Q, "vertices") else Q
    return float(_ADF[variant](a, b))


def lb_group(fp, fq) -> float:
    fp, fq = _feat(fp), _feat(fq)
    return float(K.lb_group_kernel(
        fp.start, fp.end, fp.bbox[0], fp.bbox[1], fp.rotated, fp.st_dist[0], fp.st_dist[1],
        fq.start, fq.end, fq.bbox[0], fq.bbox[1], fq.rotated, fq.st_dist[0], fq.st_dist[1]))


def ub_group(fp, fq) -> float:
    fp, fq = _feat(fp), _feat(fq)
    return float(K.ub_group_kernel(fp.vertices, fq.vertices, fp.bbox[0], fp.bbox[1], fp.rotated,
                                   fq.bbox[0], fq.bbox[1], fq.rotated))


def lb_fd(fp, fq, alpha: float) -> bool:
    fp, fq = _feat(fp), _feat(fq)
    return bool(K.lb_tr_kernel(fp.vertices, fq.vertices, float(alpha)))


def bracket(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """[lower, upper] bound pair for two raw vertex arrays."""
    fa, fb = precompute(a), precompute(b)
    return lb_group(fa, fb), ub_group(fa, fb)


class FeatureTable:
    """Column-wise feature storage for a growing set of trajectories.

    Row ``i`` belongs to the trajectory in slot ``i`` of the owning store;
    vertices are kept in one concatenated array addressed by ``offs``.
    """

    def __init__(self, d: int):
        self.d = d
        self._rows: list[TrajectoryFeatures] = []
        self._dirty = True

    def append(self, f: TrajectoryFeatures) -> int:
        self._rows.append(f)
        self._dirty = True
        return len(self._rows) - 1

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, i) -> TrajectoryFeatures:
        return self._rows[i]

    def _pack(self):
        rows = self._rows
        d = self.d
        r = 2 if d == 2 else 0
        n = len(rows)
        self.starts = np.array([f.start for f in rows]).reshape(n, d)
        self.ends = np.array([f.end for f in rows]).reshape(n, d)
        self.los = np.array([f.bbox[0] for f in rows]).reshape(n, d)
        self.his = np.array([f.bbox[1] for f in rows]).reshape(n, d)
        self.rots = np.array([f.rotated for f in rows]).reshape(n, r, 2, d)
        self.st_lo = np.array([f.st_dist[0] for f in rows], dtype=np.float64)
        self.st_hi = np.array([f.st_dist[1] for f in rows], dtype=np.float64)
        lens = [f.vertices.shape[0] for f in rows]
        self.offs = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lens, out=self.offs[1:])
        self.verts = np.concatenate([f.vertices for f in rows]) if rows else np.empty((0, d))
        self._dirty = False

    def lb_many(self, ids: np.ndarray, fq: TrajectoryFeatures) -> np.ndarray:
        if self._dirty:
            self._pack()
        return K.lb_group_batch(np.asarray(ids, dtype=np.int64), self.starts, self.ends, self.los,
                                self.his, self.rots, self.st_lo, self.st_hi, fq.start, fq.end,
                                fq.bbox[0], fq.bbox[1], fq.rotated, fq.st_dist[0], fq.st_dist[1])

    def ub_many(self, ids: np.ndarray, fq: TrajectoryFeatures) -> np.ndarray:
        if self._dirty:
            self._pack()
        return K.ub_group_batch(np.asarray(ids, dtype=np.int64), self.verts, self.offs, self.los,
                                self.his, self.rots, fq.vertices, fq.bbox[0], fq.bbox[1], fq.rotated)


__all__ = [
    "TrajectoryFeatures", "precompute", "lb_sev", "lb_bb", "lb_st", "lb_tr", "ub_bb", "ub_adf",
    "lb_group", "ub_group", "lb_fd", "bracket", "FeatureTable", "rotated_boxes",
]
