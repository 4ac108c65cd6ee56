"""Trajectories, ingestion, reach, simplification and the trajectory CSV format."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

import numpy as np

from . import _kernels as K
from .errors import DegenerateTrajectory, DimensionMismatch, EmptyInput

TrajId = Union[int, str]


@dataclass(frozen=True, eq=False)
class Trajectory:
    id: TrajId
    vertices: np.ndarray

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def m(self) -> int:
        return self.vertices.shape[0]

    def __len__(self):
        return self.vertices.shape[0]

    def __repr__(self):
        return f"Trajectory(id={self.id!r}, m={self.m}, d={self.d})"


def ingest(raw, traj_id: TrajId = 0) -> Trajectory:
    """Build a validated trajectory from a vertex matrix.

    Consecutive duplicate rows are collapsed. Raises DegenerateTrajectory
    if fewer than two distinct vertices remain.
    """
    try:
        arr = np.array(raw, dtype=np.float64)
    except ValueError as exc:  # ragged rows
        raise DimensionMismatch(f"trajectory {traj_id!r}: inconsistent row lengths") from exc
    if arr.size == 0:
        raise EmptyInput(f"trajectory {traj_id!r} has no vertices")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise DimensionMismatch(f"trajectory {traj_id!r}: expected an (m, d) matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"trajectory {traj_id!r} has non-finite coordinates")
    keep = np.ones(arr.shape[0], dtype=bool)
    keep[1:] = np.any(arr[1:] != arr[:-1], axis=1)
    arr = np.ascontiguousarray(arr[keep])
    if arr.shape[0] < 2:
        raise DegenerateTrajectory(f"trajectory {traj_id!r} has fewer than two distinct vertices")
    arr.setflags(write=False)
    return Trajectory(traj_id, arr)


def reach(P: Trajectory) -> float:
    v = P.vertices
    return float(np.sqrt(((v[1:] - v[0]) ** 2).sum(axis=1)).max())


def segment_distance(P: Trajectory, a, b, tol: float) -> tuple[float, float]:
    """Certified interval [lo, hi] around the Frechet distance from P to segment ab.

    Bisects the decision procedure until hi - lo <= tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    seg = np.array([a, b], dtype=np.float64)
    if seg.shape[1] != P.d:
        raise DimensionMismatch("segment dimension differs from trajectory")
    return _segment_interval(P.vertices, seg, tol)


def _segment_interval(V, seg, tol):
    lo = max(K.dist(V[0], seg[0]), K.dist(V[-1], seg[1]))
    if np.array_equal(seg[0], seg[1]):
        # degenerate segment: the distance is the farthest vertex from the point
        hi = float(np.sqrt(((V - seg[0]) ** 2).sum(axis=1)).max())
        return hi, hi
    if K.decide(V, seg, lo):
        return lo, lo
    hi = K.discrete_frechet(V, seg)
    lo, hi = K.bisect_decide(V, seg, lo, hi, tol)
    return float(lo), float(hi)


def simplify(P: Trajectory, eps_hat: float) -> Trajectory:
    """Greedy vertex-subset simplification within Frechet distance eps_hat.

    From each anchor, the shortcut end is grown by doubling and then
    binary-searched; a shortcut is accepted when the decision procedure
    confirms the skipped piece lies within eps_hat of the segment.
    """
    if eps_hat < 0:
        raise ValueError("eps_hat must be non-negative")
    V = P.vertices
    m = V.shape[0]
    keep = [0]
    a = 0

    def ok(j):
        return K.decide(V[a:j + 1], np.ascontiguousarray(V[[a, j]]), eps_hat)

    while a < m - 1:
        good = a + 1
        step = 1
        bad = None
        while True:
            j = min(a + 2 * step, m - 1)
            if j == good:
                break
            if ok(j):
                good = j
                if j == m - 1:
                    break
                step *= 2
            else:
                bad = j
                break
        if bad is not None:
            lo, hi = good, bad
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if ok(mid):
                    lo = mid
                else:
                    hi = mid
            good = lo
        keep.append(good)
        a = good
    if len(keep) == m:
        return P
    return Trajectory(P.id, _frozen(V[keep]))


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass
class TrajectorySet:
    """Trajectories keyed by id, all of one dimension, in insertion order."""

    d: int | None = None
    _items: dict = field(default_factory=dict)

    def add(self, P: Trajectory) -> None:
        from .errors import DuplicateId

        if P.id in self._items:
            raise DuplicateId(f"duplicate trajectory id {P.id!r}")
        if self.d is None:
            self.d = P.d
        elif P.d != self.d:
            raise DimensionMismatch(f"trajectory {P.id!r} has d={P.d}, set has d={self.d}")
        self._items[P.id] = P

    @classmethod
    def from_iter(cls, trajs: Iterable[Trajectory]) -> "TrajectorySet":
        s = cls()
        for t in trajs:
            s.add(t)
        return s

    def __getitem__(self, traj_id):
        return self._items[traj_id]

    def __contains__(self, traj_id):
        return traj_id in self._items

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self._items.values())

    def __len__(self):
        return len(self._items)

    def ids(self) -> list:
        return list(self._items)


# ---------------------------------------------------------------------------
# CSV format: header traj_id,seq,c1,...,cd; rows sorted by (traj_id, seq)


def _parse_id(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def read_csv(path: str | os.PathLike) -> TrajectorySet:
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0] != "traj_id" or header[1] != "seq":
            raise ValueError(f"{path}: expected header traj_id,seq,c1,...")
        d = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DimensionMismatch(f"{path}:{lineno}: expected {d + 2} columns, got {len(row)}")
            rows.setdefault(_parse_id(row[0]), []).append((int(row[1]), [float(x) for x in row[2:]]))
    if not rows:
        raise EmptyInput(f"{path}: no trajectories")
    out = TrajectorySet()
    for tid in sorted(rows, key=_id_sort_key):
        pts = [c for _, c in sorted(rows[tid], key=lambda r: r[0])]
        out.add(ingest(pts, tid))
    return out


def _id_sort_key(tid):
    return (0, tid, "") if isinstance(tid, int) else (1, 0, tid)


def write_csv(trajs: Iterable[Trajectory], path: str | os.PathLike) -> None:
    trajs = sorted(trajs, key=lambda t: _id_sort_key(t.id))
    if not trajs:
        raise EmptyInput("nothing to write")
    d = trajs[0].d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "seq"] + [f"c{i + 1}" for i in range(d)])
        for t in trajs:
            for s, row in enumerate(t.vertices):
                w.writerow([t.id, s] + [repr(float(x)) for x in row])
