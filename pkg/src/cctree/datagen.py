"""Synthetic trajectory sets (momentum random walks with clustered copies) and query generators.

Randomness is drawn from per-item generators seeded with ``[seed, stream, i]`` so
every trajectory is reproducible on its own and output never depends on
iteration order.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigInvalid, DegenerateTrajectory, KTooLarge, OracleCapExceeded, TieExhaustion
from .frechet import distance_exact
from .geometry import Trajectory, TrajectorySet, ingest, reach

STREAM_UNIQUE, STREAM_COPY, STREAM_NOISE, STREAM_POOL = 0, 1, 2, 3
STREAM_QPICK, STREAM_QSHAPE, STREAM_FIXED = 10, 11, 12
VERTEX_FRAC, SHIFT_FRAC = 0.03, 0.05
MAX_REDRAWS = 100


@dataclass
class SyntheticConfig:
    cluster_size: int = 10
    straightness: float = 0.95
    max_edge: float = 0.6
    avg_size: int = 15
    total: int = 5000
    d: int = 2
    seed: int = 0
    noise: int = 500
    queries: int = 1000

    def validate(self):
        if self.cluster_size < 1:
            raise ConfigInvalid("cluster_size must be >= 1")
        if not 0 <= self.straightness < 1:
            raise ConfigInvalid("straightness must lie in [0, 1)")
        if not self.max_edge > 0:
            raise ConfigInvalid("max_edge must be positive")
        if self.avg_size < 2:
            raise ConfigInvalid("avg_size must be >= 2")
        if self.d < 1:
            raise ConfigInvalid("d must be >= 1")
        if self.noise < 0 or self.total <= self.noise:
            raise ConfigInvalid(f"total ({self.total}) must exceed the noise count ({self.noise})")
        if self.queries < 0:
            raise ConfigInvalid("queries must be >= 0")


@dataclass
class SyntheticData:
    trajectories: TrajectorySet
    query_pool: list
    config: SyntheticConfig


def _vertex_range(n):
    lo = max(2, math.ceil(n / 2))
    hi = max(lo, math.floor(3 * n / 2))
    return lo, hi


def random_walk(rng, cfg: SyntheticConfig) -> np.ndarray:
    lo, hi = _vertex_range(cfg.avg_size)
    z = int(rng.integers(lo, hi + 1))
    V = np.empty((z, cfg.d))
    V[0] = rng.uniform(0.0, 1.0, cfg.d)
    for i in range(1, z):
        step = cfg.max_edge * rng.uniform(0.0, 1.0, cfg.d)
        momentum = cfg.straightness * (V[i - 1] - V[i - 2]) if i >= 2 else 0.0
        V[i] = step + V[i - 1] + momentum
    return V


def _walk_traj(rng, cfg, traj_id):
    # a collapsed (degenerate) walk has probability zero; redraw from the same stream if it occurs
    while True:
        V = random_walk(rng, cfg)
        try:
            return ingest(V, traj_id)
        except DegenerateTrajectory:
            continue


def perturb(V: np.ndarray, rng, vertex_mag: float, shift_mag: float) -> np.ndarray:
    """Per-coordinate uniform jitter of each vertex plus one uniform translation."""
    jitter = rng.uniform(-vertex_mag, vertex_mag, V.shape)
    shift = rng.uniform(-shift_mag, shift_mag, V.shape[1])
    return V + jitter + shift


def gen_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    cfg.validate()
    seed = cfg.seed
    body = cfg.total - cfg.noise
    groups = body // cfg.cluster_size
    singles = body - groups * cfg.cluster_size
    trajs = []
    next_id = 0
    for g in range(groups):
        base = _walk_traj(np.random.default_rng([seed, STREAM_UNIQUE, g]), cfg, next_id)
        trajs.append(base)
        next_id += 1
        for c in range(cfg.cluster_size - 1):
            rng = np.random.default_rng([seed, STREAM_COPY, g, c])
            trajs.append(ingest(perturb(base.vertices, rng, cfg.max_edge, cfg.max_edge), next_id))
            next_id += 1
    for u in range(singles):
        trajs.append(_walk_traj(np.random.default_rng([seed, STREAM_UNIQUE, groups + u]), cfg, next_id))
        next_id += 1
    pool_rng = np.random.default_rng([seed, STREAM_POOL])
    n_pool = min(cfg.queries, len(trajs))
    pool = sorted(int(i) for i in pool_rng.choice(len(trajs), size=n_pool, replace=False))
    for z in range(cfg.noise):
        trajs.append(_walk_traj(np.random.default_rng([seed, STREAM_NOISE, z]), cfg, next_id))
        next_id += 1
    return SyntheticData(TrajectorySet.from_iter(trajs), pool, cfg)


def _members(S):
    return list(S)


def _perturbed_query(P: Trajectory, rng, qid) -> Trajectory:
    r = reach(P)
    return ingest(perturb(P.vertices, rng, VERTEX_FRAC * r, SHIFT_FRAC * r), qid)


def perturb_queries_with_sources(S, count: int, seed: int):
    members = _members(S)
    if not members:
        raise ConfigInvalid("cannot draw queries from an empty set")
    pick = np.random.default_rng([seed, STREAM_QPICK])
    out = []
    for j in range(count):
        P = members[int(pick.integers(len(members)))]
        Q = _perturbed_query(P, np.random.default_rng([seed, STREAM_QSHAPE, j]), j)
        out.append((P.id, Q))
    return out


def gen_queries_perturb(S, count: int, seed: int) -> list[Trajectory]:
    """Queries made by jittering vertices (3% of reach) and translating (5% of reach) a random member."""
    return [Q for _, Q in perturb_queries_with_sources(S, count, seed)]


def gen_queries_fixed_result(S, count: int, result_size: int, seed: int, cap: int | None = None) -> list[dict]:
    """Perturbed queries paired with a radius that captures exactly ``result_size`` members."""
    from .queries import oracle_cap

    members = _members(S)
    if result_size >= len(members):
        raise KTooLarge(f"result_size={result_size} needs more than {len(members)} trajectories")
    cap = oracle_cap() if cap is None else cap
    if len(members) > cap:
        raise OracleCapExceeded(f"{len(members)} trajectories exceed oracle cap {cap}")
    pick = np.random.default_rng([seed, STREAM_QPICK])
    out = []
    for j in range(count):
        for attempt in range(MAX_REDRAWS):
            P = members[int(pick.integers(len(members)))]
            Q = _perturbed_query(P, np.random.default_rng([seed, STREAM_FIXED, j, attempt]), j)
            ds = np.sort([distance_exact(X, Q) for X in members])
            a, b = ds[result_size - 1], ds[result_size]
            tau = 0.5 * (a + b)
            if a < tau < b:
                out.append({"query": Q, "tau": float(tau), "source": P.id})
                break
        else:
            raise TieExhaustion(f"query {j}: no tie-free radius after {MAX_REDRAWS} draws")
    return out


def write_manifest(path, **payload) -> None:
    def conv(o):
        if isinstance(o, SyntheticConfig):
            return asdict(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=conv)
        fh.write("\n")
