import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from cctree import datagen as D
from cctree.geometry import TrajectorySet, ingest

settings.register_profile(
    "cct", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "cct"))

coord = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False, width=64)


@st.composite
def polylines(draw, d=2, min_size=2, max_size=8):
    m = draw(st.integers(min_size, max_size))
    pts = draw(st.lists(st.lists(coord, min_size=d, max_size=d), min_size=m, max_size=m))
    V = np.asarray(pts, dtype=float)
    # guarantee at least two distinct vertices
    if np.all(V == V[0]):
        V[-1, 0] += 1.0
    return V


def verticals(xs):
    """Unit-height vertical segments at the given x positions, ids 0..n-1."""
    return TrajectorySet.from_iter(ingest([[x, 0.0], [x, 1.0]], i) for i, x in enumerate(xs))


def vertical(x, tid="q"):
    return ingest([[x, 0.0], [x, 1.0]], tid)


def random_walk_set(seed, n, m=8, d=2):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k = int(rng.integers(2, m + 1))
        V = np.cumsum(rng.normal(size=(k, d)), axis=0) + rng.uniform(-5, 5, d)
        out.append(ingest(V, i))
    return TrajectorySet.from_iter(out)


def small_synthetic(seed, total=150, cluster_size=5, noise=20, avg_size=8, d=2):
    cfg = D.SyntheticConfig(cluster_size=cluster_size, total=total, noise=noise, queries=0,
                            avg_size=avg_size, d=d, seed=seed)
    return D.gen_synthetic(cfg).trajectories


@pytest.fixture
def three():
    return verticals([0.0, 4.0, 10.0])


# acceptance verdict lines, echoed again in the terminal summary so they survive output capture
VERDICTS = []


@pytest.fixture
def verdict():
    def emit(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        VERDICTS.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
