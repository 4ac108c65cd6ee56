"""Cost counters: distance calls, decision calls, bound evaluations, node visits."""
from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field

STAGES = ("build", "prune", "reduce", "decide")
BOUND_KINDS = ("lb_sev", "lb_bb", "lb_st", "lb_tr", "ub_bb", "ub_adf")


@dataclass
class Instrumentation:
    """Per-stage counters; the totals are sums over stages."""

    stage: str = "prune"
    df: Counter = field(default_factory=Counter)
    dfd: Counter = field(default_factory=Counter)
    visits: Counter = field(default_factory=Counter)
    examined: Counter = field(default_factory=Counter)
    bounds: dict = field(default_factory=dict)
    bisector_tests: Counter = field(default_factory=Counter)

    @contextmanager
    def in_stage(self, name: str):
        prev = self.stage
        self.stage = name
        try:
            yield self
        finally:
            self.stage = prev

    def count_df(self, n: int = 1):
        self.df[self.stage] += n

    def count_dfd(self, n: int = 1):
        self.dfd[self.stage] += n

    def count_visit(self, n: int = 1):
        self.visits[self.stage] += n

    def count_examined(self, n: int = 1):
        self.examined[self.stage] += n

    def count_bound(self, kind: str, n: int = 1):
        self.bounds.setdefault(self.stage, Counter())[kind] += n

    @property
    def df_calls(self) -> int:
        return sum(self.df.values())

    @property
    def dfd_calls(self) -> int:
        return sum(self.dfd.values())

    @property
    def node_visits(self) -> int:
        return sum(self.visits.values())

    @property
    def nodes_examined(self) -> int:
        return sum(self.examined.values())

    @property
    def bound_calls(self) -> Counter:
        total = Counter()
        for c in self.bounds.values():
            total.update(c)
        return total

    def per_stage(self) -> dict:
        out = {}
        for s in STAGES:
            out[s] = {
                "df_calls": self.df.get(s, 0),
                "dfd_calls": self.dfd.get(s, 0),
                "node_visits": self.visits.get(s, 0),
                "nodes_examined": self.examined.get(s, 0),
                "bound_calls": dict(sorted(self.bounds.get(s, Counter()).items())),
            }
        return out

    def snapshot(self) -> dict:
        return {
            "df_calls": self.df_calls,
            "dfd_calls": self.dfd_calls,
            "node_visits": self.node_visits,
            "nodes_examined": self.nodes_examined,
            "bound_calls": dict(sorted(self.bound_calls.items())),
            "bisector_tests": {str(k): v for k, v in sorted(self.bisector_tests.items())},
            "stages": self.per_stage(),
        }
