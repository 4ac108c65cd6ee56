"""Tree quality metrics (leaf depth, compactness, overlap) and dendrogram export."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .errors import OracleCapExceeded
from .index import UPPER, CCTIndex


@dataclass
class QualityReport:
    n: int
    node_count: int
    max_depth: int
    avg_leaf_depth: float
    avg_leaf_depth_normalized: float
    compactness: float
    overlap: float
    overlap_undecided: int
    upper_bound_radius_frac: float
    oracle: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _leaf_depths(idx: CCTIndex) -> dict:
    depth = {}
    stack = [(idx.root, 0)]
    while stack:
        v, dv = stack.pop()
        if v.is_leaf:
            depth[v.center] = dv
        for c in v.children:
            stack.append((c, dv + 1))
    return depth


def _compactness(idx: CCTIndex) -> float:
    ratios = []
    for v in idx.nodes():
        if v.is_leaf or v.parent is None or v.radius == 0:
            continue
        p = v.parent.radius
        ratios.append(1.0 if p == 0 else v.radius / p)
    return float(np.mean(ratios)) if ratios else math.nan


def _ancestors(idx: CCTIndex) -> dict:
    """Leaf slot -> set of ids of its (internal) ancestor nodes."""
    out = {}
    for slot, leaf in idx.leaf_of.items():
        s = set()
        a = leaf.parent
        while a is not None:
            s.add(id(a))
            a = a.parent
        out[slot] = s
    return out


def _overlap(idx: CCTIndex, use_oracle: bool):
    """Mean over leaves of (#internal nodes whose ball covers the leaf) / (leaf depth)."""
    store = idx.store
    feats = store.features
    internal = [v for v in idx.nodes() if not v.is_leaf]
    anc = _ancestors(idx)
    depth = {slot: len(a) for slot, a in anc.items()}
    covers = dict(depth)  # ancestors cover by construction
    undecided = 0
    slots = np.arange(len(store), dtype=np.int64)
    for v in internal:
        fv = feats[v.center]
        lbs = feats.lb_many(slots, fv)
        ubs = feats.ub_many(slots, fv)
        for x in np.flatnonzero(lbs <= v.radius).tolist():
            if id(v) in anc[x]:
                continue
            if ubs[x] <= v.radius:
                covers[x] += 1
            elif use_oracle:
                if K.decide(store.trajs[x].vertices, fv.vertices, float(v.radius)):
                    covers[x] += 1
            else:
                undecided += 1
    ratios = [covers[x] / depth[x] for x in covers if depth[x] > 0]
    return (float(np.mean(ratios)) if ratios else 1.0), undecided


def quality(idx: CCTIndex, use_oracle: bool = False, cap: int | None = None) -> QualityReport:
    from .queries import oracle_cap

    n = len(idx.store)
    cap = oracle_cap() if cap is None else cap
    if use_oracle and n > cap:
        raise OracleCapExceeded(f"{n} trajectories exceed oracle cap {cap}")
    depths = _leaf_depths(idx)
    mean_depth = float(np.mean(list(depths.values())))
    norm = math.ceil(math.log2(n)) if n > 1 else 1
    nodes = list(idx.nodes())
    internal = [v for v in nodes if not v.is_leaf]
    ub_frac = (sum(v.radius_kind == UPPER for v in internal) / len(internal)) if internal else 0.0
    overlap, undecided = _overlap(idx, use_oracle)
    return QualityReport(
        n=n,
        node_count=len(nodes),
        max_depth=max(depths.values()),
        avg_leaf_depth=mean_depth,
        avg_leaf_depth_normalized=mean_depth / norm,
        compactness=_compactness(idx),
        overlap=overlap,
        overlap_undecided=undecided,
        upper_bound_radius_frac=ub_frac,
        oracle=use_oracle,
    )


def export_dendrogram(idx: CCTIndex, path) -> tuple[str, str]:
    """Write the tree as CSV rows plus a Graphviz DOT file next to it."""
    path = os.fspath(path)
    dot_path = os.path.splitext(path)[0] + ".dot"
    num = {}
    rows = []
    leaf_count = {}
    order = list(idx.nodes())
    for v in reversed(order):
        leaf_count[id(v)] = 1 if v.is_leaf else sum(leaf_count[id(c)] for c in v.children)
    depth = {}
    for k, v in enumerate(order):
        num[id(v)] = k
        depth[id(v)] = 0 if v.parent is None else depth[id(v.parent)] + 1
        rows.append([k, "" if v.parent is None else num[id(v.parent)], idx.id_of(v.center),
                     repr(float(v.radius)), depth[id(v)], leaf_count[id(v)]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "parent_id", "center_id", "radius", "depth", "leaf_count"])
        w.writerows(rows)
    with open(dot_path, "w") as fh:
        fh.write("digraph cct {\n  node [shape=box];\n")
        for r in rows:
            fh.write(f'  n{r[0]} [label="{r[2]}\\nr={float(r[3]):.4g}"];\n')
        for r in rows:
            if r[1] != "":
                fh.write(f"  n{r[1]} -> n{r[0]};\n")
        fh.write("}\n")
    return path, dot_path
