import csv

import pytest

from cctree import index as I
from cctree.errors import OracleCapExceeded
from cctree.quality import export_dendrogram, quality

from conftest import small_synthetic, verticals


def test_three_segment_report(three):
    rep = quality(I.build_exact(three, first=0), use_oracle=True)
    assert rep.n == 3 and rep.node_count == 5
    assert rep.compactness == 0.4
    assert rep.max_depth == 2
    assert rep.avg_leaf_depth == pytest.approx(5 / 3)
    assert rep.avg_leaf_depth_normalized == pytest.approx(5 / 6)
    # every leaf is covered by its ancestors only
    assert rep.overlap == 1.0
    assert rep.upper_bound_radius_frac == 0.0


def test_overlap_counts_foreign_balls():
    # one depth-3 leaf also sits in a non-ancestor ball, adding (1/3) / 5 to the mean
    idx = I.build_exact(verticals([0.0, 5.0, 10.0, 4.0, 6.0]), first=0)
    rep = quality(idx, use_oracle=True)
    assert rep.overlap == pytest.approx(16 / 15)
    assert rep.overlap_undecided == 0
    assert quality(I.build_exact(verticals([0.0, 3.0, 10.0, 2.0]), first=0), use_oracle=True).overlap == 1.0


def test_approx_build_reports_upper_bound_radii():
    S = small_synthetic(2, total=80, noise=10)
    rep = quality(I.build_approx(S))
    assert 0 < rep.upper_bound_radius_frac <= 1
    assert rep.oracle is False


def test_oracle_cap(three):
    with pytest.raises(OracleCapExceeded):
        quality(I.build_exact(three), use_oracle=True, cap=2)


def test_dendrogram_export(tmp_path, three):
    idx = I.build_exact(three, first=0)
    csv_path, dot_path = export_dendrogram(idx, tmp_path / "d.csv")
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["node_id"], r["parent_id"], r["center_id"], r["radius"], r["depth"], r["leaf_count"])
            for r in rows] == [
        ("0", "", "0", "10.0", "0", "3"),
        ("1", "0", "0", "4.0", "1", "2"),
        ("2", "1", "0", "0.0", "2", "1"),
        ("3", "1", "1", "0.0", "2", "1"),
        ("4", "0", "2", "0.0", "1", "1"),
    ]
    dot = open(dot_path).read()
    assert dot.startswith("digraph cct {") and dot.count("->") == 4


def test_larger_tree_metrics_are_consistent():
    S = small_synthetic(6, total=150)
    idx = I.build_relaxed(S, seed=6)
    rep = quality(idx, use_oracle=True)
    assert rep.node_count == 2 * len(S) - 1
    assert 0 < rep.compactness <= 1
    assert rep.overlap >= 1.0
