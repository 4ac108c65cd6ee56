import csv
import json

import pytest

from cctree import cli
from cctree.geometry import write_csv

from conftest import small_synthetic, verticals


def run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def parse_line(line):
    return dict(kv.split("=", 1) for kv in line.split())


@pytest.fixture
def three_csv(tmp_path):
    p = tmp_path / "three.csv"
    write_csv(verticals([0.0, 4.0, 10.0]), p)
    return p


@pytest.fixture
def small(tmp_path):
    data = tmp_path / "s.csv"
    write_csv(small_synthetic(5, total=120, noise=20), data)
    return tmp_path, data


def test_build_three_segments(capsys, tmp_path, three_csv):
    out = tmp_path / "i.json"
    rc, text, _ = run(capsys, "build", "--input", three_csv, "--variant", "exact", "--out", out)
    assert rc == 0 and parse_line(text)["nodes"] == "5"
    doc = json.loads(out.read_text())
    assert len(doc["nodes"]) == 5
    rc, text, _ = run(capsys, "stats", "--index", out, "--oracle")
    assert rc == 0
    assert "compactness=0.4" in text.splitlines()
    assert "invariants=OK" in text
    assert (tmp_path / "i.json.dendrogram.csv").exists()


def test_approx_build_makes_no_distance_calls(capsys, tmp_path, three_csv):
    rc, text, _ = run(capsys, "build", "--input", three_csv, "--variant", "approx", "--out", tmp_path / "a.json")
    kv = parse_line(text)
    assert rc == 0 and kv["df_calls"] == "0" and kv["dfd_calls"] == "0"


def test_usage_errors(capsys, tmp_path, three_csv):
    rc, _, err = run(capsys, "build", "--input", tmp_path / "missing.csv", "--out", tmp_path / "x.json")
    assert rc == 2 and "not found" in err
    run(capsys, "build", "--input", three_csv, "--out", tmp_path / "i.json")
    with pytest.raises(SystemExit) as e:
        cli.main(["query", "--index", str(tmp_path / "i.json"), "--queries", str(three_csv), "--kind", "knn",
                  "--k", "1", "--eadd", "1", "--erel", "1", "--report", str(tmp_path / "r.csv")])
    assert e.value.code == 2
    rc, _, _ = run(capsys, "query", "--index", tmp_path / "i.json", "--queries", three_csv, "--kind", "knn",
                   "--report", tmp_path / "r.csv")
    assert rc == 2
    rc, _, _ = run(capsys, "query", "--index", tmp_path / "i.json", "--queries", three_csv, "--kind", "rnn",
                   "--report", tmp_path / "r.csv")
    assert rc == 2


def test_runtime_error_exit_one(capsys, tmp_path, three_csv):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 99}')
    rc, _, err = run(capsys, "stats", "--index", bad)
    assert rc == 1 and "IndexFormatError" in err


def _report(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_query_report_and_aggregate(capsys, small):
    tmp, data = small
    run(capsys, "build", "--input", data, "--out", tmp / "i.json", "--seed", 3)
    rc, _, _ = run(capsys, "gen", "queries", "--input", data, "--out", tmp / "q.csv", "--count", 8, "--seed", 1)
    assert rc == 0
    rc, text, _ = run(capsys, "query", "--index", tmp / "i.json", "--queries", tmp / "q.csv", "--kind", "nn",
                      "--report", tmp / "nn.csv")
    assert rc == 0
    agg = parse_line(text)
    rows = _report(tmp / "nn.csv")
    assert list(rows[0]) == cli.REPORT_COLUMNS
    assert int(agg["queries"]) == len(rows) == 8
    for col, key in (("df_calls", "mean_df"), ("dfd_calls", "mean_dfd"), ("node_visits", "mean_visits")):
        assert abs(sum(int(r[col]) for r in rows) / len(rows) - float(agg[key])) <= 1e-12
    assert float(agg["zero_df_frac"]) == sum(r["df_calls"] == "0" for r in rows) / 8
    meta = json.loads((tmp / "nn.csv.meta.json").read_text())
    assert meta["seed"] == 0 and meta["kappa"] == 1.25 and meta["build_variant"] == "relaxed"
    assert (tmp / "nn.csv.timing.csv").exists()

    run(capsys, "query", "--index", tmp / "i.json", "--queries", tmp / "q.csv", "--kind", "knn", "--k", 1,
        "--report", tmp / "k1.csv")
    from cctree import index as I
    from cctree import queries as Q
    from cctree.geometry import read_csv

    S, qs = read_csv(data), list(read_csv(tmp / "q.csv"))
    for q, a, b in zip(qs, rows, _report(tmp / "k1.csv")):
        d = Q.brute_force(S, q, Q.KNN, k=len(S)).distances
        assert d[int(a["result_ids"])] == d[int(b["result_ids"])] == min(d.values())
    assert I.load(tmp / "i.json").variant == "relaxed"


def test_implicit_rows_have_no_distance_calls(capsys, small):
    tmp, data = small
    run(capsys, "build", "--input", data, "--out", tmp / "i.json")
    run(capsys, "gen", "queries", "--input", data, "--out", tmp / "q.csv", "--count", 6)
    rc, _, _ = run(capsys, "query", "--index", tmp / "i.json", "--queries", tmp / "q.csv", "--kind", "knn",
                   "--k", 3, "--implicit", "--report", tmp / "r.csv")
    assert rc == 0
    rows = _report(tmp / "r.csv")
    assert all(r["df_calls"] == "0" and r["dfd_calls"] == "0" and r["E_add"] != "" for r in rows)


def test_fixed_result_rnn_sizes(capsys, small):
    tmp, data = small
    run(capsys, "build", "--input", data, "--out", tmp / "i.json")
    rc, _, _ = run(capsys, "gen", "queries", "--input", data, "--out", tmp / "f.csv", "--method", "fixed",
                   "--count", 4, "--result-size", 10)
    assert rc == 0
    rc, _, _ = run(capsys, "query", "--index", tmp / "i.json", "--queries", tmp / "f.csv", "--kind", "rnn",
                   "--tau-file", tmp / "f.csv.manifest.json", "--report", tmp / "r.csv")
    assert rc == 0
    assert [r["result_size"] for r in _report(tmp / "r.csv")] == ["10"] * 4


def test_insert_then_stats(capsys, small):
    tmp, data = small
    extra = tmp / "extra.csv"
    from cctree.geometry import ingest

    write_csv([ingest([[0, 0], [3, 3], [5, 2]], 1000), ingest([[9, 9], [8, 1]], 1001)], extra)
    run(capsys, "build", "--input", data, "--variant", "approx", "--out", tmp / "i.json")
    for variant in ("exact", "approx", "standard"):
        out = tmp / f"{variant}.json"
        rc, text, _ = run(capsys, "insert", "--index", tmp / "i.json", "--input", extra, "--variant", variant,
                          "--out", out)
        assert rc == 0 and parse_line(text)["n"] == "122"
        if variant != "exact":
            assert parse_line(text)["df_calls"] == "0"
        rc, text, _ = run(capsys, "stats", "--index", out, "--oracle")
        assert rc == 0 and "invariants=OK" in text


def test_gen_synthetic_deterministic(capsys, tmp_path):
    for name in ("a", "b"):
        rc, _, _ = run(capsys, "gen", "synthetic", "--out", tmp_path / f"{name}.csv", "--total", 200,
                       "--noise", 20, "--queries", 10, "--seed", 7)
        assert rc == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["config"]["seed"] == 7 and len(man["query_pool"]) == 10


def test_simplify_frac(capsys, small):
    tmp, data = small
    rc, text, _ = run(capsys, "build", "--input", data, "--simplify-frac", "0.02", "--out", tmp / "s.json")
    assert rc == 0 and parse_line(text)["n"] == "120"


def test_simplify_flag_default_value():
    args = cli.build_parser().parse_args(["build", "--input", "x", "--out", "y", "--simplify-frac"])
    assert args.simplify_frac == 0.02
    assert cli.build_parser().parse_args(["build", "--input", "x", "--out", "y"]).simplify_frac == 0.0
