"""``cct`` command line: gen, build, insert, query, stats.

Exit status: 0 on success, 2 on usage errors (bad flags, missing files),
1 on failures raised while running.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import datagen as D
from . import index as I
from .errors import CCTError
from .geometry import TrajectorySet, read_csv, reach, simplify, write_csv
from .instrument import BOUND_KINDS
from .quality import export_dendrogram, quality
from .queries import IMPLICIT, RELATIVE, ADDITIVE, QuerySpec, query

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _need_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def _traj_path(index_path):
    return index_path + ".traj.csv"


def _save_index(idx, out):
    tpath = _traj_path(out)
    write_csv(idx.store.trajs, tpath)
    I.save(idx, out, os.path.basename(tpath))


def _manifest_path(path):
    return path + ".manifest.json"


# -- gen ----------------------------------------------------------------------


def cmd_gen_synthetic(args):
    cfg = D.SyntheticConfig(
        cluster_size=args.cluster_size, straightness=args.straightness, max_edge=args.max_edge,
        avg_size=args.avg_size, total=args.total, d=args.d, seed=args.seed, noise=args.noise,
        queries=args.queries,
    )
    data = D.gen_synthetic(cfg)
    write_csv(data.trajectories, args.out)
    D.write_manifest(_manifest_path(args.out), config=cfg, query_pool=data.query_pool)
    print(f"trajectories={len(data.trajectories)} query_pool={len(data.query_pool)} out={args.out}")


def cmd_gen_queries(args):
    _need_file(args.input, "input")
    S = read_csv(args.input)
    source = S
    if args.manifest:
        _need_file(args.manifest, "manifest")
        with open(args.manifest) as fh:
            pool = json.load(fh).get("query_pool") or []
        if pool:
            source = TrajectorySet.from_iter(S[i] for i in pool)
    if args.method == "perturb":
        drawn = D.perturb_queries_with_sources(source, args.count, args.seed)
        queries = [q for _, q in drawn]
        meta = {"method": "perturb", "seed": args.seed, "sources": [s for s, _ in drawn]}
    else:
        items = D.gen_queries_fixed_result(source, args.count, args.result_size, args.seed)
        queries = [it["query"] for it in items]
        meta = {"method": "fixed-result", "seed": args.seed, "result_size": args.result_size,
                "sources": [it["source"] for it in items], "taus": [it["tau"] for it in items]}
    write_csv(queries, args.out)
    D.write_manifest(_manifest_path(args.out), **meta)
    print(f"queries={len(queries)} out={args.out}")


# -- build / insert -----------------------------------------------------------


def cmd_build(args):
    _need_file(args.input, "input")
    S = read_csv(args.input)
    if args.simplify_frac:
        S = TrajectorySet.from_iter(simplify(P, args.simplify_frac * reach(P)) for P in S)
    idx = I.build(S, args.variant, args.seed)
    _save_index(idx, args.out)
    st = idx.build_stats
    print(f"variant={args.variant} n={len(idx.store)} nodes={idx.node_count()} "
          f"df_calls={st['df_calls']} dfd_calls={st['dfd_calls']} out={args.out}")


def cmd_insert(args):
    _need_file(args.index, "index")
    _need_file(args.input, "input")
    idx = I.load(args.index)
    fn = I.INSERTERS[args.variant]
    from .instrument import Instrumentation

    instr = Instrumentation(stage="build")
    new = read_csv(args.input)
    for P in new:
        fn(idx, P, instr)
    stats = dict(idx.build_stats or {})
    stats["inserts"] = {"variant": args.variant, "count": len(new), **instr.snapshot()}
    idx.build_stats = stats
    out = args.out or args.index
    _save_index(idx, out)
    print(f"inserted={len(new)} variant={args.variant} n={len(idx.store)} "
          f"df_calls={instr.df_calls} dfd_calls={instr.dfd_calls} out={out}")


# -- query --------------------------------------------------------------------

REPORT_COLUMNS = (["query_id", "kind", "result_size", "df_calls", "dfd_calls", "node_visits", "nodes_examined"]
                  + [f"bound_{k}" for k in BOUND_KINDS] + ["E_add", "E_rel", "result_ids"])


def _taus(args, n):
    if args.tau_file:
        _need_file(args.tau_file, "tau file")
        with open(args.tau_file) as fh:
            taus = json.load(fh).get("taus")
        if not taus or len(taus) != n:
            raise UsageError(f"tau file must list one tau per query ({n})")
        return [float(t) for t in taus]
    if args.tau is None:
        raise UsageError("--kind rnn needs --tau or --tau-file")
    return [args.tau] * n


def _fmt(x):
    return repr(float(x))


def cmd_query(args):
    _need_file(args.index, "index")
    _need_file(args.queries, "queries")
    if args.kind == "knn" and args.k is None:
        raise UsageError("--kind knn needs --k")
    idx = I.load(args.index)
    Qs = list(read_csv(args.queries))
    taus = _taus(args, len(Qs)) if args.kind == "rnn" else [0.0] * len(Qs)
    if args.implicit:
        model = IMPLICIT
    elif args.erel is not None:
        model = RELATIVE
    else:
        model = ADDITIVE
    rows, timing = [], []
    for j, Q in enumerate(Qs):
        spec = QuerySpec(Q, args.kind, args.k or 1, taus[j], model, args.eadd or 0.0, args.erel or 0.0,
                         seed=args.seed + j, kappa=args.kappa)
        t0 = time.perf_counter()
        r = query(idx, spec)
        timing.append((Q.id, (time.perf_counter() - t0) * 1e3))
        b = r.instr.bound_calls
        err = r.reported_error or {}
        rows.append([Q.id, args.kind, len(r.ids), r.instr.df_calls, r.instr.dfd_calls, r.instr.node_visits,
                     r.instr.nodes_examined] + [b.get(k, 0) for k in BOUND_KINDS]
                    + [_fmt(err["E_add"]) if err else "", _fmt(err["E_rel"]) if err else "",
                       ";".join(str(i) for i in r.ids)])
    with open(args.report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
    with open(args.report + ".timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "wall_ms"])
        w.writerows([q, f"{ms:.3f}"] for q, ms in timing)
    agg = aggregate(rows)
    meta = {
        "aggregate": agg, "seed": args.seed, "kind": args.kind, "k": args.k, "error_model": model,
        "eadd": args.eadd, "erel": args.erel, "kappa": args.kappa, "build_variant": idx.variant,
        "index": os.path.basename(args.index), "queries": os.path.basename(args.queries),
        "version": __version__, "python": platform.python_version(), "numpy": np.__version__,
    }
    with open(args.report + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(aggregate_line(agg))


def aggregate(rows) -> dict:
    n = len(rows)
    if n == 0:
        return {"queries": 0, "mean_df": 0.0, "mean_dfd": 0.0, "mean_visits": 0.0, "zero_df_frac": 0.0}
    df = [r[3] for r in rows]
    return {
        "queries": n,
        "mean_df": sum(df) / n,
        "mean_dfd": sum(r[4] for r in rows) / n,
        "mean_visits": sum(r[5] for r in rows) / n,
        "zero_df_frac": sum(1 for x in df if x == 0) / n,
    }


def aggregate_line(agg) -> str:
    return " ".join(f"{k}={agg[k]!r}" for k in ("queries", "mean_df", "mean_dfd", "mean_visits", "zero_df_frac"))


# -- stats --------------------------------------------------------------------


def cmd_stats(args):
    _need_file(args.index, "index")
    idx = I.load(args.index)
    rep = quality(idx, use_oracle=args.oracle)
    for k, v in rep.as_dict().items():
        print(f"{k}={v}")
    if args.oracle:
        problems = idx.check_structure()
        bad = idx.bounding_violations()
        ok = not problems and not bad
        print(f"invariants={'OK' if ok else 'FAIL'}")
        for p in problems:
            print(f"  nesting: {p}", file=sys.stderr)
        for b in bad[:20]:
            print(f"  bounding: center={b[0]} member={b[1]} radius={b[2]}", file=sys.stderr)
        if not ok:
            return EXIT_RUNTIME
    out = args.dendrogram or args.index + ".dendrogram.csv"
    csv_path, dot_path = export_dendrogram(idx, out)
    print(f"dendrogram={csv_path} dot={dot_path}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cct", description="Cluster Center Tree index for trajectory search")
    p.add_argument("--version", action="version", version=f"cct {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic trajectories or query sets")
    gsub = g.add_subparsers(dest="what", required=True)
    gs = gsub.add_parser("synthetic", help="clustered random-walk trajectory set")
    gs.add_argument("--out", required=True)
    gs.add_argument("--seed", type=int, default=0)
    gs.add_argument("--cluster-size", type=int, default=10)
    gs.add_argument("--straightness", type=float, default=0.95)
    gs.add_argument("--max-edge", type=float, default=0.6)
    gs.add_argument("--avg-size", type=int, default=15)
    gs.add_argument("--total", type=int, default=5000)
    gs.add_argument("--d", type=int, default=2)
    gs.add_argument("--noise", type=int, default=500)
    gs.add_argument("--queries", type=int, default=1000, help="size of the query id pool")
    gs.set_defaults(func=cmd_gen_synthetic)
    gq = gsub.add_parser("queries", help="query trajectories derived from a data set")
    gq.add_argument("--input", required=True)
    gq.add_argument("--out", required=True)
    gq.add_argument("--method", choices=["perturb", "fixed"], default="perturb")
    gq.add_argument("--count", type=int, default=1000)
    gq.add_argument("--result-size", type=int, default=10)
    gq.add_argument("--manifest", help="draw sources from this synthetic manifest's query pool")
    gq.add_argument("--seed", type=int, default=0)
    gq.set_defaults(func=cmd_gen_queries)

    b = sub.add_parser("build", help="build an index from a trajectory CSV")
    b.add_argument("--input", required=True)
    b.add_argument("--variant", choices=list(I.VARIANTS), default="relaxed")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--simplify-frac", type=float, nargs="?", const=0.02, default=0.0,
                   help="simplify each trajectory at this fraction of its reach before indexing "
                        "(0.02 when given without a value; off by default)")
    b.set_defaults(func=cmd_build)

    ins = sub.add_parser("insert", help="insert trajectories into an existing index")
    ins.add_argument("--index", required=True)
    ins.add_argument("--input", required=True)
    ins.add_argument("--variant", choices=list(I.INSERTERS), default="exact")
    ins.add_argument("--out", help="write the updated index here (default: overwrite)")
    ins.set_defaults(func=cmd_insert)

    q = sub.add_parser("query", help="run a batch of queries and write a report")
    q.add_argument("--index", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--kind", choices=["knn", "nn", "rnn"], required=True)
    q.add_argument("--k", type=int)
    q.add_argument("--tau", type=float)
    q.add_argument("--tau-file", help="query manifest with one tau per query")
    err = q.add_mutually_exclusive_group()
    err.add_argument("--eadd", type=float)
    err.add_argument("--erel", type=float)
    err.add_argument("--implicit", action="store_true")
    q.add_argument("--kappa", type=float, default=1.25)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--report", required=True)
    q.set_defaults(func=cmd_query)

    st = sub.add_parser("stats", help="quality metrics and dendrogram export")
    st.add_argument("--index", required=True)
    st.add_argument("--oracle", action="store_true", help="exact overlap and invariant check")
    st.add_argument("--dendrogram", help="dendrogram CSV path (DOT written alongside)")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except UsageError as e:
        print(f"cct: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CCTError, OSError, ValueError) as e:
        print(f"cct: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
