"""Command-line front end: ``sofa build|query|scan|tlb|gen``.

Data and query files are headerless little-endian float32, series-major;
``--n`` gives the series length.  The default worker count comes from the
``SOFA_WORKERS`` environment variable (1 when unset).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time

import numpy as np

from . import io as sio
from .core import Dataset
from .evaluation import TLB_METHODS, index_stats, tlb_grid, write_tlb_csv
from .index import IndexTree, audit_lbd_chains, audit_tree
from .query import QueryStats, ScanEngine, TreeEngine, normalize_query
from .sfa import save_model
from .synthetic import PROFILES, generate

WORKERS_ENV = "SOFA_WORKERS"
QUERY_HEADER = ("query_idx", "rank", "series_id", "distance", "time_ms")
BUILD_HEADER = ("phase", "seconds")

log = logging.getLogger("sofa")


class CliError(Exception):
    pass


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise CliError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def parse_alphabets(text: str) -> list[int]:
    """``"4..256"`` (powers of two) or a comma list such as ``"4,16,256"``."""
    if ".." in text:
        lo, hi = (int(x) for x in text.split("..", 1))
        out = []
        a = lo
        while a <= hi:
            out.append(a)
            a *= 2
        return out
    return [int(x) for x in text.split(",") if x.strip()]


def _load_dataset(path, n, count=0) -> Dataset:
    try:
        raw = sio.read_series(path, n, count)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None
    return Dataset.from_raw(raw)


def _load_queries(path, n) -> np.ndarray:
    try:
        raw = sio.read_series(path, n)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None
    return np.stack([normalize_query(r) for r in raw])


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


def _write_results(out, rows) -> None:
    fh, close = _open_out(out)
    try:
        w = csv.writer(fh)
        w.writerow(QUERY_HEADER)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


def _answer(engine, queries, k, workers, record=False):
    rows, stats = [], []
    for qi, q in enumerate(queries):
        st = QueryStats(record_pruned=record)
        t0 = time.perf_counter()
        res = engine.knn(q, k, workers, stats=st)
        ms = 1e3 * (time.perf_counter() - t0)
        for rank, (d, sid) in enumerate(res.pairs()):
            rows.append((qi, rank, sid, repr(d), f"{ms:.3f}"))
        stats.append((st, res))
    return rows, stats


def _check_k(k, N):
    if k < 1 or k > N:
        raise CliError(f"k={k} must be between 1 and the series count {N}")


# --- commands ------------------------------------------------------------------------

def cmd_build(args) -> int:
    ds = _load_dataset(args.data, args.n, args.count)
    engine = TreeEngine.build(
        ds, args.summarizer, args.l, args.alphabet, args.sample, args.binning,
        args.leaf_size, args.workers, args.seed, args.initial_cardinality,
    )
    engine.tree.data_hash = sio.array_digest(ds.values)
    try:
        engine.tree.save(args.out)
        if args.model_out:
            save_model(engine.model, args.model_out)
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}") from None
    t = engine.times
    print(f"built {args.summarizer} index over {ds.series_count} series of length {ds.series_length}")
    print(f"learn {t.learn:.3f}s  transform {t.transform:.3f}s  build {t.build:.3f}s  total {t.total:.3f}s")
    print(index_stats(engine.tree).summary())
    if args.report:
        fh, close = _open_out(args.report)
        try:
            w = csv.writer(fh)
            w.writerow(BUILD_HEADER)
            for phase in ("learn", "transform", "build"):
                w.writerow((phase, f"{getattr(t, phase):.6f}"))
            w.writerow(("total", f"{t.total:.6f}"))
        finally:
            if close:
                fh.close()
    if args.audit:
        return _audit_build(engine, ds, args.seed)
    return 0


def _audit_build(engine, ds, seed) -> int:
    rep = audit_tree(engine.tree, expected_ids=np.arange(ds.series_count))
    rng = np.random.default_rng(seed)
    qs = ds.values[rng.choice(ds.series_count, size=min(100, ds.series_count), replace=False)]
    problems = rep.problems + audit_lbd_chains(engine.tree, ds.values, qs, 1000, seed)
    for p in problems:
        print(f"audit: {p}", file=sys.stderr)
    print(f"audit: {'passed' if not problems else 'FAILED'}")
    return 0 if not problems else 1


def cmd_query(args) -> int:
    try:
        tree = IndexTree.load(args.index)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load index: {exc}") from None
    ds = _load_dataset(args.data, args.n)
    if sio.array_digest(ds.values) != tree.data_hash:
        raise CliError("data file does not match the index (hash mismatch)")
    if tree.model.n != args.n:
        raise CliError(f"index was built for length {tree.model.n}, not {args.n}")
    _check_k(args.k, ds.series_count)
    queries = _load_queries(args.queries, args.n)
    engine = TreeEngine(tree, ds)
    rows, stats = _answer(engine, queries, args.k, args.workers, record=args.audit)
    _write_results(args.out, rows)
    if args.audit:
        problems = []
        for qi, (st, _) in enumerate(stats):
            final = st.bsf_trace[-1] if st.bsf_trace else math.inf
            for lbd, bsf in st.pruned:
                if lbd < bsf or lbd < final:
                    problems.append(f"query {qi}: pruned leaf with bound {lbd} below BSF {bsf}")
            if any(b >= a for a, b in zip(st.bsf_trace, st.bsf_trace[1:])):
                problems.append(f"query {qi}: BSF did not decrease strictly")
        problems += audit_lbd_chains(tree, ds.values, queries, 1000, 0)
        for p in problems[:20]:
            print(f"audit: {p}", file=sys.stderr)
        print(f"audit: {'passed' if not problems else 'FAILED'}", file=sys.stderr)
        return 0 if not problems else 1
    return 0


def cmd_scan(args) -> int:
    ds = _load_dataset(args.data, args.n)
    _check_k(args.k, ds.series_count)
    queries = _load_queries(args.queries, args.n)
    rows, _ = _answer(ScanEngine(ds, args.workers), queries, args.k, args.workers)
    _write_results(args.out, rows)
    return 0


def cmd_tlb(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in TLB_METHODS:
            raise CliError(f"unknown method {m!r}; choose from {', '.join(TLB_METHODS)}")
    ds = _load_dataset(args.data, args.n)
    queries = _load_queries(args.queries, args.n)
    rep = tlb_grid(ds, queries, methods, parse_alphabets(args.alphabets), args.l, args.sample,
                   args.pairs, args.seed, os.path.basename(args.data), args.workers)
    print(rep.table())
    if args.out:
        write_tlb_csv(args.out, [rep])
    if args.audit and rep.max_value() > 1 + 1e-6:
        print("audit: TLB above 1, a lower bound is violated", file=sys.stderr)
        return 1
    return 0


def cmd_gen(args) -> int:
    raw = generate(args.profile, args.count, args.n, args.seed)
    try:
        sio.write_series(args.out, raw)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}") from None
    print(f"wrote {args.count} {args.profile} series of length {args.n} to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sofa", description="Exact k-NN search over data series.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    workers = default_workers()

    def common(sp, queries=True):
        sp.add_argument("--data", required=True)
        sp.add_argument("--n", type=int, required=True, help="series length")
        if queries:
            sp.add_argument("--queries", required=True)
        sp.add_argument("--workers", type=int, default=workers)

    b = sub.add_parser("build", help="learn a summarizer and build an index snapshot")
    common(b, queries=False)
    b.add_argument("--count", type=int, default=0, help="series count (0 = infer)")
    b.add_argument("--summarizer", choices=("sfa", "sax"), default="sfa")
    b.add_argument("--l", type=int, default=16)
    b.add_argument("--alphabet", type=int, default=256)
    b.add_argument("--sample", type=float, default=0.01)
    b.add_argument("--binning", choices=("ew", "ed"), default="ew")
    b.add_argument("--leaf-size", type=int, default=20000)
    b.add_argument("--initial-cardinality", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--model-out")
    b.add_argument("--report", help="CSV with phase timings")
    b.add_argument("--audit", action="store_true")
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="exact k-NN through an index")
    q.add_argument("--index", required=True)
    common(q)
    q.add_argument("--k", type=int, default=1)
    q.add_argument("--out", default="-")
    q.add_argument("--audit", action="store_true")
    q.set_defaults(func=cmd_query)

    s = sub.add_parser("scan", help="exact k-NN by parallel scan")
    common(s)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_scan)

    t = sub.add_parser("tlb", help="tightness of lower bound grid")
    common(t)
    t.add_argument("--methods", default="sfa-ew,sfa-ed,isax")
    t.add_argument("--alphabets", default="4..256")
    t.add_argument("--l", type=int, default=16)
    t.add_argument("--sample", type=float, default=1.0)
    t.add_argument("--pairs", type=int, default=1000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    t.add_argument("--audit", action="store_true")
    t.set_defaults(func=cmd_tlb)

    g = sub.add_parser("gen", help="write a synthetic corpus")
    g.add_argument("--profile", choices=PROFILES, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--n", type=int, default=256)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except CliError as exc:
        print(f"sofa: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"sofa: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
