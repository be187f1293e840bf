"""Command line front end.

Subcommands: gen, build, query, bench, verify, kernel-bench.

Dataset files are line oriented: ``<id>,<x1>,...,<xd>;<kw1>,<kw2>,...``
with a single ';' separating coordinates from the comma-separated
keywords.  Exit codes: 0 success, 1 invalid input, 2 unsatisfiable
query, 3 internal error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (BenchCell, SyntheticSpec, bench_kernels, gen_queries,
                    gen_synthetic, load_plan, run_benchmark)
from .core import (Dataset, EnumerationLimitError, InvalidInputError, Query)
from .index import IndexConfig, build_index
from .oracle import DEFAULT_ENUMERATION_LIMIT, brute_force_topk
from .persistence import IndexIntegrityError, open_index, save_index
from .search import UNSATISFIABLE, search

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_UNSATISFIABLE = 2
EXIT_INTERNAL = 3


# --- dataset files ------------------------------------------------------------

def load_dataset_file(path) -> Dataset:
    """Parse a dataset file; keyword names are interned in first-seen order."""
    if path == "-":
        lines = sys.stdin.read().splitlines()
    else:
        p = Path(path)
        if not p.is_file():
            raise InvalidInputError(f"no such dataset file: {path}")
        lines = p.read_text(encoding="utf-8").splitlines()
    ids: list[int] = []
    rows: list[list[float]] = []
    kw_lists: list[list[int]] = []
    names: list[str] = []
    vocab: dict[str, int] = {}
    width = None
    for ln, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if line.count(";") != 1:
            raise InvalidInputError(
                f"line {ln}: expected exactly one ';' between coordinates "
                f"and keywords")
        left, right = line.split(";")
        head = left.split(",")
        if len(head) < 2:
            raise InvalidInputError(
                f"line {ln}: need a point id and at least one coordinate")
        try:
            pid = int(head[0])
        except ValueError:
            raise InvalidInputError(f"line {ln}: bad point id {head[0]!r}") \
                from None
        try:
            coords = [float(x) for x in head[1:]]
        except ValueError:
            raise InvalidInputError(f"line {ln}: bad coordinate") from None
        if width is None:
            width = len(coords)
        elif len(coords) != width:
            raise InvalidInputError(
                f"line {ln}: expected {width} coordinates, got {len(coords)}")
        kws = right.split(",")
        if any(not name for name in kws):
            raise InvalidInputError(f"line {ln}: empty keyword name")
        chosen = []
        for name in kws:
            if name not in vocab:
                vocab[name] = len(names)
                names.append(name)
            chosen.append(vocab[name])
        ids.append(pid)
        rows.append(coords)
        kw_lists.append(chosen)
    if not ids:
        raise InvalidInputError("dataset file has no records")
    return Dataset(ids, rows, kw_lists, names)


def write_dataset_file(dataset: Dataset, out) -> None:
    def emit(fh):
        for rank in range(dataset.n):
            pid = int(dataset.ids[rank])
            coords = ",".join(repr(float(c))
                              for c in dataset.coords_at([rank])[0])
            kws = ",".join(dataset.keyword_names[k]
                           for k in sorted(dataset.keywords_at(rank)))
            fh.write(f"{pid},{coords};{kws}\n")

    if out == "-":
        emit(sys.stdout)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            emit(fh)


# --- argument plumbing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise InvalidInputError(message)


def _canon_mode(mode: str) -> str:
    return "approximate" if mode == "approx" else mode


def _add_index_flags(p) -> None:
    p.add_argument("--m", type=int, default=2,
                   help="projection vectors per scale (default 2)")
    p.add_argument("--scales", type=int, default=5,
                   help="number of scales (default 5)")
    p.add_argument("--table-size", type=int, default=10_000,
                   help="hash table size (default 10000)")
    p.add_argument("--mode", choices=("exact", "approx"), default="exact",
                   help="search mode (default exact)")
    p.add_argument("--w0", type=float, default=None,
                   help="finest bin width (default: derived from the data)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="promish",
                     description="top-k nearest keyword-set search")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset file")
    p.add_argument("--size", type=int, required=True, help="number of points")
    p.add_argument("--dim", type=int, required=True, help="dimensions")
    p.add_argument("--dict", type=int, required=True, dest="dict_size",
                   help="vocabulary size")
    p.add_argument("--tags", type=int, default=1, help="keywords per point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output file ('-' = stdout)")

    p = sub.add_parser("build", help="build an index and save it to disk")
    p.add_argument("data", help="dataset file")
    _add_index_flags(p)
    p.add_argument("--out", required=True, help="index directory to create")

    p = sub.add_parser("query", help="run one query")
    p.add_argument("target", help="index directory or dataset file")
    p.add_argument("--keywords", required=True,
                   help="comma-separated keyword names")
    p.add_argument("--k", type=int, default=1)
    _add_index_flags(p)
    # stored mode wins when querying a saved index the flag was not given for
    p.set_defaults(mode=None)
    p.add_argument("--out", default="-", help="output file ('-' = stdout)")

    p = sub.add_parser("bench", help="run a benchmark plan")
    p.add_argument("plan", help="JSON plan file")
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("verify",
                       help="check exact answers against full enumeration")
    p.add_argument("data", help="dataset file")
    p.add_argument("--queries", type=int, default=20,
                   help="random queries to check (default 20)")
    p.add_argument("--q", type=int, default=3, help="keywords per query")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--keywords", default=None,
                   help="check this single query instead of random ones")
    p.add_argument("--limit", type=int, default=DEFAULT_ENUMERATION_LIMIT,
                   help="enumeration budget per query")
    _add_index_flags(p)

    p = sub.add_parser("kernel-bench",
                       help="compare kernel backends on synthetic inputs")
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--tuples", type=int, default=100_000)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    return parser


# --- commands -----------------------------------------------------------------

def _cmd_gen(args) -> int:
    spec = SyntheticSpec(args.size, args.dim, args.dict_size, args.tags,
                         seed=args.seed)
    write_dataset_file(gen_synthetic(spec), args.out)
    return EXIT_OK


def _config_from(args) -> IndexConfig:
    return IndexConfig(m=args.m, scales=args.scales, w0=args.w0,
                       table_size=args.table_size, seed=args.seed,
                       mode=_canon_mode(args.mode or "exact"))


def _cmd_build(args) -> int:
    dataset = load_dataset_file(args.data)
    index = build_index(dataset, _config_from(args))
    save_index(index, dataset, args.out)
    print(f"saved {index.mode} index for {dataset.n} points to {args.out}")
    return EXIT_OK


def _cmd_query(args) -> int:
    names = [n for n in args.keywords.split(",") if n]
    if not names:
        raise InvalidInputError("--keywords must name at least one keyword")
    target = Path(args.target)
    if target.is_dir():
        handle = open_index(target)
        index, source = handle, handle
        if args.mode and _canon_mode(args.mode) != handle.mode:
            raise InvalidInputError(
                f"index at {target} was built in {handle.mode} mode")
    else:
        source = load_dataset_file(args.target)
        index = build_index(source, _config_from(args))
    query = Query.from_names(source, names)
    result = search(index, source, query, args.k)
    if result is UNSATISFIABLE:
        print("unsatisfiable: some keyword matches no point", file=sys.stderr)
        return EXIT_UNSATISFIABLE

    def emit(fh):
        for pos, entry in enumerate(result.entries, 1):
            joined = ",".join(str(i) for i in entry.ids)
            fh.write(f"{pos}\t{entry.diameter:.6f}\t{joined}\n")

    if args.out == "-":
        emit(sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            emit(fh)
    return EXIT_OK


def _cmd_bench(args) -> int:
    cells = load_plan(args.plan)
    report = run_benchmark(cells, args.out)
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"wrote {len(report.rows)} rows to {args.out} "
          f"({len(report.errors)} failed cells)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    dataset = load_dataset_file(args.data)
    config = _config_from(args)
    if config.mode != "exact":
        raise InvalidInputError("verify checks the exact mode")
    index = build_index(dataset, config)
    if args.keywords:
        names = [n for n in args.keywords.split(",") if n]
        queries = [Query.from_names(dataset, names)]
    else:
        queries = gen_queries(dataset, args.q, args.queries, args.seed + 1)
    checked = skipped = 0
    for pos, query in enumerate(queries, 1):
        try:
            truth = brute_force_topk(dataset, query, args.k, args.limit)
        except EnumerationLimitError:
            print(f"query {pos}: skipped (enumeration limit)")
            skipped += 1
            continue
        got = search(index, dataset, query, args.k)
        if truth is None:
            ok = got is UNSATISFIABLE
        else:
            ok = got is not UNSATISFIABLE and \
                [e.ids for e in got.entries] == [e.ids for e in truth.entries] and \
                got.diameters() == truth.diameters()
        if not ok:
            print(f"query {pos} {list(query.keywords)}: MISMATCH")
            print(f"  reference: {truth}")
            print(f"  reported:  {got}")
            return EXIT_INTERNAL
        checked += 1
        print(f"query {pos}: ok ({0 if truth is None else len(truth)} results)")
    print(f"verified {checked} queries, {skipped} skipped: all ok")
    return EXIT_OK


def _cmd_kernel_bench(args) -> int:
    rows = bench_kernels(args.points, args.dim, args.tuples, reps=args.reps,
                         seed=args.seed)
    print(f"{'backend':<8} {'kernel':<20} {'best_ms':>10}")
    for row in rows:
        print(f"{row['backend']:<8} {row['kernel']:<20} "
              f"{row['best_ms']:>10.3f}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "build": _cmd_build,
    "query": _cmd_query,
    "bench": _cmd_bench,
    "verify": _cmd_verify,
    "kernel-bench": _cmd_kernel_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return _COMMANDS[args.command](args)
    except (InvalidInputError, IndexIntegrityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BrokenPipeError:
        return EXIT_OK
    except EnumerationLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
