"""Benchmark harness: synthetic workloads, quality metrics, space model.

Quality of the approximate mode is summarized by the average
approximation ratio (AAR): for each query the reported diameters are
divided position-wise by the true ones and averaged, then averaged
again over queries.  Ground truth comes from the exact mode; full
enumeration is reserved for instances small enough to enumerate.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (Dataset, EnumerationLimitError, InvalidInputError, Query,
                   ResultEntry, ResultQueue)
from .index import Index, IndexConfig, build_index, sample_unit_vectors
from .oracle import (DEFAULT_ENUMERATION_LIMIT, candidates_within,
                     enumerate_candidates)
from .search import (QueryStats, SubsetDedupe, UNSATISFIABLE,
                     candidate_buckets, extract_subset, search)


# --- synthetic workloads ----------------------------------------------------

@dataclass
class SyntheticSpec:
    """Shape of a generated dataset: n points, dimension, vocabulary size,
    distinct tags per point, coordinate range, seed."""
    n: int
    dimension: int
    vocab: int
    tags: int = 1
    coord_range: tuple[float, float] = (0.0, 10_000.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.dimension < 1 or self.vocab < 1:
            raise InvalidInputError("n, dimension and vocab must be positive")
        if not 1 <= self.tags <= self.vocab:
            raise InvalidInputError("tags must be in [1, vocab]")
        lo, hi = self.coord_range
        if not hi > lo:
            raise InvalidInputError("coord_range must be increasing")


def _sample_distinct_tags(rng, n, vocab, tags):
    if tags == 1:
        return rng.integers(0, vocab, size=(n, 1))
    if tags > vocab // 2:
        # Rejection would thrash when tags is close to vocab; rank random
        # keys instead (still uniform without replacement).
        out = np.empty((n, tags), dtype=np.int64)
        step = 4096
        for start in range(0, n, step):
            stop = min(start + step, n)
            keys = rng.random((stop - start, vocab))
            out[start:stop] = np.argsort(keys, axis=1)[:, :tags]
        return out
    draws = rng.integers(0, vocab, size=(n, tags))
    while True:
        ordered = np.sort(draws, axis=1)
        bad = (np.diff(ordered, axis=1) == 0).any(axis=1)
        if not bad.any():
            return draws
        draws[bad] = rng.integers(0, vocab, size=(int(bad.sum()), tags))


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Uniform coordinates plus uniformly drawn distinct tags per point."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.coord_range
    coords = rng.uniform(lo, hi, size=(spec.n, spec.dimension))
    tags = _sample_distinct_tags(rng, spec.n, spec.vocab, spec.tags)
    names = [f"k{i}" for i in range(spec.vocab)]
    ids = np.arange(spec.n, dtype=np.int64)
    return Dataset(ids, coords, [row.tolist() for row in tags], names)


def gen_queries(dataset: Dataset, q: int, count: int, seed: int) -> list[Query]:
    """`count` queries of q distinct keywords drawn from the used vocabulary."""
    vocab = sorted(dataset.dictionary)
    if q < 1 or q > len(vocab):
        raise InvalidInputError(
            f"q must be in [1, {len(vocab)}] for this dataset")
    if count < 0:
        raise InvalidInputError("count must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        picks = rng.choice(len(vocab), size=q, replace=False)
        out.append(Query(tuple(int(vocab[p]) for p in picks)))
    return out


# --- quality metrics --------------------------------------------------------

@dataclass
class AarResult:
    value: float
    queries: int
    skipped_infinite: int

    def __float__(self):
        return self.value


def avg_approx_ratio(true_diameters, reported_diameters) -> AarResult:
    """Mean over queries of the mean position-wise diameter ratio.

    Each element of the two arguments is one query's ascending diameter
    list; the lists of a pair must have equal length.  A position with a
    zero true diameter and non-zero reported diameter yields an infinite
    ratio; such queries are excluded from the mean and counted.
    """
    if len(true_diameters) != len(reported_diameters):
        raise InvalidInputError("need one reported list per true list")
    ratios = []
    skipped = 0
    for truth, reported in zip(true_diameters, reported_diameters):
        if len(truth) != len(reported):
            raise InvalidInputError(
                "diameter lists of one query differ in length")
        if len(truth) == 0:
            raise InvalidInputError("empty diameter list")
        acc = []
        infinite = False
        for t, r in zip(truth, reported):
            if t == 0.0:
                if r == 0.0:
                    acc.append(1.0)
                else:
                    infinite = True
                    break
            else:
                acc.append(r / t)
        if infinite:
            skipped += 1
            continue
        ratios.append(sum(acc) / len(acc))
    if not ratios:
        return AarResult(math.nan, 0, skipped)
    return AarResult(sum(ratios) / len(ratios), len(ratios), skipped)


# --- pruning measurement ----------------------------------------------------

@dataclass
class PruningReport:
    """Share of the candidate universe the scale tables expose to the queue."""
    ratio: float
    explored: int
    universe: int
    per_scale: list[int]
    terminated_scale: int | None
    offer_log: list | None = None


def _pack_rows(rows: np.ndarray, base: int) -> np.ndarray:
    codes = rows[:, 0].astype(np.int64)
    for col in range(1, rows.shape[1]):
        codes = codes * base + rows[:, col]
    return codes


def _unpack_code(code: int, q: int, base: int) -> list[int]:
    out = []
    for _ in range(q):
        code, r = divmod(code, base)
        out.append(int(r))
    out.reverse()
    return out


def pruning_ratio(index: Index, dataset: Dataset, query: Query, k: int = 1,
                  limit: int = DEFAULT_ENUMERATION_LIMIT,
                  keep_log: bool = False) -> PruningReport:
    """Distinct candidates surfaced by bucket subsets over all probed
    scales, divided by the total number of minimal covering sets.

    The join threshold is held open while counting (threshold pruning
    changes which tuples are walked, never which sets exist in a
    subset), while the queue still drives scale termination exactly as
    in a live run.  The final full-dataset fallback is not part of the
    scale tables and is excluded from the numerator.
    """
    universe = enumerate_candidates(dataset, query, limit)
    if universe.count == 0:
        raise InvalidInputError("query has no candidates")
    q = query.q
    # Candidate sets are counted as packed sorted-rank codes; sets smaller
    # than q are padded with the out-of-range sentinel value n.
    base = dataset.n + 1
    packable = q * math.log2(base) <= 62
    queue = ResultQueue(k)
    dedupe = SubsetDedupe(index.config.seed)
    stats = QueryStats()
    offered_codes = np.empty(0, dtype=np.int64)
    offered_tuples: set = set()
    per_scale: list[int] = []
    log: list | None = [] if keep_log else None
    terminated = None

    active = np.zeros(dataset.n_points, dtype=bool)
    for kw in query.keywords:
        active[dataset.rank_of(index.kp_list(kw))] = True

    def count_offered() -> int:
        return offered_codes.size if packable else len(offered_tuples)

    for s in range(index.n_scales):
        before = count_offered()
        for bucket in candidate_buckets(index, s, query):
            sub = extract_subset(index.bucket_points(s, int(bucket)), active,
                                 dataset, dedupe, stats)
            if sub is None or sub.size == 0:
                continue
            local = candidates_within(dataset, query, sub, limit)
            if local is None or local.count == 0:
                continue
            n_full = local.full_rows.shape[0]
            rows = local.full_rows
            if local.small_sets:
                pad = np.full((len(local.small_sets), q), dataset.n,
                              dtype=np.int64)
                for j, ranks in enumerate(local.small_sets):
                    ordered = sorted(ranks)
                    pad[j, :len(ordered)] = ordered
                rows = np.vstack([rows, pad]) if n_full else pad
            if packable:
                codes = np.unique(_pack_rows(rows, base))
                new = np.setdiff1d(codes, offered_codes, assume_unique=True)
                if log is not None:
                    for code in new:
                        ranks = [r for r in _unpack_code(int(code), q, base)
                                 if r < dataset.n]
                        ids = dataset.ids_at(np.asarray(ranks, dtype=np.int64))
                        log.append((s, tuple(int(v) for v in ids)))
                offered_codes = np.union1d(offered_codes, new)
            else:
                for row in rows:
                    key = tuple(int(r) for r in row if r < dataset.n)
                    if key not in offered_tuples:
                        offered_tuples.add(key)
                        if log is not None:
                            ids = dataset.ids_at(
                                np.asarray(key, dtype=np.int64))
                            log.append((s, tuple(int(v) for v in ids)))
            # Feed the queue in ascending diameter order so termination
            # fires exactly when a live run would stop.
            diams = local.diameters()
            for pos in np.argsort(diams, kind="stable"):
                dval = float(diams[pos])
                if len(queue) >= queue.capacity and dval > queue.r_k:
                    break
                if pos < n_full:
                    ranks = local.full_rows[pos]
                else:
                    ranks = np.asarray(sorted(local.small_sets[pos - n_full]),
                                       dtype=np.int64)
                ids = dataset.ids_at(ranks)
                queue.insert(ResultEntry(
                    tuple(int(v) for v in np.sort(ids)), dval))
        per_scale.append(count_offered() - before)
        if queue.r_k <= index.base_width * float(2 ** s) / 2.0:
            terminated = s
            break
    explored = count_offered()
    return PruningReport(explored / universe.count, explored, universe.count,
                         per_scale, terminated, log)


# --- approximation model ----------------------------------------------------

@dataclass
class EmpiricalDistributions:
    """Sampled ingredients of the coverage model for one query."""
    keyword_mass: dict[int, float]
    bin_upper: np.ndarray     # max candidate diameter per histogram bin
    bin_counts: np.ndarray    # candidates per bin
    containment: np.ndarray   # estimated one-vector containment per bin
    total: int


def estimate_distributions(dataset: Dataset, query: Query, w: float,
                           samples: int = 200, seed: int = 0, bins: int = 64,
                           max_per_bucket: int = 10,
                           limit: int = DEFAULT_ENUMERATION_LIMIT,
                           universe=None) -> EmpiricalDistributions:
    """Diameter histogram plus a per-bin bin-containment probability.

    Containment of a candidate is the fraction of random unit
    directions on which all its points land in one width-w bin.  At
    most `max_per_bucket` candidates per histogram bin are sampled.
    """
    if w <= 0:
        raise InvalidInputError("bin width must be positive")
    if universe is None:
        universe = enumerate_candidates(dataset, query, limit)
    if universe.count == 0:
        raise InvalidInputError("query has no candidates")
    kw_mass = {kw: dataset.keyword_ranks(kw).size / dataset.total_tags
               for kw in sorted(dataset.dictionary)}

    diams = universe.diameters()
    top = float(diams.max())
    edges = np.linspace(0.0, top if top > 0 else 1.0, bins + 1)
    which = np.clip(np.digitize(diams, edges[1:-1]), 0, bins - 1)

    rank_sets: list[list[np.ndarray]] = [[] for _ in range(bins)]
    n_full = universe.full_rows.shape[0]
    for idx in range(n_full):
        b = which[idx]
        if len(rank_sets[b]) < max_per_bucket:
            rank_sets[b].append(universe.full_rows[idx])
    for j, members in enumerate(universe.small_sets):
        b = which[n_full + j]
        if len(rank_sets[b]) < max_per_bucket:
            rank_sets[b].append(np.asarray(sorted(members), dtype=np.int64))

    rng = np.random.default_rng(seed)
    directions = sample_unit_vectors(dataset.dimension, max(samples, 1),
                                     int(rng.integers(0, 2 ** 31)))
    bin_counts = np.bincount(which, minlength=bins)
    containment = np.zeros(bins)
    bin_upper = np.zeros(bins)
    for b in range(bins):
        members = which == b
        if not members.any():
            continue
        bin_upper[b] = float(diams[members].max())
        fracs = []
        for ranks in rank_sets[b]:
            proj = dataset.coords_at(ranks) @ directions.T  # (pts, samples)
            lo = np.floor(proj.min(axis=0) / w)
            hi = np.floor(proj.max(axis=0) / w)
            fracs.append(float((lo == hi).mean()))
        containment[b] = float(np.mean(fracs)) if fracs else 0.0
    keep = bin_counts > 0
    return EmpiricalDistributions(kw_mass, bin_upper[keep], bin_counts[keep],
                                  containment[keep], universe.count)


def expected_explored(dist: EmpiricalDistributions, m: int) -> float:
    """Model estimate of candidates exposed by one table of m vectors."""
    return float(((dist.containment ** m) * dist.bin_counts).sum())


def approx_bound(dataset: Dataset, query: Query, m: int, w: float,
                 lam: float, samples: int = 200, seed: int = 0,
                 bins: int = 64, max_per_bucket: int = 10,
                 limit: int = DEFAULT_ENUMERATION_LIMIT) -> float:
    """Smallest diameter blow-up rho such that one table of m vectors
    with bin width w surfaces a candidate within rho times the best
    diameter with probability at least `lam`."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError("lam must lie in [0, 1]")
    if lam == 0.0:
        return 1.0
    universe = enumerate_candidates(dataset, query, limit)
    if universe.count == 0:
        raise InvalidInputError("query has no candidates")
    r_star = universe.min_diameter()
    if r_star == 0.0:
        # A zero-diameter optimum shares every bin with itself.
        return 1.0
    dist = estimate_distributions(dataset, query, w, samples, seed, bins,
                                  max_per_bucket, limit, universe=universe)
    p_hit = np.minimum(dist.containment ** m, 1.0)
    with np.errstate(divide="ignore"):
        log_miss = np.where(p_hit >= 1.0, -np.inf,
                            dist.bin_counts * np.log1p(-p_hit))
    prob = 1.0 - np.exp(np.cumsum(log_miss))
    hit = np.flatnonzero(prob >= lam)
    if hit.size == 0:
        return math.inf
    return float(dist.bin_upper[hit[0]] / r_star)


# --- space model ------------------------------------------------------------

ENTRY_BYTES = 4


def space_ratio(mode: str, n: int, d: int, u: int, t: float, m: int = 2,
                table_size: int = 10_000, scales: int = 5,
                entry_bytes: int = ENTRY_BYTES) -> float:
    """Index bytes over dataset bytes for the given shape.

    Components: keyword-point lists n*E*t; one hashtable holds 2**m
    entries per point (exact) or one (approximate); keyword-bucket
    lists u * table_size * log2(table_size) / 8 bytes.  Exact mode
    replicates all three per scale; approximate mode shares the
    keyword-point lists across its scale tables.
    """
    if mode not in ("exact", "approximate"):
        raise InvalidInputError("mode must be exact or approximate")
    kp = n * entry_bytes * t
    khb = u * table_size * math.log2(table_size) / 8.0
    data = (d + t) * n * entry_bytes
    if mode == "exact":
        table = (2 ** m) * n * entry_bytes
        total = scales * (kp + table + khb)
    else:
        table = n * entry_bytes
        total = kp + scales * (table + khb)
    return total / data


def space_report(index: Index, dataset: Dataset) -> dict:
    """Space model evaluated at the actual index/dataset parameters."""
    t = dataset.total_tags / dataset.n
    cfg = index.config
    ratio = space_ratio(cfg.mode, dataset.n, dataset.dimension,
                        len(dataset.dictionary), t, cfg.m, cfg.table_size,
                        cfg.scales)
    return {
        "mode": cfg.mode,
        "n": dataset.n,
        "d": dataset.dimension,
        "u": len(dataset.dictionary),
        "t": t,
        "ratio": ratio,
    }


# --- benchmark harness ------------------------------------------------------

CSV_COLUMNS = ["mode", "N", "d", "U", "t", "q", "k", "seed", "query_ms_mean",
               "AAR", "pruning_ratio", "subsets_explored", "buckets_scanned",
               "space_ratio"]


def _canon_mode(mode: str) -> str:
    if mode == "approx":
        return "approximate"
    return mode


@dataclass
class BenchCell:
    mode: str = "exact"
    n: int = 1000
    d: int = 8
    u: int = 100
    t: int = 1
    q: int = 3
    k: int = 1
    seed: int = 0
    queries: int = 50
    repetitions: int = 3
    m: int = 2
    scales: int = 5
    table_size: int = 10_000
    w0: float | None = None
    measure_aar: bool = True
    measure_pruning: bool = False

    @classmethod
    def from_dict(cls, raw: dict, defaults: dict | None = None) -> "BenchCell":
        merged = dict(defaults or {})
        merged.update(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(merged) - known
        if unknown:
            raise InvalidInputError(f"unknown plan fields: {sorted(unknown)}")
        return cls(**merged)


@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS,
                                    lineterminator="\n")
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def load_plan(path) -> list[BenchCell]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, list):
        cells, defaults = raw, {}
    elif isinstance(raw, dict):
        cells = raw.get("cells", [])
        defaults = raw.get("defaults", {})
    else:
        raise InvalidInputError("plan must be a JSON list or object")
    return [BenchCell.from_dict(c, defaults) for c in cells]


_dataset_cache: dict[tuple, Dataset] = {}


def _cached_dataset(spec: SyntheticSpec) -> Dataset:
    key = (spec.n, spec.dimension, spec.vocab, spec.tags, spec.coord_range,
           spec.seed)
    if key not in _dataset_cache:
        if len(_dataset_cache) > 4:
            _dataset_cache.clear()
        _dataset_cache[key] = gen_synthetic(spec)
    return _dataset_cache[key]


def _fmt(value, digits=6) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.{digits}f}"
    return str(value)


def run_cell(cell: BenchCell) -> dict:
    """Generate, build, query and summarize one plan cell."""
    mode = _canon_mode(cell.mode)
    spec = SyntheticSpec(cell.n, cell.d, cell.u, cell.t, seed=cell.seed)
    dataset = _cached_dataset(spec)
    config = IndexConfig(m=cell.m, scales=cell.scales, w0=cell.w0,
                         table_size=cell.table_size, seed=cell.seed,
                         mode=mode)
    index = build_index(dataset, config)
    exact_index = index if mode == "exact" else None

    def need_exact() -> Index:
        nonlocal exact_index
        if exact_index is None:
            exact_cfg = IndexConfig(m=cell.m, scales=cell.scales, w0=cell.w0,
                                    table_size=cell.table_size,
                                    seed=cell.seed, mode="exact")
            exact_index = build_index(dataset, exact_cfg)
        return exact_index

    queries = gen_queries(dataset, cell.q, cell.queries, cell.seed + 1)
    times_ms = []
    truth_lists = []
    reported_lists = []
    pruning_vals = []
    subsets = []
    buckets = []
    for query in queries:
        stats = QueryStats()
        elapsed = []
        result = None
        for _ in range(max(1, cell.repetitions)):
            stats = QueryStats()
            t0 = time.perf_counter()
            result = search(index, dataset, query, cell.k, stats=stats)
            elapsed.append(time.perf_counter() - t0)
        times_ms.append(1000.0 * sum(elapsed) / len(elapsed))
        subsets.append(stats.subsets_explored)
        buckets.append(stats.buckets_scanned)
        if result is UNSATISFIABLE:
            continue
        if cell.measure_aar:
            reported = result.diameters()
            if mode == "exact":
                truth = list(reported)
            else:
                truth = search(need_exact(), dataset, query,
                               cell.k).diameters()
            depth = min(len(truth), len(reported))
            if depth:
                truth_lists.append(truth[:depth])
                reported_lists.append(reported[:depth])
        if cell.measure_pruning:
            try:
                rep = pruning_ratio(need_exact(), dataset, query, k=cell.k)
                pruning_vals.append(rep.ratio)
            except EnumerationLimitError:
                pass

    aar = None
    if cell.measure_aar and truth_lists:
        aar = avg_approx_ratio(truth_lists, reported_lists).value
    return {
        "mode": mode,
        "N": cell.n,
        "d": cell.d,
        "U": cell.u,
        "t": cell.t,
        "q": cell.q,
        "k": cell.k,
        "seed": cell.seed,
        "query_ms_mean": _fmt(sum(times_ms) / len(times_ms), 3)
                         if times_ms else "",
        "AAR": _fmt(aar),
        "pruning_ratio": _fmt(sum(pruning_vals) / len(pruning_vals))
                         if pruning_vals else "",
        "subsets_explored": _fmt(sum(subsets) / len(subsets), 2)
                            if subsets else "",
        "buckets_scanned": _fmt(sum(buckets) / len(buckets), 2)
                           if buckets else "",
        "space_ratio": _fmt(space_report(index, dataset)["ratio"]),
    }


def run_benchmark(cells, out_path=None) -> BenchReport:
    """Run every cell; failures become error rows and the run continues."""
    report = BenchReport()
    for pos, cell in enumerate(cells):
        try:
            report.rows.append(run_cell(cell))
        except Exception as exc:  # noqa: BLE001 - bench must keep going
            report.errors.append(f"cell {pos}: {exc}")
            report.rows.append({
                "mode": _canon_mode(cell.mode), "N": cell.n, "d": cell.d,
                "U": cell.u, "t": cell.t, "q": cell.q, "k": cell.k,
                "seed": cell.seed, "query_ms_mean": "", "AAR": "",
                "pruning_ratio": "", "subsets_explored": "",
                "buckets_scanned": "", "space_ratio": "",
            })
    if out_path is not None:
        report.to_csv(out_path)
    return report


# --- kernel backend benchmark ------------------------------------------------

def bench_kernels(points: int = 2000, dim: int = 16, tuples: int = 100_000,
                  q: int = 3, reps: int = 3, seed: int = 0) -> list[dict]:
    """Time each kernel under every available backend."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 10_000, size=(points, dim))
    b = rng.uniform(0, 10_000, size=(points, dim))
    rows_idx = rng.integers(0, points, size=(tuples, q)).astype(np.int64)
    out = []
    for backend, funcs in kernels.implementations().items():
        cases = {
            "pairwise_distances": lambda f=funcs["pairwise_distances"]: f(a, b),
            "pdist_max": lambda f=funcs["pdist_max"]: f(a[:600]),
            "tuple_diameters": lambda f=funcs["tuple_diameters"]: f(a, rows_idx),
        }
        for name, call in cases.items():
            call()  # warm-up; also triggers JIT compilation
            best = math.inf
            for _ in range(reps):
                t0 = time.perf_counter()
                call()
                best = min(best, time.perf_counter() - t0)
            out.append({"backend": backend, "kernel": name,
                        "best_ms": 1000.0 * best})
    return out
