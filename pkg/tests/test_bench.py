"""Benchmark harness: generators, quality metrics, space model, CSV runs."""

import csv
import json
import math

import numpy as np
import pytest

from promish import (
    Dataset,
    IndexConfig,
    InvalidInputError,
    Query,
    SyntheticSpec,
    approx_bound,
    avg_approx_ratio,
    build_index,
    gen_queries,
    gen_synthetic,
    pruning_ratio,
    run_benchmark,
    space_ratio,
)
from promish.bench import (
    BenchCell,
    CSV_COLUMNS,
    bench_kernels,
    estimate_distributions,
    expected_explored,
    load_plan,
    run_cell,
    space_report,
)


# --- synthetic data ---------------------------------------------------------

def test_spec_validation():
    with pytest.raises(InvalidInputError):
        SyntheticSpec(0, 2, 5)
    with pytest.raises(InvalidInputError):
        SyntheticSpec(10, 2, 5, tags=6)
    with pytest.raises(InvalidInputError):
        SyntheticSpec(10, 2, 5, coord_range=(5.0, 5.0))


def test_gen_synthetic_shape_and_determinism():
    spec = SyntheticSpec(n=300, dimension=4, vocab=12, tags=2, seed=9)
    ds = gen_synthetic(spec)
    again = gen_synthetic(spec)
    assert ds.n == 300 and ds.dimension == 4
    assert list(ds.ids) == list(range(300))
    assert np.array_equal(ds.coords, again.coords)
    assert ds.coords.min() >= 0.0 and ds.coords.max() <= 10_000.0
    for r in range(ds.n):
        kws = ds.keywords_at(r)
        assert len(kws) == 2
        assert again.keywords_at(r) == kws
    assert not np.array_equal(
        ds.coords, gen_synthetic(SyntheticSpec(300, 4, 12, 2, seed=10)).coords)


def test_keyword_usage_is_binomially_flat():
    # U=1000, N=1e5, t=1: each keyword's count should hug N/U
    ds = gen_synthetic(SyntheticSpec(n=100_000, dimension=2, vocab=1000,
                                     tags=1, seed=3))
    sizes = np.array([ds.keyword_ranks(kw).size for kw in range(1000)])
    p = 1.0 / 1000.0
    mean = 100_000 * p
    sigma = math.sqrt(100_000 * p * (1 - p))
    within = np.abs(sizes - mean) <= 3 * sigma
    assert within.mean() >= 0.99


def test_gen_queries_contract():
    ds = gen_synthetic(SyntheticSpec(n=200, dimension=2, vocab=10, seed=1))
    queries = gen_queries(ds, q=3, count=25, seed=5)
    assert len(queries) == 25
    assert queries == gen_queries(ds, q=3, count=25, seed=5)
    for qu in queries:
        assert qu.q == 3
        assert set(qu.keywords) <= ds.dictionary
    full = gen_queries(ds, q=len(ds.dictionary), count=1, seed=0)[0]
    assert set(full.keywords) == ds.dictionary
    with pytest.raises(InvalidInputError):
        gen_queries(ds, q=len(ds.dictionary) + 1, count=1, seed=0)


# --- AAR --------------------------------------------------------------------

def test_aar_exact_reporting_is_one():
    truth = [[1.0, 2.0], [3.0, 4.0]]
    assert float(avg_approx_ratio(truth, truth)) == 1.0


def test_aar_hand_value():
    out = avg_approx_ratio([[2.0]], [[3.0]])
    assert float(out) == 1.5
    assert out.queries == 1 and out.skipped_infinite == 0


def test_aar_zero_over_zero_counts_as_one():
    assert float(avg_approx_ratio([[0.0, 2.0]], [[0.0, 3.0]])) == 1.25


def test_aar_infinite_queries_are_excluded_and_counted():
    out = avg_approx_ratio([[0.0], [2.0]], [[1.0], [2.0]])
    assert out.skipped_infinite == 1
    assert out.queries == 1
    assert float(out) == 1.0
    empty = avg_approx_ratio([[0.0]], [[5.0]])
    assert math.isnan(empty.value) and empty.skipped_infinite == 1


def test_aar_shape_errors():
    with pytest.raises(InvalidInputError):
        avg_approx_ratio([[1.0]], [])
    with pytest.raises(InvalidInputError):
        avg_approx_ratio([[1.0, 2.0]], [[1.0]])
    with pytest.raises(InvalidInputError):
        avg_approx_ratio([[]], [[]])


# --- pruning ratio ----------------------------------------------------------

def test_pruning_ratio_colocated_candidate_is_total():
    # the one and only candidate sits in a single shared bucket
    ds = Dataset(
        ids=range(6),
        coords=[[5.0, 5.0]] * 3 + [[50.0, 1.0], [80.0, 40.0], [20.0, 70.0]],
        keyword_lists=[[0], [1], [2], [3], [3], [3]],
        keyword_names=["a", "b", "c", "junk"],
    )
    idx = build_index(ds, IndexConfig(seed=2))
    rep = pruning_ratio(idx, ds, Query((0, 1, 2)), k=1)
    assert rep.universe == 1
    assert rep.explored == 1
    assert rep.ratio == 1.0
    assert rep.terminated_scale == 0


def test_pruning_ratio_bounds_and_log_replay():
    ds = gen_synthetic(SyntheticSpec(n=300, dimension=2, vocab=10, tags=1,
                                     seed=7))
    idx = build_index(ds, IndexConfig(seed=7))
    rep = pruning_ratio(idx, ds, Query((0, 1, 2)), k=1, keep_log=True)
    assert 0.0 < rep.ratio <= 1.0
    assert rep.explored <= rep.universe
    assert sum(rep.per_scale) == rep.explored
    assert rep.offer_log is not None
    assert len(rep.offer_log) == rep.explored
    assert len({ids for _, ids in rep.offer_log}) == rep.explored
    scales_in_log = {s for s, _ in rep.offer_log}
    assert all(0 <= s < idx.n_scales for s in scales_in_log)


def test_pruning_ratio_grows_with_dimension():
    # distances concentrate in high dimension, so the bins filter less
    ratios = {}
    for d in (2, 32):
        ds = gen_synthetic(SyntheticSpec(n=500, dimension=d, vocab=20,
                                         tags=1, seed=11))
        idx = build_index(ds, IndexConfig(seed=11))
        vals = []
        for qu in gen_queries(ds, q=3, count=5, seed=13):
            vals.append(pruning_ratio(idx, ds, qu, k=1).ratio)
        ratios[d] = float(np.mean(vals))
    assert ratios[2] < ratios[32]


def test_pruning_ratio_needs_candidates():
    ds = gen_synthetic(SyntheticSpec(n=50, dimension=2, vocab=5, seed=1))
    idx = build_index(ds, IndexConfig(seed=1))
    with pytest.raises(InvalidInputError):
        pruning_ratio(idx, ds, Query((0, 1, 99)))


# --- approximation model ----------------------------------------------------

def _model_instance():
    ds = gen_synthetic(SyntheticSpec(n=80, dimension=4, vocab=5, tags=1,
                                     seed=17, coord_range=(0.0, 100.0)))
    return ds, Query((0, 1))


def test_distributions_are_well_formed():
    ds, query = _model_instance()
    dist = estimate_distributions(ds, query, w=25.0, samples=64, seed=3)
    assert abs(sum(dist.keyword_mass.values()) - 1.0) < 1e-12
    assert dist.bin_counts.sum() == dist.total
    assert np.all((dist.containment >= 0.0) & (dist.containment <= 1.0))
    assert np.all(np.diff(dist.bin_upper) > 0)
    again = estimate_distributions(ds, query, w=25.0, samples=64, seed=3)
    assert np.array_equal(dist.containment, again.containment)


def test_expected_explored_shrinks_with_more_vectors():
    ds, query = _model_instance()
    dist = estimate_distributions(ds, query, w=25.0, samples=64, seed=3)
    e1 = expected_explored(dist, 1)
    e2 = expected_explored(dist, 2)
    e4 = expected_explored(dist, 4)
    assert e1 >= e2 >= e4
    assert e1 <= dist.total


def test_approx_bound_basics():
    ds, query = _model_instance()
    assert approx_bound(ds, query, m=2, w=25.0, lam=0.0) == 1.0
    lo = approx_bound(ds, query, m=2, w=25.0, lam=0.5, samples=64, seed=3)
    hi = approx_bound(ds, query, m=2, w=25.0, lam=0.95, samples=64, seed=3)
    assert lo >= 1.0
    assert lo <= hi
    with pytest.raises(InvalidInputError):
        approx_bound(ds, query, m=2, w=25.0, lam=1.5)
    with pytest.raises(InvalidInputError):
        approx_bound(ds, query, m=2, w=-1.0, lam=0.5)


# --- space model ------------------------------------------------------------

EXACT_TABLE = {
    8: ["2.8", "3.0", "2.8", "2.8"],
    16: ["1.4", "1.6", "1.5", "1.5"],
    32: ["0.7", "0.8", "0.8", "0.8"],
    64: ["0.4", "0.4", "0.4", "0.4"],
    128: ["0.2", "0.2", "0.2", "0.2"],
}
APPROX_TABLE = {
    8: ["0.7", "0.9", "0.7", "0.7"],
    16: ["0.4", "0.5", "0.4", "0.4"],
    32: ["0.2", "0.2", "0.2", "0.2"],
    64: ["0.09", "0.1", "0.09", "0.09"],
    128: ["0.05", "0.06", "0.05", "0.05"],
}
TABLE_COLS = [(10 ** 7, 100), (10 ** 7, 1000), (10 ** 8, 100), (10 ** 8, 1000)]


@pytest.mark.parametrize("mode,table",
                         [("exact", EXACT_TABLE), ("approximate", APPROX_TABLE)])
def test_space_ratio_reproduces_reference_grid(mode, table):
    # reference values carry one or two printed decimals; match within
    # one unit of the last printed digit
    for d, prints in table.items():
        for (n, u), printed in zip(TABLE_COLS, prints):
            got = space_ratio(mode, n, d, u, t=1)
            decimals = len(printed.split(".")[1])
            assert abs(got - float(printed)) <= 10.0 ** -decimals + 1e-12, (
                mode, d, n, u, got, printed)


def test_space_ratio_decreases_with_dimension():
    for mode in ("exact", "approximate"):
        vals = [space_ratio(mode, 10 ** 7, d, 100, 1)
                for d in (8, 16, 32, 64, 128)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_space_ratio_validates_mode():
    with pytest.raises(InvalidInputError):
        space_ratio("fuzzy", 100, 2, 10, 1)


def test_space_report_matches_formula():
    ds = gen_synthetic(SyntheticSpec(n=120, dimension=4, vocab=10, tags=2,
                                     seed=5))
    idx = build_index(ds, IndexConfig(seed=5))
    rep = space_report(idx, ds)
    assert rep["mode"] == "exact" and rep["n"] == 120 and rep["d"] == 4
    assert rep["ratio"] == space_ratio("exact", 120, 4, rep["u"], rep["t"])


# --- plan execution ---------------------------------------------------------

def test_empty_plan_yields_header_only_csv(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text("[]", encoding="utf-8")
    out = tmp_path / "out.csv"
    report = run_benchmark(load_plan(plan), out)
    assert report.rows == [] and report.errors == []
    text = out.read_text(encoding="utf-8")
    assert text == ",".join(CSV_COLUMNS) + "\n"


def test_single_cell_plan_yields_single_row(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps([{"n": 150, "d": 2, "u": 8, "q": 2,
                                 "queries": 4, "repetitions": 1}]),
                    encoding="utf-8")
    out = tmp_path / "out.csv"
    report = run_benchmark(load_plan(plan), out)
    assert len(report.rows) == 1 and not report.errors
    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    assert row["mode"] == "exact" and row["N"] == "150" and row["d"] == "2"
    assert float(row["AAR"]) == 1.0          # exact mode reports the truth
    assert float(row["query_ms_mean"]) > 0.0
    assert float(row["space_ratio"]) > 0.0
    assert float(row["subsets_explored"]) >= 0.0


def test_plan_defaults_merge_and_unknown_fields(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({
        "defaults": {"n": 100, "d": 2, "u": 8, "queries": 2,
                     "repetitions": 1},
        "cells": [{}, {"mode": "approx", "q": 2}],
    }), encoding="utf-8")
    cells = load_plan(plan)
    assert len(cells) == 2
    assert cells[0].n == 100 and cells[1].mode == "approx"
    with pytest.raises(InvalidInputError):
        BenchCell.from_dict({"size": 10})
    bad = tmp_path / "bad.json"
    bad.write_text('"just a string"', encoding="utf-8")
    with pytest.raises(InvalidInputError):
        load_plan(bad)


def test_failed_cell_becomes_error_row(tmp_path):
    # q larger than the vocabulary cannot build queries
    cells = [BenchCell(n=60, d=2, u=3, q=10, queries=2, repetitions=1)]
    out = tmp_path / "out.csv"
    report = run_benchmark(cells, out)
    assert len(report.errors) == 1
    row = report.rows[0]
    assert row["N"] == 60 and row["q"] == 10
    assert row["AAR"] == "" and row["query_ms_mean"] == ""


def test_rerun_is_deterministic_apart_from_timing():
    cell = BenchCell(n=120, d=3, u=10, q=2, queries=3, repetitions=1, seed=21)
    a = run_cell(cell)
    b = run_cell(cell)
    for col in CSV_COLUMNS:
        if col == "query_ms_mean":
            continue
        assert a[col] == b[col], col


def test_approximate_cell_reports_aar_at_least_one():
    cell = BenchCell(mode="approximate", n=200, d=2, u=10, q=2, queries=4,
                     repetitions=1, seed=23)
    row = run_cell(cell)
    assert float(row["AAR"]) >= 1.0


def test_pruning_column_optional():
    cell = BenchCell(n=150, d=2, u=10, q=2, queries=2, repetitions=1,
                     seed=29, measure_pruning=True)
    row = run_cell(cell)
    assert 0.0 < float(row["pruning_ratio"]) <= 1.0
    plain = run_cell(BenchCell(n=150, d=2, u=10, q=2, queries=2,
                               repetitions=1, seed=29))
    assert plain["pruning_ratio"] == ""


# --- kernel backend timing ---------------------------------------------------

def test_bench_kernels_covers_backends_and_kernels():
    rows = bench_kernels(points=200, dim=4, tuples=500, reps=1, seed=0)
    pairs = {(r["backend"], r["kernel"]) for r in rows}
    assert {b for b, _ in pairs} == {"numpy", "numba"}
    assert {k for _, k in pairs} == {"pairwise_distances", "pdist_max",
                                     "tuple_diameters"}
    assert all(r["best_ms"] >= 0.0 for r in rows)
