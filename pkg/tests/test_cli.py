"""Command-line front end: parsing, exit codes, pipelines."""

import csv
import json

import numpy as np
import pytest

from promish.cli import load_dataset_file, main, write_dataset_file
from promish import InvalidInputError


FIG_STYLE_DATA = """\
1,0.0,9.0;a
2,12.0,1.0;b
3,4.0,-8.0;c
4,-9.0,2.0;a
5,14.0,13.0;b
6,-13.0,-11.0;c
7,50.0,50.0;a
8,50.3,50.0;b
9,50.0,50.4;c
10,90.0,10.0;a
"""


def _write_fig(tmp_path):
    path = tmp_path / "points.txt"
    path.write_text(FIG_STYLE_DATA, encoding="utf-8")
    return path


# --- dataset file grammar ---

def test_dataset_file_round_trip(tmp_path):
    path = _write_fig(tmp_path)
    ds = load_dataset_file(path)
    assert ds.n == 10 and ds.dimension == 2
    assert ds.vocabulary == {"a": 0, "b": 1, "c": 2}
    out = tmp_path / "copy.txt"
    write_dataset_file(ds, out)
    again = load_dataset_file(out)
    assert np.array_equal(again.ids, ds.ids)
    assert np.array_equal(again.coords, ds.coords)
    assert again.keyword_names == ds.keyword_names


@pytest.mark.parametrize("line,fragment", [
    ("zap,1.0;a", "line 1"),
    ("1,1.0,2.0\n2,1.0;a", "line 1"),          # no semicolon on first line
    ("1,1.0;a\n2,1.0,2.0;b", "line 2"),        # dimension changes
    ("1,1.0;a\n1,2.0;b", "unique"),
    ("1,1.0;", "line 1"),                      # empty keyword list
    ("1;a", "line 1"),                         # no coordinates
])
def test_dataset_file_grammar_errors(tmp_path, line, fragment):
    path = tmp_path / "bad.txt"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(InvalidInputError, match=fragment):
        load_dataset_file(path)


# --- subcommands ---

def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "gen" in capsys.readouterr().out


def test_unknown_flag_exits_one(capsys):
    assert main(["query", "--frobnicate"]) == 1
    assert main(["gen", "--sizzle", "3"]) == 1
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_gen_is_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    base = ["gen", "--size", "50", "--dim", "3", "--dict", "6", "--tags", "2",
            "--seed", "5"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    ds = load_dataset_file(a)
    assert ds.n == 50 and ds.dimension == 3


def test_gen_to_stdout(capsys):
    assert main(["gen", "--size", "3", "--dim", "2", "--dict", "2"]) == 0
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == 3


def test_query_finds_planted_cluster(tmp_path, capsys):
    data = _write_fig(tmp_path)
    code = main(["query", str(data), "--keywords", "a,b,c", "--k", "1"])
    assert code == 0
    out = capsys.readouterr().out
    lines = out.strip().splitlines()
    assert len(lines) == 1
    pos, diam, ids = lines[0].split("\t")
    assert pos == "1"
    assert ids == "7,8,9"
    assert abs(float(diam) - 0.5) < 1e-6


def test_query_unknown_keyword_is_unsatisfiable(tmp_path, capsys):
    data = _write_fig(tmp_path)
    code = main(["query", str(data), "--keywords", "a,zzz", "--k", "1"])
    assert code == 2
    assert "unsatisfiable" in capsys.readouterr().err


def test_query_missing_file_exits_one(tmp_path, capsys):
    code = main(["query", str(tmp_path / "nope.txt"), "--keywords", "a"])
    assert code == 1


def test_build_then_query_pipeline(tmp_path, capsys):
    data = _write_fig(tmp_path)
    root = tmp_path / "idx"
    assert main(["build", str(data), "--out", str(root), "--seed", "3"]) == 0
    capsys.readouterr()

    out1 = tmp_path / "r1.tsv"
    out2 = tmp_path / "r2.tsv"
    argv = ["query", str(root), "--keywords", "a,b,c", "--k", "2"]
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()

    # the same query straight from the dataset file gives identical bytes
    out3 = tmp_path / "r3.tsv"
    assert main(["query", str(data), "--keywords", "a,b,c", "--k", "2",
                 "--seed", "3", "--out", str(out3)]) == 0
    assert out3.read_bytes() == out1.read_bytes()
    first = out1.read_text(encoding="utf-8").splitlines()[0]
    assert first.split("\t")[2] == "7,8,9"


def test_query_mode_mismatch_detected(tmp_path, capsys):
    data = _write_fig(tmp_path)
    root = tmp_path / "aidx"
    assert main(["build", str(data), "--out", str(root),
                 "--mode", "approx"]) == 0
    capsys.readouterr()
    # no --mode flag: stored mode is used
    assert main(["query", str(root), "--keywords", "a,b", "--k", "1"]) == 0
    assert main(["query", str(root), "--keywords", "a,b",
                 "--mode", "exact"]) == 1
    assert "approximate mode" in capsys.readouterr().err


def test_verify_reports_ok(tmp_path, capsys):
    data = _write_fig(tmp_path)
    code = main(["verify", str(data), "--queries", "4", "--q", "2",
                 "--k", "2", "--seed", "1"])
    assert code == 0
    out = capsys.readouterr().out
    assert "all ok" in out
    assert "MISMATCH" not in out


def test_verify_single_query_flag(tmp_path, capsys):
    data = _write_fig(tmp_path)
    assert main(["verify", str(data), "--keywords", "a,b,c", "--k", "1"]) == 0
    assert "all ok" in capsys.readouterr().out


def test_bench_subcommand_writes_csv(tmp_path, capsys):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps([{"n": 80, "d": 2, "u": 6, "q": 2,
                                 "queries": 2, "repetitions": 1}]),
                    encoding="utf-8")
    out = tmp_path / "bench.csv"
    assert main(["bench", str(plan), "--out", str(out)]) == 0
    assert "wrote 1 rows" in capsys.readouterr().out
    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and rows[0]["N"] == "80"


def test_bench_empty_plan(tmp_path, capsys):
    plan = tmp_path / "plan.json"
    plan.write_text("[]", encoding="utf-8")
    out = tmp_path / "bench.csv"
    assert main(["bench", str(plan), "--out", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert text.startswith("mode,") and len(text.splitlines()) == 1


def test_kernel_bench_prints_table(capsys):
    assert main(["kernel-bench", "--points", "100", "--dim", "3",
                 "--tuples", "200", "--reps", "1"]) == 0
    out = capsys.readouterr().out
    assert "numpy" in out and "numba" in out and "pdist_max" in out
