import csv
import json

import pytest

from sparse_kmeans.cli import main
from sparse_kmeans.parallel import THREADS_ENV, default_threads


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--N", "400", "--D", "3000", "--k-true", "8", "--seed", "3", "--out", str(d)]) == 0
    return d / "data.txt"


def _only_dir(path):
    (sub,) = [p for p in path.iterdir() if p.is_dir()]
    return sub


def _strip_timing(outdir):
    rows = list(csv.DictReader(open(outdir / "metrics.csv")))
    for r in rows:
        r.pop("elapsed_ns")
    summary = json.loads((outdir / "summary.json").read_text())
    summary.pop("metadata")
    summary.pop("avg_elapsed_ns")
    return rows, summary


def test_gen_defaults(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "data.txt").read_text().splitlines()
    assert lines[0] == "#2000 10000" and len(lines) == 2001
    labels = (tmp_path / "labels.txt").read_text().split()
    assert len(labels) == 2000
    avg = float(capsys.readouterr().out.split("avg_nnz=")[1].split()[0])
    assert abs(avg - 59) <= 5.9


def test_gen_is_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "--N", "300", "--D", "2000", "--seed", "1", "--out", str(tmp_path / name)]) == 0
    for f in ("data.txt", "labels.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_gen_invalid_spec(tmp_path, capsys):
    assert main(["gen", "--k-true", "0", "--out", str(tmp_path)]) == 2
    assert "k_true" in capsys.readouterr().err


def test_cluster_twice_identical(small_data, tmp_path, capsys):
    args = ["cluster", "--data", str(small_data), "--k", "50", "--backend", "sivf", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "4"]) == 0
    a, b = _only_dir(tmp_path / "a"), _only_dir(tmp_path / "b")
    assert a.name == b.name
    for f in ("assignments.txt", "means.txt"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert _strip_timing(a) == _strip_timing(b)
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("sivf k=50 iterations=") and "cos_sum=" in out[0] and "elapsed=" in out[0]


def test_cluster_sivf_and_ivf_assign_identically(small_data, tmp_path):
    for b in ("sivf", "ivf"):
        args = ["cluster", "--data", str(small_data), "--k", "20", "--backend", b, "--seed", "7"]
        assert main(args + ["--out", str(tmp_path / b)]) == 0
    a = (_only_dir(tmp_path / "sivf") / "assignments.txt").read_bytes()
    assert a == (_only_dir(tmp_path / "ivf") / "assignments.txt").read_bytes()


def test_cluster_k_zero_is_usage_error(small_data):
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--data", str(small_data), "--k", "0"])
    assert exc.value.code == 2


def test_cluster_errors_exit_2(small_data, tmp_path):
    assert main(["cluster", "--data", str(tmp_path / "missing.txt"), "--k", "3"]) == 2
    assert main(["cluster", "--data", str(small_data), "--k", "401", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0 2:1 1:1\n")
    assert main(["cluster", "--data", str(bad), "--k", "1"]) == 2


def test_cluster_counts_file_gets_tfidf(tmp_path):
    p = tmp_path / "counts.txt"
    p.write_text("0 1:2 2:1\n0 1:1 3:3\n0 2:2 3:1 4:1\n0 1:1 4:2 5:1\n")
    assert main(["cluster", "--data", str(p), "--k", "2", "--out", str(tmp_path / "o")]) == 0
    assert len((_only_dir(tmp_path / "o") / "assignments.txt").read_text().split()) == 4


def test_compare_all_backends_agree(capsys):
    assert main(["compare", "--k", "50", "--seed", "42"]) == 0
    assert capsys.readouterr().out.startswith("OK 5 backends")


def test_compare_detects_corrupted_boundary(capsys):
    rc = main(["compare", "--k", "50", "--backends", "ivf,sivf", "--inject-fault", "sivf-boundary"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "first divergence at iteration" in out and "object" in out


def test_compare_needs_two_backends(capsys):
    assert main(["compare", "--k", "5", "--backends", "sivf"]) == 2
    with pytest.raises(SystemExit):
        main(["compare", "--k", "5", "--backends", "sivf,faiss"])


def test_bench_grid(small_data, tmp_path):
    args = ["bench", "--data", str(small_data), "--k-list", "10,20,50", "--backends", "ivf,sivf,ivf-cbicp",
            "--out", str(tmp_path)]
    assert main(args) == 0
    outdir = _only_dir(tmp_path)
    rows = list(csv.DictReader(open(outdir / "aggregate.csv")))
    assert len(rows) == 9 and all(r["status"] == "ok" for r in rows)
    for r in rows:
        if r["backend"] == "ivf":
            assert float(r["avg_norm_pair_evals"]) == 1.0
    for k in (10, 20, 50):
        sivf = list(csv.DictReader(open(outdir / "cells" / f"sivf_k{k}_n400.csv")))
        cb = list(csv.DictReader(open(outdir / "cells" / f"ivf-cbicp_k{k}_n400.csv")))
        assert [r["pair_evals"] for r in sivf] == [r["pair_evals"] for r in cb]


def test_bench_two_backends_six_rows_and_failures(small_data, tmp_path):
    args = ["bench", "--data", str(small_data), "--k-list", "10,20,500", "--backends", "ivf,sivf",
            "--out", str(tmp_path)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(_only_dir(tmp_path) / "aggregate.csv")))
    assert len(rows) == 6
    assert [r["status"] for r in rows if r["k"] == "500"] == ["error", "error"]


def test_bench_n_sweep(small_data, tmp_path):
    args = ["bench", "--data", str(small_data), "--k-list", "5", "--n-list", "100,400", "--backends", "sivf,ivf",
            "--out", str(tmp_path)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(_only_dir(tmp_path) / "aggregate.csv")))
    assert sorted((r["n"], r["backend"]) for r in rows) == [("100", "ivf"), ("100", "sivf"),
                                                            ("400", "ivf"), ("400", "sivf")]


def test_thread_env_var(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert default_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    with pytest.raises(ValueError):
        default_threads()
