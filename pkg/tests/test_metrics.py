import csv
import io
import json

import numpy as np
import pytest

from sparse_kmeans.metrics import (
    CSV_FIELDS,
    IterationMetrics,
    mem_breakdown,
    mem_estimate,
    pair_eval_count,
    summarize,
    to_csv,
    to_json_lines,
)

from conftest import random_dataset


def test_pair_eval_count_examples():
    lam = np.zeros(3, dtype=bool)
    assert pair_eval_count(lam, None, 3, 4) == 12
    assert pair_eval_count(lam, np.array([0, 1, 2, 0]), 3, 4) == 12
    assert pair_eval_count(np.ones(3, dtype=bool), np.array([0, 1, 2, 0]), 3, 4) == 0
    assert pair_eval_count(np.array([True, True, False]), np.array([0, 1, 2, 2]), 3, 4) == 8


def test_dense_means_term():
    parts = mem_breakdown("lloyd", 1, 141043, 20000, 0, 0)
    assert parts["means_dense"] == 20000 * 141043 * 8 == 22_566_880_000


def test_empty_postings_cost_only_headers():
    parts = mem_breakdown("sivf", 10, 100, 5, 40, 0)
    assert parts["postings"] == 101 * 8


def test_postings_payload_is_linear():
    a = mem_breakdown("ivf", 10, 100, 5, 40, 300)["postings"]
    b = mem_breakdown("ivf", 10, 100, 5, 40, 600)["postings"]
    header = 101 * 8
    assert b - header == 2 * (a - header)


def test_mem_estimate_is_sum_and_orders_backends():
    args = (2000, 10000, 100, 118000, 150000)
    assert mem_estimate("sivf", *args) == sum(mem_breakdown("sivf", *args).values())
    assert mem_estimate("sivf", *args) < mem_estimate("lloyd", *args)
    assert mem_estimate("ivf", *args) < mem_estimate("sivf", *args)
    with pytest.raises(ValueError):
        mem_estimate("annoy", *args)


def _m(r=1, pairs=6, **kw):
    base = dict(r=r, pair_evals=pairs, madds=10, branch_evals=0, invariant_clusters=1, moved_objects=2,
                empty_clusters=0, cos_sum=1.5, sse=0.25, elapsed_ns=100, mem_estimate_bytes=64, n=3, k=4)
    base.update(kw)
    return IterationMetrics(**base)


def test_csv_and_json_shapes():
    rows = [_m(), _m(r=2, pairs=3, cos_sum=1.75)]
    text = to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_FIELDS)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert parsed[0]["norm_pair_evals"] == "0.5" and parsed[1]["norm_pair_evals"] == "0.25"
    lines = [json.loads(x) for x in to_json_lines(rows).splitlines()]
    assert list(lines[0]) == list(CSV_FIELDS)
    s = summarize(rows)
    assert s["iterations"] == 2 and s["avg_norm_pair_evals"] == 0.375 and s["final_cos_sum"] == 1.75


def test_backend_counts_match_closed_form():
    from sparse_kmeans import RunConfig, run
    from sparse_kmeans.means import detect_invariant

    X = random_dataset(11, n=500, dim=80, nnz=6)
    for backend in ("lloyd-icp", "ivf-cbicp", "sivf"):
        res = run(X, RunConfig(k=15, seed=4, backend=backend, threads=1))
        prev, lam = None, np.zeros(15, dtype=bool)
        for m, assign in zip(res.metrics, res.history):
            assert m.pair_evals == pair_eval_count(lam, prev, 15, X.n)
            assert 0 <= m.norm_pair_evals <= 1
            lam, prev = detect_invariant(assign, prev, 15), assign


@pytest.mark.parametrize("seed", range(6))
def test_sivf_pairs_shrink_while_invariant_set_grows(seed):
    from sparse_kmeans import RunConfig, SynthSpec, generate_synthetic, run
    from sparse_kmeans.means import detect_invariant

    X, _ = generate_synthetic(SynthSpec(N=800, D=4000, k_true=12, seed=seed))
    res = run(X, RunConfig(k=30, seed=seed, backend="sivf", threads=1))
    lams, prev = [], None
    for assign in res.history:
        lams.append(detect_invariant(assign, prev, 30))
        prev = assign
    # metrics[r] was produced under lams[r - 1]
    for r in range(2, len(res.metrics)):
        if np.all(lams[r - 1] >= lams[r - 2]):
            assert res.metrics[r].norm_pair_evals <= res.metrics[r - 1].norm_pair_evals
