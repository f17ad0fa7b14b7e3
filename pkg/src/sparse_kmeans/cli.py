"""Command-line front end: ``cluster``, ``bench``, ``compare`` and ``gen``.

Exit codes: 0 on success, 1 when a comparison finds a mismatch, 2 for
usage or configuration errors. Thread count comes from ``--threads``,
else the ``SPARSE_KMEANS_THREADS`` environment variable, else the number
of CPUs; results never depend on it.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .core import BACKENDS, INITS, ConfigError, KTooLarge, RunConfig, run
from .ingest import (
    FIXTURE,
    CountMatrix,
    InvalidSpec,
    ParseError,
    SynthSpec,
    generate_synthetic,
    load_sparse_text,
    save_sparse_text,
    tfidf_normalize,
    write_labels,
)
from .means import detect_invariant
from .metrics import pair_eval_count, to_csv
from .parallel import default_threads
from .sparse import SparseDataset

log = logging.getLogger("sparse_kmeans")

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
FAULTS = ("sivf-boundary",)

AGGREGATE_FIELDS = (
    "backend", "k", "n", "status", "iterations", "converged", "avg_elapsed_ns", "max_mem_estimate_bytes",
    "avg_norm_pair_evals", "total_pair_evals", "total_madds", "total_branch_evals", "final_cos_sum", "error",
)


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return vals


def _backend_list(text: str) -> list[str]:
    vals = [t for t in text.replace(",", " ").split() if t]
    bad = [v for v in vals if v not in BACKENDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown backend(s) {', '.join(bad)}; choose from {', '.join(BACKENDS)}")
    if len(set(vals)) != len(vals):
        raise argparse.ArgumentTypeError("backends listed twice")
    return vals


def prepare(X: SparseDataset, weighting: str) -> SparseDataset:
    """Weight and normalize a loaded dataset for clustering.

    ``auto`` applies tf-idf to integer count files and only L2-normalizes
    anything else.
    """
    if weighting == "tfidf" or (weighting == "auto" and isinstance(X, CountMatrix)):
        return tfidf_normalize(X)
    rows = np.repeat(np.arange(X.n), np.diff(X.indptr))
    norms = np.sqrt(np.bincount(rows, weights=X.data * X.data, minlength=X.n))
    if np.any(norms == 0):
        raise UsageError("dataset contains empty rows")
    data = X.data if np.array_equal(norms, np.ones(X.n)) else X.data / norms[rows]
    return SparseDataset(X.indptr, X.indices, data, X.dim, X.labels)


def _load(args) -> tuple[SparseDataset, str]:
    """Dataset plus a fingerprint of its source for run ids."""
    if args.data is None:
        X, _ = generate_synthetic(FIXTURE)
        return X, f"fixture:{FIXTURE!r}"
    path = Path(args.data)
    if not path.is_file():
        raise UsageError(f"no such data file: {path}")
    X = prepare(load_sparse_text(path), args.weighting)
    return X, hashlib.sha256(path.read_bytes()).hexdigest()


def run_id(**fields) -> str:
    blob = json.dumps(fields, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _metadata(threads: int) -> dict:
    return {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"), "threads": threads}


def cmd_cluster(args) -> int:
    X, fingerprint = _load(args)
    threads = _threads(args)
    cfg = RunConfig(k=args.k, max_iter=args.max_iter, seed=args.seed, backend=args.backend,
                    threads=threads, init=args.init)
    rid = run_id(data=fingerprint, k=args.k, backend=args.backend, seed=args.seed,
                 max_iter=args.max_iter, init=args.init, weighting=args.weighting)
    t0 = time.perf_counter()
    res = run(X, cfg)
    wall = time.perf_counter() - t0
    outdir = res.write(Path(args.out) / rid, metadata=_metadata(threads))
    last = res.metrics[-1]
    print(f"{args.backend} k={args.k} iterations={res.iterations} converged={'yes' if res.converged else 'no'} "
          f"cos_sum={last.cos_sum:.6f} elapsed={wall:.3f}s out={outdir}")
    return EXIT_OK


def _bench_cell(X, backend, k, args, threads, celldir: Path) -> dict:
    row = {"backend": backend, "k": k, "n": X.n}
    try:
        res = run(X, RunConfig(k=k, max_iter=args.max_iter, seed=args.seed, backend=backend,
                               threads=threads, init=args.init))
    except (ConfigError, KTooLarge, ValueError) as exc:
        log.warning("cell %s k=%d n=%d failed: %s", backend, k, X.n, exc)
        row.update(status="error", error=str(exc))
        return row
    (celldir / f"{backend}_k{k}_n{X.n}.csv").write_text(to_csv(res.metrics))
    s = res.summary()
    row.update(status="ok", error="", iterations=s["iterations"], converged=int(res.converged))
    for key in AGGREGATE_FIELDS:
        if key in s and key not in row:
            row[key] = s[key]
    return row


def cmd_bench(args) -> int:
    X, fingerprint = _load(args)
    threads = _threads(args)
    n_list = args.n_list or [X.n]
    rid = run_id(data=fingerprint, k_list=args.k_list, n_list=n_list, backends=args.backends,
                 seed=args.seed, max_iter=args.max_iter, init=args.init, weighting=args.weighting)
    outdir = Path(args.out) / f"bench-{rid}"
    celldir = outdir / "cells"
    celldir.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in n_list:
        if n > X.n:
            for backend in args.backends:
                for k in args.k_list:
                    rows.append({"backend": backend, "k": k, "n": n, "status": "error",
                                 "error": f"n={n} exceeds dataset size {X.n}"})
            continue
        Xn = X if n == X.n else X.subset(np.arange(n))
        for backend in args.backends:
            for k in args.k_list:
                rows.append(_bench_cell(Xn, backend, k, args, threads, celldir))
    with open(outdir / "aggregate.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_FIELDS, lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()})
    (outdir / "metadata.json").write_text(json.dumps(_metadata(threads), indent=1) + "\n")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"bench cells={len(rows)} failed={failed} out={outdir / 'aggregate.csv'}")
    return EXIT_OK


def _counter_problems(backend: str, res, n: int, k: int) -> list[str]:
    """Check one run's per-iteration counters against their closed forms."""
    problems = []
    prev, lam = None, np.zeros(k, dtype=bool)
    for m, assign in zip(res.metrics, res.history):
        expect = pair_eval_count(lam, prev, k, n)
        if backend in ("ivf", "lloyd") and m.pair_evals != n * k:
            problems.append(f"{backend} r={m.r}: pair_evals {m.pair_evals} != N*k {n * k}")
        if backend in ("ivf-cbicp", "sivf", "lloyd-icp") and m.pair_evals != expect:
            problems.append(f"{backend} r={m.r}: pair_evals {m.pair_evals} != closed form {expect}")
        if backend == "sivf" and m.branch_evals != 0:
            problems.append(f"sivf r={m.r}: branch_evals {m.branch_evals} != 0")
        lam = detect_invariant(assign, prev, k)
        prev = assign
    return problems


def compare_runs(results: dict) -> tuple[list[str], tuple | None]:
    """Return ``(report lines, first divergence)`` for runs keyed by backend.

    The divergence is ``(iteration, object, {backend: cluster})`` with
    1-based iteration, object and cluster numbers, or None.
    """
    names = list(results)
    ref = names[0]
    lines, first = [], None
    depth = max(len(r.history) for r in results.values())
    for it in range(depth):
        present = {b: results[b].history[it] for b in names if it < len(results[b].history)}
        if len(present) != len(names):
            missing = sorted(set(names) - set(present))
            lines.append(f"iteration {it + 1}: runs ended early for {', '.join(missing)}")
            if first is None:
                first = (it + 1, None, {})
            break
        base = present[ref]
        diff = np.zeros(base.size, dtype=bool)
        for b in names[1:]:
            diff |= present[b] != base
        if diff.any():
            obj = int(np.flatnonzero(diff)[0])
            picks = {b: int(present[b][obj]) + 1 for b in names}
            first = (it + 1, obj + 1, picks)
            shown = ", ".join(f"{b}={c}" for b, c in picks.items())
            lines.append(f"first divergence at iteration {it + 1}, object {obj + 1}: {shown} "
                         f"({int(diff.sum())} objects differ)")
            break
    return lines, first


def cmd_compare(args) -> int:
    if len(args.backends) < 2:
        raise UsageError("compare needs at least two backends")
    if args.inject_fault and "sivf" not in args.backends:
        raise UsageError("--inject-fault sivf-boundary needs sivf among the backends")
    X, _ = _load(args)
    threads = _threads(args)
    results = {}
    for b in args.backends:
        cfg = RunConfig(k=args.k, max_iter=args.max_iter, seed=args.seed, backend=b, threads=threads,
                        init=args.init, fault=args.inject_fault if b == "sivf" else None)
        results[b] = run(X, cfg)
    lines, first = compare_runs(results)
    for b, res in results.items():
        lines.extend(_counter_problems(b, res, X.n, args.k))
    if lines:
        print("MISMATCH")
        for line in lines:
            print("  " + line)
        return EXIT_MISMATCH
    iters = {b: r.iterations for b, r in results.items()}
    print(f"OK {len(results)} backends agree on every iteration ({', '.join(f'{b}:{i}' for b, i in iters.items())})")
    return EXIT_OK


def cmd_gen(args) -> int:
    spec = SynthSpec(N=args.N, D=args.D, k_true=args.k_true, avg_nnz=args.avg_nnz,
                     zipf_exponent=args.zipf_exponent, cluster_separation=args.cluster_separation, seed=args.seed)
    X, labels = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_sparse_text(X, out / "data.txt")
    write_labels(labels, out / "labels.txt")
    print(f"gen N={X.n} D={X.dim} nnz={X.nnz} avg_nnz={X.stats.avg_nnz:.2f} out={out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, data_required: bool) -> None:
    p.add_argument("--data", required=data_required,
                   help="svmlight-style file" + ("" if data_required else " (default: the standard synthetic fixture)"))
    p.add_argument("--weighting", choices=("auto", "tfidf", "none"), default="auto",
                   help="auto: tf-idf for integer counts, L2 only otherwise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive, default=None)
    p.add_argument("--max-iter", type=_positive, default=100)
    p.add_argument("--init", choices=INITS, default="random-sample")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-kmeans", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="run one backend and write its outputs")
    _common(p, data_required=True)
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--backend", choices=BACKENDS, default="sivf")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("bench", help="sweep k and N over several backends")
    _common(p, data_required=False)
    p.add_argument("--k-list", type=_int_list, required=True)
    p.add_argument("--n-list", type=_int_list, default=None)
    p.add_argument("--backends", type=_backend_list, default=list(BACKENDS))
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="check that backends agree iteration by iteration")
    _common(p, data_required=False)
    p.add_argument("--k", type=_positive, required=True)
    p.add_argument("--backends", type=_backend_list, default=list(BACKENDS))
    p.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="write a synthetic dataset and its labels")
    d = SynthSpec()
    p.add_argument("--N", type=int, default=d.N)
    p.add_argument("--D", type=int, default=d.D)
    p.add_argument("--k-true", type=int, default=d.k_true)
    p.add_argument("--avg-nnz", type=float, default=d.avg_nnz)
    p.add_argument("--zipf-exponent", type=float, default=d.zipf_exponent)
    p.add_argument("--cluster-separation", type=float, default=d.cluster_separation)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default="data")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, KTooLarge, InvalidSpec, ParseError, ValueError) as exc:
        print(f"sparse-kmeans {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
