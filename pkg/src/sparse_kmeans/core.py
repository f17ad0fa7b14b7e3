"""Spherical k-means iteration driver and the full-expression backends.

All five backends share initialization, the mean update, invariance
detection and the objective; they differ only in how the assignment step
finds each object's most similar centroid:

=========== ======================================================
lloyd       dense ``k x D`` means, every pair evaluated
lloyd-icp   dense means, invariant centroid pairs skipped
ivf         inverted mean file, full postings scan
ivf-cbicp   inverted mean file, per-entry branch on the filter
sivf        structured inverted file, filter applied by loop bound
=========== ======================================================

Cluster ids are 0-based in memory; text outputs are 1-based.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .inverted import (
    StructuredInvertedMeanFile,
    build_ivf,
    build_structured,
    ivf_assign,
    ivf_cbicp_assign,
    sivf_assign,
    sivf_update,
)
from .means import MeanSet, detect_invariant, objective, update_means
from .metrics import AssignCounters, IterationMetrics, mem_estimate, summarize, to_csv, to_json
from .parallel import default_threads, for_ranges
from .sparse import DenseMeanMatrix, SparseDataset

log = logging.getLogger(__name__)

BACKENDS = ("lloyd", "lloyd-icp", "ivf", "ivf-cbicp", "sivf")
INITS = ("random-sample", "kmeanspp")


class KTooLarge(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    k: int
    max_iter: int = 100
    seed: int = 0
    backend: str = "sivf"
    threads: int = field(default_factory=default_threads)
    init: str = "random-sample"
    cache_invariant_means: bool = False
    # test hook: "sivf-boundary" empties every front part of the structured file
    fault: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}; choose from {', '.join(INITS)}")


@dataclass
class ClusterState:
    """Assignment state carried from one iteration to the next.

    ``assign`` is None before the first assignment. ``cached_sim[i]`` is
    the similarity of object i to the centroid it was assigned to.
    """

    r: int
    assign: np.ndarray | None
    lam: np.ndarray
    cached_sim: np.ndarray | None
    prev_assign: np.ndarray | None = None


def _row_dots(X: SparseDataset, dense: np.ndarray) -> np.ndarray:
    rows = np.repeat(np.arange(X.n), np.diff(X.indptr))
    return np.bincount(rows, weights=X.data * dense[X.indices], minlength=X.n)


def choose_seeds(X: SparseDataset, k: int, seed: int, method: str = "random-sample") -> np.ndarray:
    """Pick ``k`` distinct object indices to seed the centroids."""
    n = X.n
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of objects N={n}")
    rng = np.random.default_rng(seed)
    if method == "random-sample":
        return rng.choice(n, size=k, replace=False)
    if method != "kmeanspp":
        raise ConfigError(f"unknown init {method!r}")
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    dist = np.full(n, np.inf)
    for c in range(1, k):
        center = np.zeros(X.dim)
        lo, hi = X.indptr[chosen[c - 1]], X.indptr[chosen[c - 1] + 1]
        center[X.indices[lo:hi]] = X.data[lo:hi]
        center /= np.linalg.norm(center)
        dist = np.minimum(dist, np.clip(1.0 - _row_dots(X, center), 0.0, None))
        weights = np.where(taken, 0.0, dist)
        total = weights.sum()
        if total > 0:
            pick = rng.choice(n, p=weights / total)
        else:
            pick = rng.choice(np.flatnonzero(~taken))
        chosen[c] = pick
        taken[pick] = True
    return chosen


def init_centroids(X: SparseDataset, cfg: RunConfig) -> MeanSet:
    """Seed k centroids with distinct objects (uniformly or k-means++ style)."""
    idx = choose_seeds(X, cfg.k, cfg.seed, cfg.init)
    return MeanSet.from_vectors([X.vector(int(i)) for i in idx], X.dim)


def assign_full(X: SparseDataset, means: DenseMeanMatrix, lam: np.ndarray, cached_sim: np.ndarray | None,
                prev_assign: np.ndarray | None, icp: bool, threads: int = 1):
    """Assignment against full-expression means.

    With ``icp`` the pair (i, j) is skipped when both centroid j and the
    current centroid of object i are invariant; the current centroid then
    competes with its cached similarity. Returns ``(assign, sims, counters)``.
    """
    n = X.n
    if prev_assign is None:
        prev = np.full(n, -1, dtype=np.int64)
        cached = np.zeros(n)
    else:
        prev = np.ascontiguousarray(prev_assign, dtype=np.int64)
        cached = np.ascontiguousarray(cached_sim, dtype=np.float64)
    lam = np.ascontiguousarray(lam, dtype=np.bool_)
    unit = np.ascontiguousarray(means.unit)
    assign = np.empty(n, dtype=np.int64)
    sim = np.empty(n)
    pairs = np.empty(n, dtype=np.int64)
    madds = np.empty(n, dtype=np.int64)
    branches = np.empty(n, dtype=np.int64)
    for_ranges(kernels.dense_assign_range, n, threads, X.indptr, X.indices, X.data, unit, bool(icp),
               lam, prev, cached, assign, sim, pairs, madds, branches)
    return assign, sim, AssignCounters(int(pairs.sum()), int(madds.sum()), int(branches.sum()))


@dataclass
class RunResult:
    assign: np.ndarray
    means: MeanSet
    metrics: list[IterationMetrics]
    converged: bool
    config: RunConfig
    history: list[np.ndarray] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.metrics)

    def summary(self) -> dict:
        out = {
            "backend": self.config.backend,
            "k": self.config.k,
            "seed": self.config.seed,
            "init": self.config.init,
            "converged": self.converged,
            "n": int(self.assign.size),
        }
        out.update(summarize(self.metrics))
        return out

    def write(self, outdir: str | Path, metadata: dict | None = None) -> Path:
        """Write assignments, means, metrics CSV/JSON and a summary into ``outdir``."""
        from .ingest import format_sparse_rows

        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "assignments.txt").write_text("".join(f"{a + 1}\n" for a in self.assign.tolist()))
        units = self.means.unit_vectors()
        (outdir / "means.txt").write_text(
            format_sparse_rows(units, labels=range(1, len(units) + 1), header=(len(units), self.means.dim))
        )
        (outdir / "metrics.csv").write_text(to_csv(self.metrics))
        (outdir / "metrics.json").write_text(json.dumps(to_json(self.metrics), indent=1) + "\n")
        summary = self.summary()
        summary["config"] = {key: v for key, v in asdict(self.config).items() if key not in ("threads", "fault")}
        if metadata:
            summary["metadata"] = metadata
        (outdir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
        return outdir


class KMeansRun:
    """Stepwise spherical k-means.

    Each :meth:`step` performs one assignment and one update and returns
    that iteration's metrics. Stepping past convergence is allowed and is
    how the zero-work fixpoint iteration is observed.
    """

    def __init__(self, X: SparseDataset, cfg: RunConfig, init_means: MeanSet | None = None):
        if cfg.k > X.n:
            raise KTooLarge(f"k={cfg.k} exceeds the number of objects N={X.n}")
        self.X = X
        self.cfg = cfg
        self.k = cfg.k
        self.means = init_means if init_means is not None else init_centroids(X, cfg)
        if self.means.k != cfg.k:
            raise ConfigError(f"initial means have k={self.means.k}, config says {cfg.k}")
        self.state = ClusterState(r=0, assign=None, lam=np.zeros(cfg.k, dtype=bool), cached_sim=None)
        self.structure = self._prepare(self.means, self.state.lam)
        self.converged = False

    def _prepare(self, means: MeanSet, lam: np.ndarray):
        backend = self.cfg.backend
        if backend in ("lloyd", "lloyd-icp"):
            return means.to_dense()
        if backend in ("ivf", "ivf-cbicp"):
            return build_ivf(means, self.k, self.X.dim)
        sivf = build_structured(means, lam, self.X.dim)
        return self._maybe_corrupt(sivf)

    def _maybe_corrupt(self, sivf: StructuredInvertedMeanFile) -> StructuredInvertedMeanFile:
        if self.cfg.fault != "sivf-boundary":
            return sivf
        return StructuredInvertedMeanFile(sivf.post_ptr, sivf.cent, sivf.val, sivf.k, sivf.dim,
                                          np.zeros_like(sivf.mf0), sivf.lam)

    def _assign(self):
        st, cfg, X = self.state, self.cfg, self.X
        if cfg.backend in ("lloyd", "lloyd-icp"):
            assign, sim, counters = assign_full(X, self.structure, st.lam, st.cached_sim, st.assign,
                                                icp=cfg.backend == "lloyd-icp", threads=cfg.threads)
        elif cfg.backend == "ivf":
            assign, sim, counters = ivf_assign(X, self.structure, self.k, threads=cfg.threads)
        elif cfg.backend == "ivf-cbicp":
            assign, sim, counters = ivf_cbicp_assign(X, self.structure, st.lam, st.cached_sim, st.assign,
                                                     self.k, threads=cfg.threads)
        else:
            assign, sim, counters, new_lam = sivf_assign(X, self.structure, st.lam, st.cached_sim, st.assign,
                                                         self.k, threads=cfg.threads)
            return assign, sim, counters, new_lam
        return assign, sim, counters, detect_invariant(assign, st.assign, self.k)

    def step(self) -> IterationMetrics:
        t0 = time.perf_counter_ns()
        st, X, k = self.state, self.X, self.k
        assign, sim, counters, new_lam = self._assign()
        moved = X.n if st.assign is None else int(np.count_nonzero(assign != st.assign))

        if self.cfg.backend == "sivf":
            sivf, means = sivf_update(X, assign, new_lam, k, prev_means=self.means,
                                      cache_invariant=self.cfg.cache_invariant_means)
            structure = self._maybe_corrupt(sivf)
        else:
            keep = new_lam if self.cfg.cache_invariant_means else None
            means = update_means(X, assign, k, prev=self.means, keep=keep)
            structure = self._prepare(means, new_lam)
        sse, cos_sum = objective(X, assign, means)
        elapsed = time.perf_counter_ns() - t0

        self.converged = st.assign is not None and moved == 0
        self.state = ClusterState(r=st.r + 1, assign=assign, lam=new_lam, cached_sim=sim, prev_assign=st.assign)
        self.means = means
        self.structure = structure
        return IterationMetrics(
            r=st.r + 1,
            pair_evals=counters.pair_evals,
            madds=counters.madds,
            branch_evals=counters.branch_evals,
            invariant_clusters=int(new_lam.sum()),
            moved_objects=moved,
            empty_clusters=int(np.count_nonzero(means.counts == 0)),
            cos_sum=cos_sum,
            sse=sse,
            elapsed_ns=elapsed,
            mem_estimate_bytes=mem_estimate(self.cfg.backend, X.n, X.dim, k, X.nnz, means.nnz),
            n=X.n,
            k=k,
        )


def run(X: SparseDataset, cfg: RunConfig, init_means: MeanSet | None = None,
        on_iteration: Callable[[KMeansRun, IterationMetrics], None] | None = None) -> RunResult:
    """Iterate until no object changes cluster or ``cfg.max_iter`` is reached."""
    km = KMeansRun(X, cfg, init_means)
    metrics, history = [], []
    while km.state.r < cfg.max_iter:
        m = km.step()
        metrics.append(m)
        history.append(km.state.assign)
        if on_iteration is not None:
            on_iteration(km, m)
        log.debug("r=%d moved=%d invariant=%d pairs=%d", m.r, m.moved_objects, m.invariant_clusters, m.pair_evals)
        if km.converged:
            break
    return RunResult(km.state.assign, km.means, metrics, km.converged, cfg, history)
