"""Per-iteration instrumentation.

Hardware counters are replaced by three software proxies:

* ``pair_evals``: object/centroid similarities not skipped by the active
  filter, counted at filter granularity so that a full inverted-file scan
  counts N*k even though most products are never formed.
* ``madds``: multiply-adds actually executed in the similarity loops.
* ``branch_evals``: per-entry filter conditionals executed inside the
  similarity loops.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields

import numpy as np

CSV_FIELDS = (
    "r", "pair_evals", "norm_pair_evals", "madds", "branch_evals", "invariant_clusters",
    "moved_objects", "empty_clusters", "cos_sum", "sse", "elapsed_ns", "mem_estimate_bytes",
)

# widths used by the memory model
ID_BYTES = 4
VALUE_BYTES = 8
OFFSET_BYTES = 8
FLAG_BYTES = 1


@dataclass(frozen=True)
class AssignCounters:
    pair_evals: int = 0
    madds: int = 0
    branch_evals: int = 0


@dataclass(frozen=True)
class IterationMetrics:
    r: int
    pair_evals: int
    madds: int
    branch_evals: int
    invariant_clusters: int
    moved_objects: int
    empty_clusters: int
    cos_sum: float
    sse: float
    elapsed_ns: int
    mem_estimate_bytes: int
    n: int
    k: int

    @property
    def norm_pair_evals(self) -> float:
        return self.pair_evals / (self.n * self.k)

    def as_row(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name in CSV_FIELDS}
        d["norm_pair_evals"] = self.norm_pair_evals
        return {name: d[name] for name in CSV_FIELDS}


def pair_eval_count(lam: np.ndarray, assign_prev: np.ndarray | None, k: int, n: int) -> int:
    """Closed-form number of object/centroid pairs the invariant-pair filter keeps.

    An object whose current cluster is invariant only needs the moving
    centroids; every other object needs all k.
    """
    lam = np.asarray(lam, dtype=bool)
    if assign_prev is None or not lam.any():
        return n * k
    k_moving = k - int(lam.sum())
    on_invariant = int(np.count_nonzero(lam[np.asarray(assign_prev)]))
    return on_invariant * k_moving + (n - on_invariant) * k


def mem_breakdown(backend: str, n: int, dim: int, k: int, nnz_x: int, nnz_m: int) -> dict[str, int]:
    """Analytic byte counts of the structures a backend keeps resident.

    Sparse arrays cost ``entries * (ID_BYTES + VALUE_BYTES)`` plus one
    ``OFFSET_BYTES`` offset per row (or per term for postings). The dense
    mean matrix costs ``k * D * VALUE_BYTES``.
    """
    parts = {
        "objects": nnz_x * (ID_BYTES + VALUE_BYTES) + (n + 1) * OFFSET_BYTES,
        "assignments": n * ID_BYTES,
    }
    if backend in ("lloyd", "lloyd-icp"):
        parts["means_dense"] = k * dim * VALUE_BYTES
        parts["mean_norms"] = k * VALUE_BYTES
    elif backend in ("ivf", "ivf-cbicp", "sivf"):
        parts["postings"] = nnz_m * (ID_BYTES + VALUE_BYTES) + (dim + 1) * OFFSET_BYTES
        if backend == "sivf":
            parts["boundaries"] = dim * OFFSET_BYTES
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if backend in ("lloyd-icp", "ivf-cbicp", "sivf"):
        parts["cached_sim"] = n * VALUE_BYTES
        parts["flags"] = k * FLAG_BYTES
    return parts


def mem_estimate(backend: str, n: int, dim: int, k: int, nnz_x: int, nnz_m: int) -> int:
    return sum(mem_breakdown(backend, n, dim, k, nnz_x, nnz_m).values())


def to_csv(rows: list[IterationMetrics]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for m in rows:
        w.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in m.as_row().items()})
    return buf.getvalue()


def to_json_lines(rows: list[IterationMetrics]) -> str:
    return "".join(json.dumps(m.as_row()) + "\n" for m in rows)


def to_json(rows: list[IterationMetrics]) -> list[dict]:
    return [m.as_row() for m in rows]


def summarize(rows: list[IterationMetrics]) -> dict:
    if not rows:
        return {}
    return {
        "iterations": len(rows),
        "avg_elapsed_ns": float(np.mean([m.elapsed_ns for m in rows])),
        "max_mem_estimate_bytes": max(m.mem_estimate_bytes for m in rows),
        "avg_norm_pair_evals": float(np.mean([m.norm_pair_evals for m in rows])),
        "total_pair_evals": sum(m.pair_evals for m in rows),
        "total_madds": sum(m.madds for m in rows),
        "total_branch_evals": sum(m.branch_evals for m in rows),
        "final_cos_sum": rows[-1].cos_sum,
    }


__all__ = [
    "AssignCounters", "IterationMetrics", "CSV_FIELDS", "pair_eval_count", "mem_estimate",
    "mem_breakdown", "to_csv", "to_json", "to_json_lines", "summarize",
]
