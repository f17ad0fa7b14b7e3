"""Mean sets, the update step, invariance flags and objectives.

These pieces are shared by every backend; keeping a single mean
computation is what lets all five backends see bit-identical centroids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .sparse import DenseMeanMatrix, SparseDataset, SparseVector


@dataclass(frozen=True, eq=False)
class MeanSet:
    """k sparse raw means in CSR form (0-based terms) with their L2 norms.

    ``counts`` are the cluster sizes that produced each mean; a retained
    centroid of an empty cluster reports count 0.
    """

    ptr: np.ndarray
    terms: np.ndarray
    raw: np.ndarray
    norms: np.ndarray
    counts: np.ndarray
    dim: int

    @property
    def k(self) -> int:
        return self.norms.size

    @property
    def nnz(self) -> int:
        return int(self.terms.size)

    @property
    def unit(self) -> np.ndarray:
        """Unit-normalized values aligned with ``terms``."""
        return self.raw / np.repeat(self.norms, np.diff(self.ptr))

    def row(self, j: int) -> slice:
        return slice(int(self.ptr[j]), int(self.ptr[j + 1]))

    def unit_vectors(self) -> list[SparseVector]:
        u = self.unit
        return [SparseVector(self.terms[self.row(j)] + 1, u[self.row(j)]) for j in range(self.k)]

    def raw_vectors(self) -> list[SparseVector]:
        return [SparseVector(self.terms[self.row(j)] + 1, self.raw[self.row(j)]) for j in range(self.k)]

    def to_dense(self) -> DenseMeanMatrix:
        rows = np.zeros((self.k, self.dim))
        owner = np.repeat(np.arange(self.k), np.diff(self.ptr))
        rows[owner, self.terms] = self.raw
        return DenseMeanMatrix(rows, self.norms.copy())

    @classmethod
    def from_vectors(cls, vectors, dim: int, counts=None) -> "MeanSet":
        vectors = list(vectors)
        ptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([v.nnz for v in vectors])
        terms = np.concatenate([v.term_ids - 1 for v in vectors]).astype(np.int64)
        raw = np.concatenate([v.values for v in vectors])
        norms = np.array([np.sqrt(np.sum(v.values * v.values)) for v in vectors])
        if np.any(norms <= 0):
            raise ValueError("means must be nonzero")
        if counts is None:
            counts = np.zeros(len(vectors), dtype=np.int64)
        return cls(ptr, terms, raw, norms, np.asarray(counts, dtype=np.int64), dim)


def update_means(X: SparseDataset, assign: np.ndarray, k: int, prev: MeanSet | None = None,
                 keep: np.ndarray | None = None) -> MeanSet:
    """Recompute cluster means from ``assign`` (0-based cluster ids).

    Clusters that end up empty (or whose sum cancels to zero) keep the
    centroid from ``prev``. ``keep`` optionally marks clusters whose
    previous mean is reused verbatim without recomputation.
    """
    assign = np.ascontiguousarray(assign, dtype=np.int64)
    ptr, terms, raw, norms, counts = kernels.cluster_means(
        X.indptr, X.indices, X.data, assign, k, X.dim
    )
    retain = norms <= 0.0
    if keep is not None:
        retain |= np.asarray(keep, dtype=bool)
    if not retain.any():
        return MeanSet(ptr, terms, raw, norms, counts, X.dim)
    if prev is None:
        raise ValueError("empty cluster without a previous centroid to retain")
    rows_t, rows_r, new_norms = [], [], norms.copy()
    for j in range(k):
        src, sl = (prev, prev.row(j)) if retain[j] else (None, slice(int(ptr[j]), int(ptr[j + 1])))
        if src is None:
            rows_t.append(terms[sl])
            rows_r.append(raw[sl])
        else:
            rows_t.append(prev.terms[sl])
            rows_r.append(prev.raw[sl])
            new_norms[j] = prev.norms[j]
    new_ptr = np.zeros(k + 1, dtype=np.int64)
    new_ptr[1:] = np.cumsum([t.size for t in rows_t])
    return MeanSet(new_ptr, np.concatenate(rows_t), np.concatenate(rows_r), new_norms, counts, X.dim)


def detect_invariant(assign: np.ndarray, prev_assign: np.ndarray | None, k: int) -> np.ndarray:
    """Flag clusters whose membership is identical across two iterations."""
    if prev_assign is None:
        return np.zeros(k, dtype=bool)
    assign = np.asarray(assign)
    prev_assign = np.asarray(prev_assign)
    if assign.shape != prev_assign.shape:
        raise ValueError("assignment arrays differ in length")
    moved = assign != prev_assign
    changed = np.zeros(k, dtype=bool)
    changed[assign[moved]] = True
    changed[prev_assign[moved]] = True
    return ~changed


def objective(X: SparseDataset, assign: np.ndarray, means: MeanSet) -> tuple[float, float]:
    """Return ``(sse, cos_sum)``: squared error against raw means and the
    summed cosine similarity against unit means."""
    cos, sq = kernels.objective_terms(
        X.indptr, X.indices, X.data, np.ascontiguousarray(assign, dtype=np.int64),
        means.ptr, means.terms, means.raw, means.norms, X.dim,
    )
    return float(np.sum(sq)), float(np.sum(cos))
