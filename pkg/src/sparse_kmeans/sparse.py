"""Sparse vector types and the dot-product kernels shared by every backend.

Term ids are 1-based on every public surface (``SparseVector.term_ids``,
text files, debug dumps). ``SparseDataset`` stores a CSR layout with
0-based column indices internally because that is what the numba kernels
index with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class ZeroVector(ValueError):
    """Raised when a vector has no nonzero entries to normalize."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class SparseVector:
    """Sorted ``(term_id, value)`` pairs with strictly ascending term ids.

    Zero values are dropped at construction so ``nnz`` always counts
    real features.
    """

    __slots__ = ("term_ids", "values")

    def __init__(self, term_ids: Sequence[int] | np.ndarray, values: Sequence[float] | np.ndarray):
        t = np.asarray(term_ids, dtype=np.int64).ravel()
        v = np.asarray(values, dtype=np.float64).ravel()
        if t.shape != v.shape:
            raise ValueError(f"term_ids and values differ in length: {t.size} != {v.size}")
        if t.size and t.min() < 1:
            raise ValueError("term ids are 1-based")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("term ids must be strictly ascending")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        keep = v != 0.0
        if not keep.all():
            t, v = t[keep], v[keep]
        object.__setattr__(self, "term_ids", _frozen(t.copy()))
        object.__setattr__(self, "values", _frozen(v.copy()))

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    @classmethod
    def from_pairs(cls, pairs) -> "SparseVector":
        pairs = list(pairs)
        if not pairs:
            return cls([], [])
        t, v = zip(*pairs)
        return cls(t, v)

    @property
    def nnz(self) -> int:
        return int(self.term_ids.size)

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.term_ids.tolist(), self.values.tolist()))

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim, dtype=np.float64)
        out[self.term_ids - 1] = self.values
        return out

    def __len__(self) -> int:
        return self.nnz

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.term_ids, other.term_ids) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.term_ids.tobytes(), self.values.tobytes()))

    def __repr__(self) -> str:
        body = ", ".join(f"({t}, {v!r})" for t, v in self.pairs()[:8])
        more = ", ..." if self.nnz > 8 else ""
        return f"SparseVector([{body}{more}])"


def normalize_l2(v: SparseVector) -> SparseVector:
    """Scale ``v`` to unit L2 norm, keeping its support."""
    if v.nnz == 0:
        raise ZeroVector("cannot normalize an empty vector")
    # math.fsum keeps the norm exact enough that re-normalizing is a no-op
    norm = math.sqrt(math.fsum(x * x for x in v.values.tolist()))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    if abs(norm - 1.0) < 1e-15:
        return v
    return SparseVector(v.term_ids, v.values / norm)


def dot_sparse_dense(x: SparseVector, m: np.ndarray) -> float:
    """Inner product of sparse ``x`` with a dense row indexed by term id - 1."""
    acc = 0.0
    for t, v in zip(x.term_ids.tolist(), x.values.tolist()):
        acc += v * float(m[t - 1])
    return acc


def dot_sparse_sparse(x: SparseVector, y: SparseVector) -> float:
    """Merge-based inner product over two ascending supports."""
    xt, xv = x.term_ids.tolist(), x.values.tolist()
    yt, yv = y.term_ids.tolist(), y.values.tolist()
    i = j = 0
    acc = 0.0
    while i < len(xt) and j < len(yt):
        if xt[i] == yt[j]:
            acc += xv[i] * yv[j]
            i += 1
            j += 1
        elif xt[i] < yt[j]:
            i += 1
        else:
            j += 1
    return acc


@dataclass(frozen=True)
class DatasetStats:
    avg_nnz: float
    max_nnz: int


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """N sparse rows over D features, stored as CSR.

    ``indices`` holds 0-based feature columns sorted ascending within each
    row; use :meth:`vector` for the 1-based ``SparseVector`` view.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    dim: int
    labels: np.ndarray | None = None
    stats: DatasetStats = field(init=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        n = indptr.size - 1
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if indptr[0] != 0 or indptr[-1] != indices.size or indices.size != data.size:
            raise ValueError("malformed CSR arrays")
        if indices.size and (indices.min() < 0 or indices.max() >= self.dim):
            raise ValueError(f"feature index outside [1, {self.dim}]")
        row_nnz = np.diff(indptr)
        if np.any(row_nnz < 0):
            raise ValueError("indptr must be non-decreasing")
        # strictly ascending within rows: every non-row-start step must increase
        if indices.size > 1:
            step_ok = np.diff(indices) > 0
            row_starts = np.zeros(indices.size, dtype=bool)
            row_starts[indptr[1:-1][indptr[1:-1] < indices.size]] = True
            if not np.all(step_ok | row_starts[1:]):
                raise ValueError("feature indices must be strictly ascending within each row")
        for name, arr in (("indptr", indptr), ("indices", indices), ("data", data)):
            object.__setattr__(self, name, _frozen(arr))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.size != n:
                raise ValueError("labels length must equal number of rows")
            object.__setattr__(self, "labels", _frozen(labels.copy()))
        object.__setattr__(
            self, "stats", DatasetStats(avg_nnz=float(row_nnz.mean()), max_nnz=int(row_nnz.max()))
        )

    @classmethod
    def from_vectors(cls, vectors: Sequence[SparseVector], dim: int | None = None, labels=None) -> "SparseDataset":
        vectors = list(vectors)
        indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([v.nnz for v in vectors])
        if vectors:
            indices = np.concatenate([v.term_ids for v in vectors]) - 1
            data = np.concatenate([v.values for v in vectors])
        else:
            indices = np.zeros(0, dtype=np.int64)
            data = np.zeros(0)
        if dim is None:
            dim = int(indices.max()) + 1 if indices.size else 1
        return cls(indptr, indices, data, dim, labels)

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def __len__(self) -> int:
        return self.n

    def vector(self, i: int) -> SparseVector:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseVector(self.indices[lo:hi] + 1, self.data[lo:hi])

    @property
    def vectors(self) -> list[SparseVector]:
        return [self.vector(i) for i in range(self.n)]

    def __iter__(self) -> Iterator[SparseVector]:
        for i in range(self.n):
            yield self.vector(i)

    def subset(self, rows: Sequence[int]) -> "SparseDataset":
        rows = np.asarray(rows, dtype=np.int64)
        lens = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(rows.size + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(lens)
        take = np.concatenate([np.arange(self.indptr[r], self.indptr[r + 1]) for r in rows]) if rows.size else []
        take = np.asarray(take, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return SparseDataset(indptr, self.indices[take], self.data[take], self.dim, labels)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.dim))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out


@dataclass(frozen=True, eq=False)
class DenseMeanMatrix:
    """Full-expression mean set: ``k x D`` raw means plus their L2 norms.

    ``unit`` divides each stored row by its norm entrywise, which yields
    exactly the same floats the inverted backends store in their postings.
    """

    rows: np.ndarray
    row_norms: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] != self.row_norms.size:
            raise ValueError("rows must be k x D with one norm per row")
        if np.any(self.row_norms <= 0):
            raise ValueError("row norms must be positive")

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def unit(self) -> np.ndarray:
        return self.rows / self.row_norms[:, None]
