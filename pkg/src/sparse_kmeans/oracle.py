"""Brute-force reference computations.

Deliberately slow and independent of the backends: no kernels, no mean
sets, no inverted files. Only ``SparseVector`` is shared.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseVector

NEAR_TIE = 1e-9


def _dot(x: SparseVector, mean: dict[int, float]) -> float:
    acc = 0.0
    for t, v in zip(x.term_ids.tolist(), x.values.tolist()):
        u = mean.get(t)
        if u is not None:
            acc += v * u
    return acc


def oracle_similarities(X, means) -> np.ndarray:
    """N x k matrix of object/mean inner products."""
    lookup = [dict(zip(m.term_ids.tolist(), m.values.tolist())) for m in means]
    xs = list(X)
    return np.array([[_dot(x, m) for m in lookup] for x in xs])


def oracle_assign(X, means) -> np.ndarray:
    """Most similar mean per object (0-based), lowest index on exact ties."""
    sims = oracle_similarities(X, means)
    out = np.empty(sims.shape[0], dtype=np.int64)
    for i, row in enumerate(sims):
        best, bv = -1, -np.inf
        for j, r in enumerate(row):
            if r > bv:
                best, bv = j, r
        out[i] = best
    return out


def oracle_objective(X, assign, raw_means) -> tuple[float, float]:
    """Dense recomputation of ``(sse, cos_sum)`` from raw (unnormalized) means."""
    xs = list(X)
    means = list(raw_means)
    dim = 1 + max(
        [int(v.term_ids.max()) for v in xs if v.nnz] + [int(m.term_ids.max()) for m in means if m.nnz]
    )
    dense_means = np.zeros((len(means), dim))
    for j, m in enumerate(means):
        dense_means[j, m.term_ids] = m.values
    sse = 0.0
    cos_sum = 0.0
    for x, a in zip(xs, np.asarray(assign).tolist()):
        xd = np.zeros(dim)
        xd[x.term_ids] = x.values
        mu = dense_means[a]
        diff = xd - mu
        sse += float(diff @ diff)
        cos_sum += float(xd @ mu) / float(np.sqrt(mu @ mu))
    return sse, cos_sum


def near_tie(sims_row: np.ndarray, a: int, b: int, tol: float = NEAR_TIE) -> bool:
    return abs(float(sims_row[a]) - float(sims_row[b])) < tol
