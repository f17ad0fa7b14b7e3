"""Inverted-file mean sets and the three inverted-file assignment backends.

An inverted mean file keeps, for every term, a postings array of
``(centroid, unit value)`` pairs. The structured variant orders each
postings array so that moving centroids come first; objects whose own
cluster did not change then scan only that front part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import kernels
from .means import MeanSet, detect_invariant, update_means
from .metrics import AssignCounters
from .parallel import for_ranges
from .sparse import SparseDataset, SparseVector


class StructureMismatch(ValueError):
    """The structured file was built for a different invariance vector."""


@dataclass(frozen=True, eq=False)
class InvertedMeanFile:
    post_ptr: np.ndarray
    cent: np.ndarray
    val: np.ndarray
    k: int
    dim: int

    @property
    def mf(self) -> np.ndarray:
        return np.diff(self.post_ptr)

    @property
    def nnz(self) -> int:
        return int(self.cent.size)

    def postings(self, s: int) -> list[tuple[int, float]]:
        """Postings of 1-based term ``s`` as 1-based ``(centroid, value)`` pairs."""
        lo, hi = self.post_ptr[s - 1], self.post_ptr[s]
        return [(int(c) + 1, float(u)) for c, u in zip(self.cent[lo:hi], self.val[lo:hi])]

    def to_means(self) -> list[SparseVector]:
        """Reassemble the sparse unit means the file was built from."""
        terms = np.repeat(np.arange(self.dim), self.mf)
        order = np.lexsort((terms, self.cent))
        c, t, u = self.cent[order], terms[order], self.val[order]
        bounds = np.searchsorted(c, np.arange(self.k + 1))
        return [SparseVector(t[bounds[j]:bounds[j + 1]] + 1, u[bounds[j]:bounds[j + 1]]) for j in range(self.k)]


@dataclass(frozen=True, eq=False)
class StructuredInvertedMeanFile(InvertedMeanFile):
    mf0: np.ndarray
    lam: np.ndarray

    @property
    def front_end(self) -> np.ndarray:
        return self.post_ptr[:-1] + self.mf0

    def strip(self) -> InvertedMeanFile:
        return InvertedMeanFile(self.post_ptr, self.cent, self.val, self.k, self.dim)

    def dump(self) -> str:
        """One line per term: ``s mf0 mf  (c,u) (c,u) ...`` with 1-based ids."""
        lines = []
        mf = self.mf
        for s in range(self.dim):
            lo, hi = self.post_ptr[s], self.post_ptr[s + 1]
            entries = " ".join(f"({int(c) + 1},{float(u)!r})" for c, u in zip(self.cent[lo:hi], self.val[lo:hi]))
            lines.append(f"{s + 1} {int(self.mf0[s])} {int(mf[s])}  {entries}".rstrip())
        return "\n".join(lines) + "\n"


def _mean_arrays(means) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(means, MeanSet):
        return means.ptr, means.terms, means.unit
    means = list(means)
    ptr = np.zeros(len(means) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([m.nnz for m in means])
    terms = np.concatenate([m.term_ids - 1 for m in means]) if means else np.zeros(0, dtype=np.int64)
    vals = np.concatenate([m.values for m in means]) if means else np.zeros(0)
    return ptr, terms.astype(np.int64), vals


def build_ivf(means, k: int, dim: int) -> InvertedMeanFile:
    """Invert a sparse unit mean set; postings list centroids in ascending id."""
    ptr, terms, vals = _mean_arrays(means)
    if ptr.size != k + 1:
        raise ValueError(f"expected {k} means, got {ptr.size - 1}")
    owner = np.repeat(np.arange(k, dtype=np.int64), np.diff(ptr))
    order = np.lexsort((owner, terms))
    post_ptr = np.zeros(dim + 1, dtype=np.int64)
    post_ptr[1:] = np.cumsum(np.bincount(terms, minlength=dim))
    return InvertedMeanFile(post_ptr, owner[order], vals[order], k, dim)


@njit(cache=True)
def _place_structured(ptr, terms, unit, lam, dim):
    k = lam.size
    # counting pass: moving and invariant means per term
    mf0 = np.zeros(dim, dtype=np.int64)
    mf1 = np.zeros(dim, dtype=np.int64)
    for j in range(k):
        if not lam[j]:
            for p in range(ptr[j], ptr[j + 1]):
                mf0[terms[p]] += 1
        else:
            for p in range(ptr[j], ptr[j + 1]):
                mf1[terms[p]] += 1
    post_ptr = np.zeros(dim + 1, dtype=np.int64)
    for s in range(dim):
        post_ptr[s + 1] = post_ptr[s] + mf0[s] + mf1[s]
    # placement pass: moving means fill from the front, invariant ones
    # from the boundary onwards
    q0 = post_ptr[:-1].copy()
    q1 = post_ptr[:-1] + mf0
    cent = np.empty(post_ptr[dim], dtype=np.int64)
    val = np.empty(post_ptr[dim])
    for j in range(k):
        if not lam[j]:
            for p in range(ptr[j], ptr[j + 1]):
                s = terms[p]
                cent[q0[s]] = j
                val[q0[s]] = unit[p]
                q0[s] += 1
        else:
            for p in range(ptr[j], ptr[j + 1]):
                s = terms[p]
                cent[q1[s]] = j
                val[q1[s]] = unit[p]
                q1[s] += 1
    return post_ptr, cent, val, mf0


def build_structured(means, lam: np.ndarray, dim: int) -> StructuredInvertedMeanFile:
    """Structured inverted file for ``means`` under invariance flags ``lam``."""
    lam = np.ascontiguousarray(lam, dtype=np.bool_)
    ptr, terms, vals = _mean_arrays(means)
    post_ptr, cent, val, mf0 = _place_structured(ptr, terms, vals, lam, dim)
    return StructuredInvertedMeanFile(post_ptr, cent, val, lam.size, dim, mf0, lam.copy())


def sivf_update(X: SparseDataset, assign: np.ndarray, lam: np.ndarray, k: int,
                prev_means: MeanSet | None = None, cache_invariant: bool = False):
    """Update step: recompute means and lay them out as a structured inverted file.

    Returns ``(structure, means)``. Empty clusters keep ``prev_means``.
    With ``cache_invariant`` the invariant clusters reuse their previous
    mean instead of recomputing it (the values are identical either way).
    """
    keep = lam if (cache_invariant and prev_means is not None) else None
    means = update_means(X, assign, k, prev=prev_means, keep=keep)
    return build_structured(means, lam, X.dim), means


def validate_structure(sivf: StructuredInvertedMeanFile) -> list[str]:
    """Return partition-invariant violations (empty when the file is well formed)."""
    errors = []
    mf = sivf.mf
    if np.any(sivf.mf0 < 0) or np.any(sivf.mf0 > mf):
        errors.append("boundary outside [0, mf]")
    for s in range(sivf.dim):
        lo, b, hi = sivf.post_ptr[s], sivf.post_ptr[s] + sivf.mf0[s], sivf.post_ptr[s + 1]
        c = sivf.cent[lo:hi]
        if np.unique(c).size != c.size:
            errors.append(f"term {s + 1}: duplicate centroid")
        if np.any(sivf.lam[sivf.cent[lo:b]]):
            errors.append(f"term {s + 1}: invariant centroid in front part")
        if not np.all(sivf.lam[sivf.cent[b:hi]]):
            errors.append(f"term {s + 1}: moving centroid in back part")
    return errors


def parse_dump(text: str) -> list[tuple[int, int, int, list[tuple[int, float]]]]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        head, _, rest = line.partition("  ")
        s, mf0, mf = (int(x) for x in head.split())
        entries = []
        for tok in rest.split():
            c, u = tok.strip("()").split(",")
            entries.append((int(c), float(u)))
        out.append((s, mf0, mf, entries))
    return out


def validate_dump(text: str, lam: np.ndarray) -> list[str]:
    """Check a debug dump against the partition invariant for flags ``lam``."""
    lam = np.asarray(lam, dtype=bool)
    errors = []
    for s, mf0, mf, entries in parse_dump(text):
        if len(entries) != mf:
            errors.append(f"term {s}: mf={mf} but {len(entries)} entries")
        if not 0 <= mf0 <= mf:
            errors.append(f"term {s}: boundary {mf0} outside [0, {mf}]")
        for q, (c, _) in enumerate(entries):
            moving = not lam[c - 1]
            if (q < mf0) != moving:
                part = "front" if q < mf0 else "back"
                errors.append(f"term {s}: centroid {c} misplaced in {part} part")
    return errors


def _outputs(n: int):
    return (np.empty(n, dtype=np.int64), np.empty(n), np.empty(n, dtype=np.int64),
            np.empty(n, dtype=np.int64), np.zeros(n, dtype=np.int64))


def ivf_assign(X: SparseDataset, ivf: InvertedMeanFile, k: int, threads: int = 1):
    """Plain inverted-file assignment: every postings entry of every term is scanned.

    Returns ``(assign, sims, counters)`` with 0-based cluster ids.
    """
    assign, sim, pairs, madds, _ = _outputs(X.n)
    for_ranges(kernels.ivf_assign_range, X.n, threads, X.indptr, X.indices, X.data,
               ivf.post_ptr, ivf.cent, ivf.val, k, assign, sim, pairs, madds)
    return assign, sim, AssignCounters(int(pairs.sum()), int(madds.sum()), 0)


def _prev(prev_assign, n):
    if prev_assign is None:
        return np.full(n, -1, dtype=np.int64), np.zeros(n)
    return np.ascontiguousarray(prev_assign, dtype=np.int64), None


def ivf_cbicp_assign(X: SparseDataset, ivf: InvertedMeanFile, lam: np.ndarray, cached_sim: np.ndarray | None,
                     prev_assign: np.ndarray | None, k: int, threads: int = 1):
    """Inverted-file assignment with the invariant-pair filter as a per-entry branch."""
    lam = np.ascontiguousarray(lam, dtype=np.bool_)
    prev, zero_sim = _prev(prev_assign, X.n)
    cached = zero_sim if zero_sim is not None else np.ascontiguousarray(cached_sim, dtype=np.float64)
    assign, sim, pairs, madds, branches = _outputs(X.n)
    for_ranges(kernels.cbicp_assign_range, X.n, threads, X.indptr, X.indices, X.data,
               ivf.post_ptr, ivf.cent, ivf.val, k, lam, prev, cached,
               assign, sim, pairs, madds, branches)
    return assign, sim, AssignCounters(int(pairs.sum()), int(madds.sum()), int(branches.sum()))


def sivf_assign(X: SparseDataset, sivf: StructuredInvertedMeanFile, lam: np.ndarray, cached_sim: np.ndarray | None,
                prev_assign: np.ndarray | None, k: int, threads: int = 1):
    """Structured inverted-file assignment.

    Objects in an invariant cluster stop each postings scan at the
    boundary, so no per-entry conditional runs. Returns
    ``(assign, sims, counters, new_lam)``.
    """
    lam = np.ascontiguousarray(lam, dtype=np.bool_)
    if lam.shape != sivf.lam.shape or not np.array_equal(lam, sivf.lam):
        raise StructureMismatch("structured file was built from a different invariance vector")
    prev, zero_sim = _prev(prev_assign, X.n)
    cached = zero_sim if zero_sim is not None else np.ascontiguousarray(cached_sim, dtype=np.float64)
    assign, sim, pairs, madds, _ = _outputs(X.n)
    for_ranges(kernels.sivf_assign_range, X.n, threads, X.indptr, X.indices, X.data,
               sivf.post_ptr, sivf.front_end, sivf.cent, sivf.val, k, lam, prev, cached,
               assign, sim, pairs, madds)
    new_lam = detect_invariant(assign, prev_assign, k)
    return assign, sim, AssignCounters(int(pairs.sum()), int(madds.sum()), 0), new_lam
