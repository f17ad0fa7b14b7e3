"""Reading, writing, weighting and synthesizing sparse datasets.

Text format is svmlight style, one object per line::

    #N D            (optional header)
    label idx:val idx:val ...

with 1-based, strictly ascending feature indices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sparse import SparseDataset, SparseVector

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class NonAscendingIndex(ParseError):
    pass


class EmptyFile(ParseError):
    pass


class InvalidSpec(ValueError):
    pass


class CountMatrix(SparseDataset):
    """A sparse dataset whose values are positive integer term counts."""

    def __post_init__(self):
        super().__post_init__()
        d = self.data
        if d.size and (np.any(d < 1) or np.any(d != np.floor(d))):
            raise ValueError("term counts must be positive integers")


def _parse_label(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        try:
            f = float(tok)
        except ValueError:
            raise ParseError(f"bad label {tok!r}", lineno) from None
        if not f.is_integer():
            raise ParseError(f"non-integer label {tok!r}", lineno)
        return int(f)


def load_sparse_text(path: str | Path, kind: str = "auto") -> SparseDataset:
    """Parse an svmlight-style file.

    ``kind`` is ``"counts"``, ``"values"`` or ``"auto"`` (a
    :class:`CountMatrix` when every value is a positive integer).
    D is the largest index seen unless a ``#N D`` header sets it.
    """
    header_dim = None
    labels: list[int] = []
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                    header_dim = int(parts[1])
                continue
            toks = line.split()
            labels.append(_parse_label(toks[0], lineno))
            last = 0
            for tok in toks[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected idx:val, got {tok!r}", lineno)
                try:
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise ParseError(f"malformed pair {tok!r}", lineno) from None
                if idx < 1:
                    raise ParseError(f"index {idx} is not 1-based", lineno)
                if idx <= last:
                    raise NonAscendingIndex(f"index {idx} follows {last}", lineno)
                if not math.isfinite(val):
                    raise ParseError(f"non-finite value {val_s!r}", lineno)
                last = idx
                if val != 0.0:
                    indices.append(idx - 1)
                    data.append(val)
            indptr.append(len(indices))
    if not labels:
        raise EmptyFile(f"{path} contains no data lines")
    dim = max(indices) + 1 if indices else 1
    if header_dim is not None:
        if header_dim < dim:
            raise ParseError(f"header D={header_dim} smaller than max index {dim}")
        dim = header_dim
    arr = np.asarray(data, dtype=np.float64)
    is_counts = arr.size > 0 and bool(np.all(arr >= 1) and np.all(arr == np.floor(arr)))
    if kind == "counts" or (kind == "auto" and is_counts):
        cls = CountMatrix
    elif kind in ("values", "auto"):
        cls = SparseDataset
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return cls(np.asarray(indptr), np.asarray(indices, dtype=np.int64), arr, dim, np.asarray(labels))


def _fmt(v: float) -> str:
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def format_sparse_rows(rows: Iterable[SparseVector], labels: Iterable[int] | None = None,
                       header: tuple[int, int] | None = None) -> str:
    out = []
    if header is not None:
        out.append(f"#{header[0]} {header[1]}\n")
    labels = iter(labels) if labels is not None else None
    for row in rows:
        lab = next(labels) if labels is not None else 0
        feats = " ".join(f"{t}:{_fmt(v)}" for t, v in zip(row.term_ids.tolist(), row.values.tolist()))
        out.append(f"{lab} {feats}".rstrip() + "\n")
    return "".join(out)


def save_sparse_text(X: SparseDataset, path: str | Path, header: bool = True) -> None:
    labels = X.labels.tolist() if X.labels is not None else None
    text = format_sparse_rows(X, labels, (X.n, X.dim) if header else None)
    Path(path).write_text(text)


def _l2_rows(indptr: np.ndarray, data: np.ndarray) -> np.ndarray:
    rows = np.repeat(np.arange(indptr.size - 1), np.diff(indptr))
    norms = np.sqrt(np.bincount(rows, weights=data * data, minlength=indptr.size - 1))
    return data / norms[rows]


def tfidf_normalize(c: SparseDataset, return_removed: bool = False):
    """Weight raw counts by ``tf * ln(N / df)`` and L2-normalize every row.

    Terms present in every document get weight 0 and disappear. Rows left
    empty are removed with a warning; pass ``return_removed=True`` to also
    get their original row numbers.
    """
    n = c.n
    df = np.bincount(c.indices, minlength=c.dim)
    idf = np.zeros(c.dim)
    present = df > 0
    idf[present] = np.log(n / df[present])
    w = c.data * idf[c.indices]
    keep = w != 0.0
    row_of = np.repeat(np.arange(n), np.diff(c.indptr))
    kept_rows = row_of[keep]
    row_nnz = np.bincount(kept_rows, minlength=n)
    removed = np.flatnonzero(row_nnz == 0)
    if removed.size:
        log.warning("tf-idf removed %d empty document(s): %s", removed.size, (removed + 1).tolist()[:20])
    survivors = np.flatnonzero(row_nnz > 0)
    if survivors.size == 0:
        raise ValueError("every document became empty after idf weighting")
    indptr = np.zeros(survivors.size + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(row_nnz[survivors])
    data = _l2_rows(indptr, w[keep])
    labels = None if c.labels is None else c.labels[survivors]
    out = SparseDataset(indptr, c.indices[keep], data, c.dim, labels)
    return (out, removed) if return_removed else out


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the synthetic corpus generator.

    Defaults give a desk-scale corpus whose average document length
    matches a real biomedical abstract collection (about 59 distinct
    terms per document).
    """

    N: int = 2000
    D: int = 10000
    k_true: int = 20
    avg_nnz: float = 59.0
    zipf_exponent: float = 1.2
    cluster_separation: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        if self.N < 1 or self.D < 1:
            raise InvalidSpec("N and D must be positive")
        if not 1 <= self.k_true <= self.N:
            raise InvalidSpec(f"k_true must lie in [1, N], got {self.k_true}")
        if not 1 <= self.avg_nnz <= self.D:
            raise InvalidSpec(f"avg_nnz must lie in [1, D], got {self.avg_nnz}")
        if not 0 < self.cluster_separation <= 1:
            raise InvalidSpec("cluster_separation must lie in (0, 1]")
        if self.zipf_exponent < 0:
            raise InvalidSpec("zipf_exponent must be nonnegative")


# the standard synthetic fixture used by the benchmarks and acceptance checks
FIXTURE = SynthSpec(seed=42)


def _distinct_draws(rng, pop: np.ndarray, need: int, exclude: set[int]) -> list[int]:
    out: list[int] = []
    seen = set(exclude)
    avail = pop.size - len(seen)
    need = min(need, avail)
    while len(out) < need:
        for t in rng.choice(pop.size, size=2 * (need - len(out)) + 8, p=pop).tolist():
            if t not in seen:
                seen.add(t)
                out.append(t)
                if len(out) == need:
                    break
    return out


def generate_synthetic(spec: SynthSpec) -> tuple[SparseDataset, np.ndarray]:
    """Planted-cluster corpus with Zipf term popularity.

    Each cluster owns a prototype vocabulary drawn from the popularity
    distribution. A document draws about ``avg_nnz`` distinct terms, a
    ``cluster_separation`` share of them from its prototype and the rest
    from the background distribution. Counts are weighted by a smoothed
    idf and rows are L2-normalized. Returns ``(dataset, labels)`` with
    0-based labels; output depends only on ``spec``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    D, N = spec.D, spec.N
    ranks = rng.permutation(D)
    pop = 1.0 / (ranks + 1.0) ** spec.zipf_exponent
    pop /= pop.sum()

    proto_size = int(min(D, max(1, round(3 * spec.avg_nnz))))
    used = np.zeros(D, dtype=bool)
    prototypes = []
    for _ in range(spec.k_true):
        p = pop.copy()
        if D - used.sum() >= proto_size:
            p[used] = 0.0
        p /= p.sum()
        terms = rng.choice(D, size=proto_size, replace=False, p=p)
        used[terms] = True
        w = 1.0 / np.arange(1, proto_size + 1) ** spec.zipf_exponent
        prototypes.append((terms, w / w.sum()))

    labels = rng.permutation(np.arange(N) % spec.k_true)
    rows_t, rows_c = [], []
    for i in range(N):
        terms_c, w_c = prototypes[labels[i]]
        nnz = int(np.clip(rng.poisson(spec.avg_nnz), 1, D))
        m = min(int(rng.binomial(nnz, spec.cluster_separation)), proto_size)
        chosen = terms_c[rng.choice(proto_size, size=m, replace=False, p=w_c)].tolist() if m else []
        chosen += _distinct_draws(rng, pop, nnz - m, set(chosen))
        t = np.sort(np.asarray(chosen, dtype=np.int64))
        rows_t.append(t)
        rows_c.append(rng.geometric(0.6, size=t.size).astype(np.float64))

    indptr = np.zeros(N + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([t.size for t in rows_t])
    indices = np.concatenate(rows_t)
    counts = np.concatenate(rows_c)
    df = np.bincount(indices, minlength=D)
    idf = np.log((1.0 + N) / (1.0 + df)) + 1.0
    data = _l2_rows(indptr, counts * idf[indices])
    return SparseDataset(indptr, indices, data, D, labels), labels


def write_labels(labels: Sequence[int], path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels))
