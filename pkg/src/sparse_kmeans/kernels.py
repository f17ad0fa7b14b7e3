"""Compiled inner loops.

Every assignment kernel works on a half-open object range ``[lo, hi)`` and
writes only its own slice of the output arrays, so the driver can hand
disjoint ranges to worker threads (all kernels release the GIL). Per-object
counters are written to arrays and summed by the caller, which makes the
totals independent of how ranges were scheduled.

Cluster ids are 0-based here. Accumulators are zeroed by revisiting the
entries an object touched rather than by an O(k) memset.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _pick(rho, buf, nbuf, seeded, seed_j, seed_val, lam, k):
    # argmax over candidates with strict '>' in ascending id order, i.e. the
    # lowest id wins ties; candidates are all centroids, or when seeded the
    # moving ones plus the invariant current centroid (value = seed_val)
    best = -1
    bv = -np.inf
    if seeded:
        best = seed_j
        bv = seed_val
    for n in range(nbuf):
        c = buf[n]
        r = rho[c]
        if r > bv or (r == bv and c < best):
            best = c
            bv = r
    if bv <= 0.0:
        # untouched candidates sit at 0.0 and may tie or win on index
        best = -1
        bv = -np.inf
        for j in range(k):
            if seeded:
                if j == seed_j:
                    r = seed_val
                elif lam[j]:
                    continue
                else:
                    r = rho[j]
            else:
                r = rho[j]
            if r > bv:
                best = j
                bv = r
    return best, bv


@njit(**_JIT)
def _clear(rho, buf, nbuf):
    for n in range(nbuf):
        rho[buf[n]] = 0.0


@njit(**_JIT)
def _visit_bound(indptr, indices, post_ptr, i):
    total = 0
    for h in range(indptr[i], indptr[i + 1]):
        s = indices[h]
        total += post_ptr[s + 1] - post_ptr[s]
    return total


@njit(**_JIT)
def dense_assign_range(lo, hi, indptr, indices, data, unit, icp, lam, prev_assign, prev_sim,
                       assign_out, sim_out, pairs_out, madds_out, branches_out):
    k = unit.shape[0]
    for i in range(lo, hi):
        a = prev_assign[i]
        skip_inv = icp and a >= 0 and lam[a]
        nt = indptr[i + 1] - indptr[i]
        best = -1
        bv = -np.inf
        pairs = 0
        branches = 0
        for j in range(k):
            if skip_inv:
                branches += 1
                if lam[j]:
                    if j == a:
                        r = prev_sim[i]
                        if r > bv:
                            best = j
                            bv = r
                    continue
            r = 0.0
            for h in range(indptr[i], indptr[i + 1]):
                r += data[h] * unit[j, indices[h]]
            pairs += 1
            if r > bv:
                best = j
                bv = r
        assign_out[i] = best
        sim_out[i] = bv
        pairs_out[i] = pairs
        madds_out[i] = pairs * nt
        branches_out[i] = branches


@njit(**_JIT)
def ivf_assign_range(lo, hi, indptr, indices, data, post_ptr, post_cent, post_val, k,
                     assign_out, sim_out, pairs_out, madds_out):
    rho = np.zeros(k)
    lam = np.zeros(k, dtype=np.bool_)
    buf = np.empty(16, dtype=np.int64)
    for i in range(lo, hi):
        need = _visit_bound(indptr, indices, post_ptr, i)
        if need > buf.size:
            buf = np.empty(2 * need, dtype=np.int64)
        nbuf = 0
        for h in range(indptr[i], indptr[i + 1]):
            s = indices[h]
            v = data[h]
            for q in range(post_ptr[s], post_ptr[s + 1]):
                c = post_cent[q]
                rho[c] += v * post_val[q]
                buf[nbuf] = c
                nbuf += 1
        best, bv = _pick(rho, buf, nbuf, False, -1, 0.0, lam, k)
        _clear(rho, buf, nbuf)
        assign_out[i] = best
        sim_out[i] = bv
        pairs_out[i] = k
        madds_out[i] = nbuf


@njit(**_JIT)
def cbicp_assign_range(lo, hi, indptr, indices, data, post_ptr, post_cent, post_val, k,
                       lam, prev_assign, prev_sim, assign_out, sim_out, pairs_out, madds_out, branches_out):
    n_moving = 0
    for j in range(k):
        if not lam[j]:
            n_moving += 1
    rho = np.zeros(k)
    buf = np.empty(16, dtype=np.int64)
    for i in range(lo, hi):
        need = _visit_bound(indptr, indices, post_ptr, i)
        if need > buf.size:
            buf = np.empty(2 * need, dtype=np.int64)
        nbuf = 0
        branches = 0
        a = prev_assign[i]
        if a >= 0 and lam[a]:
            pairs_out[i] = n_moving
            for h in range(indptr[i], indptr[i + 1]):
                s = indices[h]
                v = data[h]
                for q in range(post_ptr[s], post_ptr[s + 1]):
                    c = post_cent[q]
                    branches += 1
                    if not lam[c]:
                        rho[c] += v * post_val[q]
                        buf[nbuf] = c
                        nbuf += 1
            best, bv = _pick(rho, buf, nbuf, True, a, prev_sim[i], lam, k)
        else:
            pairs_out[i] = k
            for h in range(indptr[i], indptr[i + 1]):
                s = indices[h]
                v = data[h]
                for q in range(post_ptr[s], post_ptr[s + 1]):
                    c = post_cent[q]
                    rho[c] += v * post_val[q]
                    buf[nbuf] = c
                    nbuf += 1
            best, bv = _pick(rho, buf, nbuf, False, -1, 0.0, lam, k)
        _clear(rho, buf, nbuf)
        assign_out[i] = best
        sim_out[i] = bv
        madds_out[i] = nbuf
        branches_out[i] = branches


@njit(**_JIT)
def sivf_assign_range(lo, hi, indptr, indices, data, post_ptr, front_end, post_cent, post_val, k,
                      lam, prev_assign, prev_sim, assign_out, sim_out, pairs_out, madds_out):
    n_moving = 0
    for j in range(k):
        if not lam[j]:
            n_moving += 1
    rho = np.zeros(k)
    buf = np.empty(16, dtype=np.int64)
    for i in range(lo, hi):
        need = _visit_bound(indptr, indices, post_ptr, i)
        if need > buf.size:
            buf = np.empty(2 * need, dtype=np.int64)
        nbuf = 0
        a = prev_assign[i]
        seeded = a >= 0 and lam[a]
        if seeded:
            pairs_out[i] = n_moving
            # moving centroids occupy the front of each postings array, so
            # the filter is just a shorter loop bound
            for h in range(indptr[i], indptr[i + 1]):
                s = indices[h]
                v = data[h]
                for q in range(post_ptr[s], front_end[s]):
                    c = post_cent[q]
                    rho[c] += v * post_val[q]
                    buf[nbuf] = c
                    nbuf += 1
            best, bv = _pick(rho, buf, nbuf, True, a, prev_sim[i], lam, k)
        else:
            pairs_out[i] = k
            for h in range(indptr[i], indptr[i + 1]):
                s = indices[h]
                v = data[h]
                for q in range(post_ptr[s], post_ptr[s + 1]):
                    c = post_cent[q]
                    rho[c] += v * post_val[q]
                    buf[nbuf] = c
                    nbuf += 1
            best, bv = _pick(rho, buf, nbuf, False, -1, 0.0, lam, k)
        _clear(rho, buf, nbuf)
        assign_out[i] = best
        sim_out[i] = bv
        madds_out[i] = nbuf


@njit(**_JIT)
def cluster_means(indptr, indices, data, assign, k, dim):
    """Per-cluster raw means as sparse rows, summing members in index order.

    Returns ``(ptr, terms, raw, norms, counts)``; empty clusters get an
    empty row and norm 0.
    """
    n = assign.size
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[assign[i]] += 1
    start = np.zeros(k + 1, dtype=np.int64)
    for j in range(k):
        start[j + 1] = start[j] + counts[j]
    cursor = start[:-1].copy()
    members = np.empty(n, dtype=np.int64)
    for i in range(n):
        a = assign[i]
        members[cursor[a]] = i
        cursor[a] += 1

    w = np.zeros(dim)
    mark = np.full(dim, -1, dtype=np.int64)
    tbuf = np.empty(dim, dtype=np.int64)
    ptr = np.zeros(k + 1, dtype=np.int64)
    terms = np.empty(indices.size, dtype=np.int64)
    raw = np.empty(indices.size)
    norms = np.zeros(k)
    out = 0
    for j in range(k):
        nt = 0
        for m in range(start[j], start[j + 1]):
            i = members[m]
            for h in range(indptr[i], indptr[i + 1]):
                t = indices[h]
                if mark[t] != j:
                    mark[t] = j
                    w[t] = 0.0
                    tbuf[nt] = t
                    nt += 1
                w[t] += data[h]
        if nt > 0:
            order = np.sort(tbuf[:nt])
            sq = 0.0
            for t in order:
                if w[t] != 0.0:
                    x = w[t] / counts[j]
                    terms[out] = t
                    raw[out] = x
                    sq += x * x
                    out += 1
            norms[j] = math.sqrt(sq)
        ptr[j + 1] = out
    return ptr, terms[:out].copy(), raw[:out].copy(), norms, counts


@njit(**_JIT)
def objective_terms(indptr, indices, data, assign, m_ptr, m_terms, m_raw, norms, dim):
    """Per-object cosine to its unit mean and squared distance to its raw mean."""
    n = assign.size
    k = norms.size
    cos = np.zeros(n)
    sq = np.zeros(n)
    raw_sq = np.zeros(k)
    for j in range(k):
        acc = 0.0
        for p in range(m_ptr[j], m_ptr[j + 1]):
            acc += m_raw[p] * m_raw[p]
        raw_sq[j] = acc
    # group objects by cluster so each mean is scattered once
    order = np.argsort(assign, kind="mergesort")
    scratch = np.zeros(dim)
    cur = -1
    for idx in range(n):
        i = order[idx]
        j = assign[i]
        if j != cur:
            if cur >= 0:
                for p in range(m_ptr[cur], m_ptr[cur + 1]):
                    scratch[m_terms[p]] = 0.0
            for p in range(m_ptr[j], m_ptr[j + 1]):
                scratch[m_terms[p]] = m_raw[p]
            cur = j
        dot_raw = 0.0
        dot_unit = 0.0
        xx = 0.0
        nrm = norms[j]
        for h in range(indptr[i], indptr[i + 1]):
            v = data[h]
            r = scratch[indices[h]]
            dot_raw += v * r
            dot_unit += v * (r / nrm)
            xx += v * v
        cos[i] = dot_unit
        sq[i] = xx - 2.0 * dot_raw + raw_sq[j]
    return cos, sq
