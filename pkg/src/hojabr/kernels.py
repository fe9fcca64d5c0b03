"""Numeric kernels behind the relation store and the checker.

Every kernel has a numba implementation and a pure-numpy one with the
same contract.  The numba path is used when numba imports and the
environment variable ``HOJABR_DISABLE_NUMBA`` is unset (or "0").  Both
implementations stay importable as ``<name>_nb`` / ``<name>_np`` so
tests and the benchmark can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None


def _numba_requested() -> bool:
    return os.environ.get("HOJABR_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


def _njit(fn):
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------- CSR decode


def _csr_to_coo_py(P, I, V):
    n = P.shape[0] - 1
    nnz = P[n] - P[0] if n >= 0 else 0
    rows = np.empty(nnz, np.int64)
    cols = np.empty(nnz, np.int64)
    vals = np.empty(nnz, np.float64)
    k = 0
    for i in range(n):
        for p in range(P[i], P[i + 1]):
            rows[k] = i
            cols[k] = I[p]
            vals[k] = V[p]
            k += 1
    return rows, cols, vals


csr_to_coo_nb = _njit(_csr_to_coo_py)


def csr_to_coo_np(P, I, V):
    P = np.asarray(P, np.int64)
    counts = np.diff(P)
    rows = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    sl = slice(P[0], P[-1]) if len(P) else slice(0, 0)
    return rows, np.asarray(I, np.int64)[sl].copy(), np.asarray(V, np.float64)[sl].copy()


def csr_to_coo(P, I, V):
    """(P, I, V) compressed rows -> (rows, cols, vals) coordinate arrays."""
    P = np.ascontiguousarray(P, np.int64)
    I = np.ascontiguousarray(I, np.int64)
    V = np.ascontiguousarray(V, np.float64)
    _check_csr(P, I, V)
    if USE_NUMBA:
        return csr_to_coo_nb(P, I, V)
    return csr_to_coo_np(P, I, V)


def _check_csr(P, I, V):
    if len(P) == 0:
        raise ValueError("CSR row pointer array must have n+1 entries")
    if np.any(np.diff(P) < 0):
        raise ValueError("CSR row pointers must be non-decreasing")
    if P[-1] > min(len(I), len(V)) or P[0] < 0:
        raise ValueError("CSR row pointers exceed the index/value arrays")


# ---------------------------------------------------------------- CSR encode


def _dense_to_csr_py(M):
    n, m = M.shape
    nnz = 0
    for i in range(n):
        for j in range(m):
            if M[i, j] != 0.0:
                nnz += 1
    P = np.zeros(n + 1, np.int64)
    I = np.empty(nnz, np.int64)
    V = np.empty(nnz, np.float64)
    k = 0
    for i in range(n):
        for j in range(m):
            if M[i, j] != 0.0:
                I[k] = j
                V[k] = M[i, j]
                k += 1
        P[i + 1] = k
    return P, I, V


dense_to_csr_nb = _njit(_dense_to_csr_py)


def dense_to_csr_np(M):
    nz = M != 0.0
    P = np.zeros(M.shape[0] + 1, np.int64)
    np.cumsum(nz.sum(axis=1), out=P[1:])
    rows, cols = np.nonzero(nz)
    return P, cols.astype(np.int64), M[rows, cols].astype(np.float64)


def dense_to_csr(M):
    M = np.ascontiguousarray(M, np.float64)
    if M.ndim != 2:
        raise ValueError("CSR encoding needs a matrix")
    if USE_NUMBA:
        return dense_to_csr_nb(M)
    return dense_to_csr_np(M)


# ---------------------------------------------------------------- nonzeros


def _nonzero_flat_py(flat):
    count = 0
    for x in range(flat.shape[0]):
        if flat[x] != 0.0:
            count += 1
    idx = np.empty(count, np.int64)
    vals = np.empty(count, np.float64)
    k = 0
    for x in range(flat.shape[0]):
        if flat[x] != 0.0:
            idx[k] = x
            vals[k] = flat[x]
            k += 1
    return idx, vals


nonzero_flat_nb = _njit(_nonzero_flat_py)


def nonzero_flat_np(flat):
    idx = np.flatnonzero(flat)
    return idx.astype(np.int64), flat[idx].astype(np.float64)


def nonzero(arr):
    """Row-major coordinates (k, ndim) and values of the nonzero cells."""
    arr = np.ascontiguousarray(arr, np.float64)
    flat = arr.reshape(-1)
    idx, vals = (nonzero_flat_nb if USE_NUMBA else nonzero_flat_np)(flat)
    if arr.ndim == 0:
        return np.zeros((len(idx), 0), np.int64), vals
    coords = np.stack(np.unravel_index(idx, arr.shape), axis=1).astype(np.int64)
    return coords, vals


# ---------------------------------------------------------------- closure


def _closure_py(adj):
    n = adj.shape[0]
    reach = adj.copy()
    for k in range(n):
        for i in range(n):
            if reach[i, k]:
                for j in range(n):
                    if reach[k, j]:
                        reach[i, j] = True
    return reach


closure_nb = _njit(_closure_py)


def closure_np(adj):
    reach = adj.copy()
    for k in range(reach.shape[0]):
        reach |= np.outer(reach[:, k], reach[k, :])
    return reach


def transitive_closure(adj):
    """Boolean reachability matrix (paths of length >= 1)."""
    adj = np.ascontiguousarray(adj, np.bool_)
    if adj.shape[0] == 0:
        return adj.copy()
    return (closure_nb if USE_NUMBA else closure_np)(adj)


# ---------------------------------------------------------------- grouping


def _group_scan_py(lhs, rhs):
    """lhs/rhs are already sorted by lhs rows.  Returns group starts and a
    per-group flag set when rhs rows inside the group disagree."""
    n = lhs.shape[0]
    starts = np.empty(n, np.int64)
    conflict = np.zeros(n, np.bool_)
    g = -1
    first = 0
    for r in range(n):
        new = r == 0
        if not new:
            for c in range(lhs.shape[1]):
                if lhs[r, c] != lhs[r - 1, c]:
                    new = True
                    break
        if new:
            g += 1
            starts[g] = r
            first = r
        else:
            for c in range(rhs.shape[1]):
                if rhs[r, c] != rhs[first, c]:
                    conflict[g] = True
                    break
    return starts[: g + 1], conflict[: g + 1]


group_scan_nb = _njit(_group_scan_py)


def group_scan_np(lhs, rhs):
    n = lhs.shape[0]
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.bool_)
    boundary = np.ones(n, np.bool_)
    if lhs.shape[1]:
        boundary[1:] = np.any(lhs[1:] != lhs[:-1], axis=1)
    else:
        boundary[1:] = False
    starts = np.flatnonzero(boundary).astype(np.int64)
    group_of = np.cumsum(boundary) - 1
    if rhs.shape[1] == 0:
        return starts, np.zeros(len(starts), np.bool_)
    differs = np.any(rhs != rhs[starts[group_of]], axis=1)
    conflict = np.zeros(len(starts), np.bool_)
    np.logical_or.at(conflict, group_of, differs)
    return starts, conflict


def group_rows(lhs, rhs=None):
    """Sort rows by the integer-coded ``lhs`` columns and group them.

    Returns ``(order, starts, conflict)``: the sorting permutation, the
    start offset of each group in sorted order, and whether ``rhs``
    varies inside each group.
    """
    lhs = np.ascontiguousarray(lhs, np.int64)
    if lhs.ndim != 2:
        raise ValueError("lhs must be a 2-d code matrix")
    n = lhs.shape[0]
    rhs = np.zeros((n, 0), np.int64) if rhs is None else np.ascontiguousarray(rhs, np.int64)
    if lhs.shape[1]:
        order = np.lexsort(lhs.T[::-1])
    else:
        order = np.arange(n)
    ls, rs = np.ascontiguousarray(lhs[order]), np.ascontiguousarray(rhs[order])
    if n == 0:
        return order, np.zeros(0, np.int64), np.zeros(0, np.bool_)
    starts, conflict = (group_scan_nb if USE_NUMBA else group_scan_np)(ls, rs)
    return order, starts, conflict


def factorize(column) -> np.ndarray:
    """Dense integer codes for arbitrary hashable values (first-seen order)."""
    codes: dict = {}
    out = np.empty(len(column), np.int64)
    for k, v in enumerate(column):
        out[k] = codes.setdefault(_hashable(v), len(codes))
    return out


def _hashable(v):
    # keep 1 and 1.0 together (they are equal keys), keep True apart from 1
    return (type(v) is bool, v)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
