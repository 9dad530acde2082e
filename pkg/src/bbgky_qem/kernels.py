"""Hot loops: the annealing sweep and union-find, each with a numpy twin.

The numba versions are plain loops; the numpy versions are written
separately with array slicing (not the same code run uncompiled), so the
benchmark compares two genuine implementations.  Both consume identical
pre-drawn random numbers, so they produce the same chain.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit


@njit(cache=True)
def _sweep_numba(x, xbar, qweight, resid, order, ptr, ridx, rcoef, rsq, shifts, uniforms, lam, wq, wb):
    nt1 = x.shape[1]
    nt = nt1 - 1
    accepted = 0
    dsum = 0.0
    for k in range(order.shape[0]):
        c = order[k]
        q = c // nt
        s = c % nt + 1
        h = shifts[k]
        dev = x[q, s] - xbar[q, s]
        dq = wq * qweight[q, s] * (2.0 * h * dev + h * h)
        lin = 0.0
        for j in range(ptr[c], ptr[c + 1]):
            lin += rcoef[j] * resid[ridx[j]]
        ds = dq + wb * (2.0 * h * lin + h * h * rsq[c])
        if ds <= 0.0 or uniforms[k] <= np.exp(-lam * ds):
            x[q, s] += h
            for j in range(ptr[c], ptr[c + 1]):
                resid[ridx[j]] += rcoef[j] * h
            accepted += 1
            dsum += ds
    return accepted, dsum


def _sweep_numpy(x, xbar, qweight, resid, order, ptr, ridx, rcoef, rsq, shifts, uniforms, lam, wq, wb):
    nt = x.shape[1] - 1
    accepted = 0
    dsum = 0.0
    for k, c in enumerate(order.tolist()):
        q, s = divmod(c, nt)
        s += 1
        h = shifts[k]
        lo, hi = ptr[c], ptr[c + 1]
        idx = ridx[lo:hi]
        coef = rcoef[lo:hi]
        ds = wq * qweight[q, s] * (2.0 * h * (x[q, s] - xbar[q, s]) + h * h) + wb * (
            2.0 * h * np.dot(coef, resid[idx]) + h * h * rsq[c]
        )
        if ds <= 0.0 or uniforms[k] <= np.exp(-lam * ds):
            x[q, s] += h
            resid[idx] += coef * h
            accepted += 1
            dsum += ds
    return accepted, float(dsum)


def anneal_sweep(x, xbar, qweight, resid, order, ptr, ridx, rcoef, rsq, shifts, uniforms, lam, wq, wb, backend=None):
    """One Metropolis sweep over the coordinates listed in ``order``, in place.

    Coordinate ``c`` stands for ``(q, s) = (c // nT, c % nT + 1)``.  The
    action change of a shift ``h`` is the quantum penalty change plus
    ``wb * sum_j (2 h c_j E_j + h^2 c_j^2)`` over the residuals ``j`` the
    coordinate touches (CSR rows ``ptr``/``ridx``/``rcoef``; ``rsq`` holds
    the per-row sums of ``c_j^2``).  Returns ``(n_accepted, sum of accepted dS)``.
    """
    use = USE_NUMBA if backend is None else backend == "numba"
    fn = _sweep_numba if use else _sweep_numpy
    return fn(x, xbar, qweight, resid, order, ptr, ridx, rcoef, rsq, shifts, uniforms, float(lam), float(wq), float(wb))


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def _union_find_numba(n, src, dst):
    parent = np.arange(n)
    rank = np.zeros(n, dtype=np.int8)
    for k in range(src.shape[0]):
        a = _find(parent, src[k])
        b = _find(parent, dst[k])
        if a == b:
            continue
        if rank[a] < rank[b]:
            a, b = b, a
        parent[b] = a
        if rank[a] == rank[b]:
            rank[a] += 1
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = _find(parent, i)
    return labels


def _min_label_numpy(n, src, dst):
    """Connected components by min-label propagation with pointer jumping."""
    labels = np.arange(n)
    while True:
        prev = labels.copy()
        low = np.minimum(labels[src], labels[dst])
        np.minimum.at(labels, src, low)
        np.minimum.at(labels, dst, low)
        labels = labels[labels]
        if np.array_equal(labels, prev):
            return labels


def connected_labels(n: int, src: np.ndarray, dst: np.ndarray, backend=None) -> np.ndarray:
    """Component label per node, canonicalised to the smallest member index."""
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    use = USE_NUMBA if backend is None else backend == "numba"
    raw = _union_find_numba(n, src, dst) if use else _min_label_numpy(n, src, dst)
    # relabel each component by its minimum node index
    first = np.full(n, n, dtype=np.int64)
    np.minimum.at(first, raw, np.arange(n))
    return first[raw]
