"""Batched small dense linear algebra over grid points.

numpy's stacked ``inv``/``det`` carry a large per-matrix overhead for 4x4 and
6x6 blocks; these compiled loops do the same work without it.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _inv_det_kernel(a, out, det):
    n = a.shape[1]
    m = np.empty((n, 2 * n))
    for p in range(a.shape[0]):
        for i in range(n):
            for j in range(n):
                m[i, j] = a[p, i, j]
                m[i, n + j] = 1.0 if i == j else 0.0
        d = 1.0
        for c in range(n):
            piv = c
            best = abs(m[c, c])
            for r in range(c + 1, n):
                if abs(m[r, c]) > best:
                    best = abs(m[r, c])
                    piv = r
            if piv != c:
                d = -d
                for k in range(2 * n):
                    tmp = m[c, k]
                    m[c, k] = m[piv, k]
                    m[piv, k] = tmp
            pv = m[c, c]
            d *= pv
            if pv == 0.0:
                break
            inv_pv = 1.0 / pv
            for k in range(c, 2 * n):
                m[c, k] *= inv_pv
            for r in range(n):
                if r != c:
                    f = m[r, c]
                    if f != 0.0:
                        for k in range(c, 2 * n):
                            m[r, k] -= f * m[c, k]
        det[p] = d
        for i in range(n):
            for j in range(n):
                out[p, i, j] = m[i, n + j]


@numba.njit(cache=True)
def _det_kernel(a, det):
    n = a.shape[1]
    m = np.empty((n, n))
    for p in range(a.shape[0]):
        for i in range(n):
            for j in range(n):
                m[i, j] = a[p, i, j]
        d = 1.0
        for c in range(n):
            piv = c
            best = abs(m[c, c])
            for r in range(c + 1, n):
                if abs(m[r, c]) > best:
                    best = abs(m[r, c])
                    piv = r
            if piv != c:
                d = -d
                for k in range(n):
                    tmp = m[c, k]
                    m[c, k] = m[piv, k]
                    m[piv, k] = tmp
            pv = m[c, c]
            d *= pv
            if pv == 0.0:
                break
            for r in range(c + 1, n):
                f = m[r, c] / pv
                if f != 0.0:
                    for k in range(c, n):
                        m[r, k] -= f * m[c, k]
        det[p] = d


def inv_det(a):
    """Inverse and determinant of every trailing ``(n, n)`` block."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    flat = np.ascontiguousarray(a.reshape(-1, n, n))
    out = np.empty_like(flat)
    det = np.empty(flat.shape[0])
    _inv_det_kernel(flat, out, det)
    return out.reshape(a.shape), det.reshape(a.shape[:-2])


def inv(a):
    return inv_det(a)[0]


def det(a):
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    flat = np.ascontiguousarray(a.reshape(-1, n, n))
    out = np.empty(flat.shape[0])
    _det_kernel(flat, out)
    return out.reshape(a.shape[:-2])


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@numba.njit(cache=True)
def _mm_kernel(a, b, out):
    for p in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                s = 0.0
                for k in range(a.shape[2]):
                    s += a[p, i, k] * b[p, k, j]
                out[p, i, j] = s


@numba.njit(cache=True)
def _mm_right_const(a, b, out):
    for p in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                s = 0.0
                for k in range(a.shape[2]):
                    s += a[p, i, k] * b[k, j]
                out[p, i, j] = s


@numba.njit(cache=True)
def _mm_left_const(a, b, out):
    for p in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                s = 0.0
                for k in range(a.shape[1]):
                    s += a[i, k] * b[p, k, j]
                out[p, i, j] = s


def _flat3(a):
    return a.reshape((-1,) + a.shape[-2:])


def signed_permutation(m):
    """``(perm, signs)`` with ``m[perm[j], j] = signs[j]`` the only nonzeros, or None."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return None
    nz = m != 0
    if not (np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1)):
        return None
    perm = np.argmax(nz, axis=0)
    signs = m[perm, np.arange(m.shape[1])]
    if not np.all(np.abs(signs) == 1.0):
        return None
    return perm, signs


def mm(a, b):
    """Pointwise matrix product over the leading grid axes; either operand may be a single matrix.

    A single signed permutation matrix (such as the standard complex
    structure) is applied by reindexing, which is exact.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 2 and b.ndim == 2:
        return a @ b
    if b.ndim == 2:
        sp = signed_permutation(b)
        if sp is not None:
            return a[..., sp[0]] * sp[1]
    if a.ndim == 2:
        sp = signed_permutation(a.T)
        if sp is not None:
            return b[..., sp[0], :] * sp[1][:, None]
    if b.ndim == 2:
        lead = a.shape[:-2]
        out = np.empty((int(np.prod(lead)), a.shape[-2], b.shape[-1]))
        _mm_right_const(_flat3(a), b, out)
    elif a.ndim == 2:
        lead = b.shape[:-2]
        out = np.empty((int(np.prod(lead)), a.shape[-2], b.shape[-1]))
        _mm_left_const(a, _flat3(b), out)
    else:
        if a.shape[:-2] != b.shape[:-2]:
            return np.matmul(a, b)
        lead = a.shape[:-2]
        out = np.empty((int(np.prod(lead)), a.shape[-2], b.shape[-1]))
        _mm_kernel(_flat3(a), _flat3(b), out)
    return out.reshape(lead + out.shape[1:])


def uniform(a, core=2):
    """The common block if every grid point of ``a`` holds the same trailing block, else ``None``."""
    a = np.asarray(a)
    lead = a.ndim - core
    if lead == 0:
        return a
    first = a[(0,) * lead]
    if np.array_equal(a, np.broadcast_to(first, a.shape)):
        return np.array(first)
    return None
