"""Compiled periodic difference stencils over flattened grids.

Each grid point is addressed by its flat index; the neighbour tables give the
flat index of the next and previous point along every axis with periodic wrap.
"""

from functools import lru_cache

import numba
import numpy as np


@lru_cache(maxsize=16)
def neighbours(shape):
    """``(plus, minus)`` arrays of shape ``(ndim, npoints)``."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    plus = np.stack([np.roll(idx, -1, axis=a).ravel() for a in range(len(shape))])
    minus = np.stack([np.roll(idx, 1, axis=a).ravel() for a in range(len(shape))])
    plus.setflags(write=False)
    minus.setflags(write=False)
    return plus, minus


@numba.njit(cache=True)
def _gather_diff_kernel(src, plus, minus, inv2h, terms, dst):
    # component-major layout keeps each term a single pass over contiguous rows
    for t in range(terms.shape[0]):
        k = terms[t, 0]
        a = terms[t, 1]
        pos = terms[t, 2]
        s = terms[t, 3] * inv2h[a]
        row_in = src[pos]
        row_out = dst[k]
        pl = plus[a]
        mi = minus[a]
        for pt in range(row_out.shape[0]):
            row_out[pt] += s * (row_in[pl[pt]] - row_in[mi[pt]])


def gather_diff(comps, shape, spacing, terms, ncomp_out):
    """``out[., k] = sum sign * D_axis comps[., pos]`` over rows ``(k, axis, pos, sign)`` of ``terms``.

    ``D_axis`` is the centered first difference.
    """
    src = np.ascontiguousarray(np.asarray(comps, dtype=float).reshape(-1, comps.shape[-1]).T)
    plus, minus = neighbours(tuple(shape))
    inv2h = np.array([0.5 / h for h in spacing])
    dst = np.zeros((ncomp_out, src.shape[1]))
    _gather_diff_kernel(src, plus, minus, inv2h, terms, dst)
    return dst.T.reshape(tuple(shape) + (ncomp_out,))
