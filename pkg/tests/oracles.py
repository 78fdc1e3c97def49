"""Independent reference computations shared by the test modules.

Everything here is computed symbolically or in closed form and frozen into
lambdified functions; nothing imports the package's difference operators.
"""

import math
from functools import lru_cache

import numpy as np
import sympy as sp

X, Y = sp.symbols("x y", real=True)


def _ricci(g, coords):
    """Symbolic Ricci tensor of ``g`` from the Christoffel symbols of the second kind.

    ``R(d_i, d_j) d_k = (d_i G^p_jk - d_j G^p_ik + G^p_im G^m_jk - G^p_jm G^m_ik) d_p`` and
    ``Ric_jk`` is its trace over ``i = p``.
    """
    dim = len(coords)
    ginv = g.inv()
    gam = [[[sp.simplify(sum(ginv[p, l] * (sp.diff(g[l, j], coords[i]) + sp.diff(g[l, i], coords[j])
                                           - sp.diff(g[i, j], coords[l])) for l in range(dim)) / 2)
             for j in range(dim)] for i in range(dim)] for p in range(dim)]
    ric = sp.zeros(dim, dim)
    for j in range(dim):
        for k in range(dim):
            s = 0
            for i in range(dim):
                s += sp.diff(gam[i][j][k], coords[i]) - sp.diff(gam[i][i][k], coords[j])
                for m in range(dim):
                    s += gam[i][i][m] * gam[m][j][k] - gam[i][j][m] * gam[m][i][k]
            ric[j, k] = sp.simplify(s)
    return ric


@lru_cache(maxsize=None)
def diagonal_metric_ricci(dim=4, amplitude=0.1):
    """Ricci of ``g = diag(e^{2u}, e^{2v}, e^{2w}, 1, ...)`` with ``u, v, w`` trigonometric in ``(x, y)``.

    Returns ``(g_fn, ric_fn)``; each maps coordinate arrays ``(x, y)`` to a
    ``dim x dim`` nested list of arrays.
    """
    coords = sp.symbols(f"c0:{dim}", real=True)
    x, y = coords[0], coords[1]
    u = amplitude * sp.cos(x) * sp.sin(y)
    v = amplitude * sp.sin(x + y)
    w = amplitude * sp.cos(2 * x - y)
    g = sp.diag(*([sp.exp(2 * u), sp.exp(2 * v), sp.exp(2 * w)] + [sp.Integer(1)] * (dim - 3)))
    ric = _ricci(g, coords)
    return sp.lambdify((x, y), g.tolist(), "numpy"), sp.lambdify((x, y), ric.tolist(), "numpy")


@lru_cache(maxsize=None)
def warped_metric_ricci(amplitude=0.1):
    """Ricci of ``diag(1, 1, b, b)`` on ``T^4`` with ``b = exp(amplitude cos x)``, as ``(x, y) -> 4 x 4``."""
    coords = sp.symbols("c0:4", real=True)
    x, y = coords[0], coords[1]
    b = sp.exp(amplitude * sp.cos(x))
    ric = _ricci(sp.diag(1, 1, b, b), coords)
    return sp.lambdify((x, y), ric.tolist(), "numpy")


def evaluate_matrix(fn, x, y, shape):
    rows = fn(x, y)
    n = len(rows)
    out = np.zeros(shape + (n, n))
    for i in range(n):
        for j in range(n):
            out[..., i, j] = np.broadcast_to(rows[i][j], shape)
    return out


def bessel_i0_series(z, terms=40):
    """``I_0(z) = sum (z/2)^{2k} / (k!)^2``."""
    return sum((0.5 * z) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))


def heat_mode_decay(amplitude, k, t):
    """Exact ``u(t)`` for ``u_t = u_xx`` from ``amplitude cos(kx)``: the factor ``exp(-k^2 t)``."""
    return amplitude * math.exp(-k * k * t)
