"""Exterior calculus on the periodic grid.

Forms are stored by strictly increasing multi-index with unit coefficients,
``alpha = sum_{I increasing} alpha_I dx^I``; the antisymmetric tensor with
``alpha(e_{i1}, ..., e_{ip})`` entries is ``FormField.full()``.  With this
convention the codifferential of a p-form in full-tensor language is
``(d* alpha)_{J} = -g^{kl} nabla_k alpha_{lJ}`` (no p-dependent factor).

The production codifferential is ``-*d*`` (the dimension is always even);
the covariant-index route is kept as an independent check.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from . import _batched, _stencil
from .curvature import Metric, covariant_derivative
from .fields import (
    FormField,
    GridSpec,
    ScalarField,
    TensorField,
    diff,
    form_index_lookup,
    form_indices,
    gradient,
    integrate_on,
    permutation_sign,
)


# --- index tables ----------------------------------------------------------


@lru_cache(maxsize=None)
def _d_table(dim, p):
    """For each (p+1)-index K: tuples (sign, axis, position of K minus that axis)."""
    look = form_index_lookup(dim, p)
    table = []
    for K in form_indices(dim, p + 1):
        terms = []
        for s, k in enumerate(K):
            rest = K[:s] + K[s + 1:]
            terms.append(((-1) ** s, k, look[rest]))
        table.append(tuple(terms))
    return tuple(table)


@lru_cache(maxsize=None)
def _star_table(dim, p):
    """For each (dim-p)-index J: (position of its complement, sign of (Jbar, J))."""
    look = form_index_lookup(dim, p)
    out = []
    for J in form_indices(dim, dim - p):
        Jbar = tuple(i for i in range(dim) if i not in J)
        out.append((look[Jbar], permutation_sign(Jbar + J)))
    pos = np.array([t[0] for t in out], dtype=np.intp)
    sign = np.array([t[1] for t in out], dtype=float)
    return pos, sign


@lru_cache(maxsize=None)
def _wedge_table(dim, p, q):
    la, lb = form_index_lookup(dim, p), form_index_lookup(dim, q)
    table = []
    for K in form_indices(dim, p + q):
        terms = []
        for I in form_indices(len(K), p):
            Iset = tuple(K[i] for i in I)
            Jset = tuple(k for k in K if k not in Iset)
            terms.append((permutation_sign(Iset + Jset), la[Iset], lb[Jset]))
        table.append(tuple(terms))
    return tuple(table)


@lru_cache(maxsize=None)
def _interior_table(dim, p):
    """For each (p-1)-index J: (k, sign, position of sorted(k, J)) over k not in J."""
    look = form_index_lookup(dim, p)
    table = []
    for J in form_indices(dim, p - 1):
        terms = []
        for k in range(dim):
            if k in J:
                continue
            merged = (k,) + J
            terms.append((k, permutation_sign(merged), look[tuple(sorted(merged))]))
        table.append(tuple(terms))
    return tuple(table)


# --- array-level kernels ---------------------------------------------------


@lru_cache(maxsize=None)
def _d_terms(dim, p):
    rows = [(kk, axis, pos, sign) for kk, terms in enumerate(_d_table(dim, p)) for sign, axis, pos in terms]
    return np.array(rows, dtype=np.int64)


def d_array(comps, grid: GridSpec, p):
    """Exterior derivative of stored components of a p-form."""
    if p >= grid.dim:
        raise ValueError(f"cannot differentiate a {p}-form in dimension {grid.dim}")
    comps = np.asarray(comps)
    if comps.shape[:-1] == grid.shape:
        return _stencil.gather_diff(comps, grid.shape, grid.spacing, _d_terms(grid.dim, p), math.comb(grid.dim, p + 1))
    partials = {}
    out = np.empty(comps.shape[:-1] + (math.comb(grid.dim, p + 1),))
    for kk, terms in enumerate(_d_table(grid.dim, p)):
        acc = None
        for sign, axis, pos in terms:
            if axis not in partials:
                partials[axis] = diff(comps, axis, grid.spacing[axis])
            term = partials[axis][..., pos]
            acc = sign * term if acc is None else (acc + term if sign > 0 else acc - term)
        out[..., kk] = acc
    return out


def star_array(comps, metric: Metric, p):
    """Hodge star: ``(*alpha)_J = sqrt(det g) eps(Jbar, J) alpha^{Jbar}``."""
    pos, sign = _star_table(metric.dim, p)
    raised = metric.raise_form(comps, p)
    return raised[..., pos] * sign * metric.sqrt_det[..., None]


def codiff_array(comps, metric: Metric, p):
    """``d* = -*d*`` on stored components."""
    if p == 0:
        return np.zeros(comps.shape[:-1] + (0,))
    n = metric.dim
    s = star_array(comps, metric, p)
    ds = d_array(s, metric.grid, n - p)
    return -star_array(ds, metric, n - p + 1)


def wedge_array(a, b, dim, p, q):
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (math.comb(dim, p + q),))
    for kk, terms in enumerate(_wedge_table(dim, p, q)):
        for sign, ia, ib in terms:
            out[..., kk] += sign * a[..., ia] * b[..., ib]
    return out


def interior_array(X, comps, dim, p):
    """``(iota_X alpha)_J = X^k alpha_{kJ}``."""
    out = np.zeros(comps.shape[:-1] + (math.comb(dim, p - 1),))
    for jj, terms in enumerate(_interior_table(dim, p)):
        for k, sign, pos in terms:
            out[..., jj] += sign * X[..., k] * comps[..., pos]
    return out


def inner_array(a, b, metric: Metric, p):
    """Pointwise ``<alpha, beta>`` via the Gram-determinant (compound) matrix of ``g^{-1}``."""
    return np.sum(a * metric.raise_form(b, p), axis=-1)


def d_star_d_array(W_comps, metric: Metric):
    """Route (a): ``d*(d omega)`` for a two-form."""
    return codiff_array(d_array(W_comps, metric.grid, 2), metric, 3)


def minus_dstar_d_covariant_full(W, metric: Metric):
    """Route (b): ``g^pq (nabla_p nabla_q w_ij - nabla_p nabla_i w_qj + nabla_p nabla_j w_qi)``.

    ``W`` is the full antisymmetric matrix; returns a full matrix.
    """
    n1 = covariant_derivative(metric, W)       # [q, i, j]
    n2 = covariant_derivative(metric, n1)      # [p, q, i, j]
    gi = metric.inv
    t1 = np.einsum("...pq,...pqij->...ij", gi, n2)
    t2 = np.einsum("...pq,...piqj->...ij", gi, n2)
    return t1 - t2 + np.swapaxes(t2, -1, -2)


def _contract_first_two(gi, nT):
    g_axes = gi.ndim - 2
    rest = nT.ndim - g_axes - 2
    letters = "abcdefgh"[:rest]
    return np.einsum(f"...kl,...kl{letters}->...{letters}", gi, nT)


def deturck_x_array(W, metric: Metric, W_inv):
    """``X^k = g^pq d_p(w_qj) w^{jk}`` with the flat background connection."""
    dW = np.moveaxis(gradient(W, metric.grid), -1, -3)   # [p, q, j]
    v = np.einsum("...pq,...pqj->...j", metric.inv, dW)
    return np.einsum("...j,...jk->...k", v, W_inv)


def lie_form_full(X, T, grid: GridSpec):
    """Coordinate Lie derivative of a covariant tensor (full components)."""
    dX = gradient(X, grid)                     # dX[..., k, a] = d_a X^k
    dT = gradient(T, grid)
    r = T.ndim - len(grid.shape)
    Xb = X.reshape(X.shape[:-1] + (1,) * r + X.shape[-1:])
    out = np.sum(dT * Xb, axis=-1)
    letters = "abcdefgh"[:r]
    for s in range(r):
        src = letters[:s] + "k" + letters[s + 1:]
        out = out + np.einsum(f"...k{letters[s]},...{src}->...{letters}", dX, T)
    return out


def lie_J_array(X, J, grid: GridSpec):
    """``(L_X J)^j_i = X^k d_k J^j_i - J^k_i d_k X^j + J^j_k d_i X^k``."""
    A = gradient(X, grid)                      # A[..., j, k] = d_k X^j
    adv = np.einsum("...jik,...k->...ji", gradient(J, grid), X)
    return adv - _batched.mm(A, J) + _batched.mm(J, A)


# --- field-level API --------------------------------------------------------


def _metric_of(g):
    if isinstance(g, Metric):
        return g
    if hasattr(g, "metric"):
        return g.metric
    return Metric.from_field(g)


def exterior_d(alpha: FormField) -> FormField:
    return FormField(alpha.grid, alpha.degree + 1, d_array(alpha.components, alpha.grid, alpha.degree))


def hodge_star(alpha: FormField, g) -> FormField:
    m = _metric_of(g)
    return FormField(alpha.grid, m.dim - alpha.degree, star_array(alpha.components, m, alpha.degree))


def wedge(alpha: FormField, beta: FormField) -> FormField:
    n = alpha.grid.dim
    return FormField(alpha.grid, alpha.degree + beta.degree,
                     wedge_array(alpha.components, beta.components, n, alpha.degree, beta.degree))


def interior(X: TensorField, alpha: FormField) -> FormField:
    return FormField(alpha.grid, alpha.degree - 1,
                     interior_array(X.components, alpha.components, alpha.grid.dim, alpha.degree))


def inner(alpha: FormField, beta: FormField, g) -> ScalarField:
    m = _metric_of(g)
    return ScalarField(alpha.grid, inner_array(alpha.components, beta.components, m, alpha.degree))


def l2_inner(alpha: FormField, beta: FormField, g) -> float:
    """``(alpha, beta) = int <alpha, beta> dmu``."""
    m = _metric_of(g)
    return integrate_on(alpha.grid, inner_array(alpha.components, beta.components, m, alpha.degree) * m.sqrt_det)


def codiff(alpha: FormField, g, Gamma=None) -> FormField:
    """Codifferential ``-*d*``; ``Gamma`` is accepted for interface symmetry and unused."""
    if alpha.degree == 0:
        raise ValueError("the codifferential of a function is zero-degree-less")
    m = _metric_of(g)
    return FormField(alpha.grid, alpha.degree - 1, codiff_array(alpha.components, m, alpha.degree))


def codiff_covariant(alpha: FormField, g) -> FormField:
    """Index route ``-g^{kl} nabla_k alpha_{lJ}``, Christoffels from ``g``."""
    if alpha.degree not in (1, 2, 3):
        raise ValueError(f"index-route codifferential implemented for degrees 1-3, got {alpha.degree}")
    m = _metric_of(g)
    out = -_contract_first_two(m.inv, covariant_derivative(m, alpha.full()))
    if alpha.degree == 1:
        return FormField(alpha.grid, 0, out[..., None])
    return FormField.from_full(alpha.grid, alpha.degree - 1, out)


def dstar_d(omega: FormField, pair) -> FormField:
    """Production route: ``codiff(exterior_d(omega))`` with the pair's metric."""
    m = _metric_of(pair)
    return FormField(omega.grid, 2, d_star_d_array(omega.components, m))


def dstar_d_covariant(omega: FormField, pair) -> FormField:
    """Index route built from second covariant derivatives of ``omega``."""
    m = _metric_of(pair)
    return FormField.from_full(omega.grid, 2, -minus_dstar_d_covariant_full(omega.full(), m))


def hodge_laplacian(alpha: FormField, pair) -> FormField:
    """``Delta = d d* + d* d``."""
    m = _metric_of(pair)
    p, grid = alpha.degree, alpha.grid
    out = np.zeros_like(np.asarray(alpha.components))
    if p < grid.dim:
        out = out + codiff_array(d_array(alpha.components, grid, p), m, p + 1)
    if p > 0:
        out = out + d_array(codiff_array(alpha.components, m, p), grid, p - 1)
    return FormField(grid, p, out)


def volume_array(W):
    """Density of ``omega^n / n!`` (the Pfaffian)."""
    from .hermitian import pfaffian_array
    return pfaffian_array(W)


def energies(pair):
    """``(H0, H1, H, volume)`` with ``H0 = (d omega, d omega)``, ``H1 = (d* omega, d* omega)``."""
    m, grid = pair.metric, pair.grid
    w = np.asarray(pair.omega.components)
    dw = d_array(w, grid, 2)
    sw = codiff_array(w, m, 2)
    h0 = integrate_on(grid, inner_array(dw, dw, m, 3) * m.sqrt_det)
    h1 = integrate_on(grid, inner_array(sw, sw, m, 1) * m.sqrt_det)
    vol = integrate_on(grid, volume_array(pair.W))
    return h0, h1, h0 + h1, vol


def wedge_power(omega: FormField, k: int) -> FormField:
    """``omega^k / k!``."""
    out = FormField(omega.grid, 0, np.ones(omega.grid.shape + (1,)))
    for _ in range(k):
        out = wedge(out, omega)
    return out.scaled(1.0 / math.factorial(k))


def lie_derivative_form(X: TensorField, alpha: FormField) -> FormField:
    """Coordinate formula ``X^k d_k a_I + sum_s d_{i_s} X^k a_{..k..}``."""
    if alpha.degree == 0:
        comps = np.einsum("...k,...k->...", gradient(alpha.components[..., 0], alpha.grid), X.components)
        return FormField(alpha.grid, 0, comps[..., None])
    full = lie_form_full(np.asarray(X.components), alpha.full(), alpha.grid)
    return FormField.from_full(alpha.grid, alpha.degree, full)


def lie_derivative_cartan(X: TensorField, alpha: FormField) -> FormField:
    """``d iota_X alpha + iota_X d alpha`` (discretely differs from the coordinate formula at O(h^2))."""
    out = interior(X, exterior_d(alpha))
    if alpha.degree > 0:
        out = out + exterior_d(interior(X, alpha))
    return out


def lie_derivative_J(X: TensorField, J) -> TensorField:
    jj = np.asarray(J.components if hasattr(J, "components") else J)
    return TensorField(X.grid, (1, 1), lie_J_array(np.asarray(X.components), jj, X.grid))
