"""Metric-derived geometry on the periodic grid.

Christoffel symbols, Riemann and Ricci tensors, covariant derivatives of
covariant tensors, the Ricci-derived endomorphism ``B`` and the first-order
time-variation formulas for ``g``, ``Gamma`` and ``Rm``.

Index layout follows :mod:`ddflow.fields`: ``Gamma[..., k, i, j]`` is
``Gamma^k_{ij}``, ``riemann[..., i, j, k, l]`` is ``R_{ijkl}`` with
``R(d_i, d_j) d_k = R_{ijk}^p d_p`` and ``R_{ijkl} = R_{ijk}^p g_{pl}``;
``ricci[..., j, k] = R_{ijk}^i``.
"""

from __future__ import annotations

import itertools
import string
from functools import cached_property, lru_cache

import numpy as np

from . import _batched
from .fields import GridSpec, TensorField, form_indices, gradient, permutation_sign


class DegenerateMetric(ValueError):
    """The metric is not positive definite somewhere on the grid."""


@lru_cache(maxsize=None)
def _minor_tables(dim, p):
    rows = np.array(form_indices(dim, p), dtype=np.intp).reshape(-1, p)
    return rows


def compound(a, p):
    """p-th compound matrix: all ``p x p`` minors of the trailing blocks.

    Rows and columns are indexed by :func:`form_indices` ``(n, p)``.
    """
    n = a.shape[-1]
    base = a.shape[:-2]
    if p == 0:
        return np.ones(base + (1, 1))
    if p == 1:
        return np.array(a, dtype=float)
    idx = _minor_tables(n, p)
    c = idx.shape[0]
    rows = idx[:, None, :]
    cols = idx[None, :, :]
    out = np.zeros(base + (c, c))
    for perm in itertools.permutations(range(p)):
        sign = permutation_sign(perm)
        term = np.ones(base + (c, c))
        for s in range(p):
            term = term * a[..., rows[:, :, s], cols[:, :, perm[s]]]
        out += sign * term
    return out


class Metric:
    """Riemannian metric on a grid with lazily cached derived quantities.

    Parameters
    ----------
    grid : GridSpec
    g : ndarray
        Components ``g_ij`` of shape ``grid.shape + (dim, dim)``.
    check : bool
        Verify positive definiteness (leading principal minors).
    """

    def __init__(self, grid: GridSpec, g, check=True):
        self.grid = grid
        self.g = np.asarray(g, dtype=float)
        self._compound = {}
        if self.g.shape != grid.shape + (grid.dim, grid.dim):
            raise DegenerateMetric(f"metric shape {self.g.shape} does not fit grid")
        if check and self.diagonal:
            if not np.all(np.diagonal(self.g, axis1=-2, axis2=-1) > 0):
                raise DegenerateMetric("metric is not positive definite")
        elif check:
            for k in range(1, grid.dim + 1):
                minor = self.det if k == grid.dim else _batched.det(self.g[..., :k, :k])
                if not np.all(minor > 0):
                    raise DegenerateMetric("metric is not positive definite")

    @classmethod
    def from_field(cls, g: TensorField):
        return cls(g.grid, g.components)

    @classmethod
    def flat(cls, grid):
        return cls(grid, np.broadcast_to(np.eye(grid.dim), grid.shape + (grid.dim, grid.dim)).copy())

    @property
    def dim(self):
        return self.grid.dim

    @cached_property
    def diagonal(self):
        """True when every off-diagonal entry is exactly zero (fast path)."""
        off = self.g * (1.0 - np.eye(self.dim))
        return not np.any(off)

    @cached_property
    def _inv_det(self):
        if self.diagonal:
            d = np.diagonal(self.g, axis1=-2, axis2=-1)
            inv = np.zeros_like(self.g)
            idx = np.arange(self.dim)
            inv[..., idx, idx] = 1.0 / d
            return inv, np.prod(d, axis=-1)
        return _batched.inv_det(self.g)

    @property
    def inv(self):
        return self._inv_det[0]

    @property
    def det(self):
        return self._inv_det[1]

    @cached_property
    def sqrt_det(self):
        return np.sqrt(self.det)

    def compound_inv(self, p):
        """Compound matrix of ``g^{-1}``; diagonal metrics return only the diagonal."""
        if p not in self._compound:
            self._compound[p] = self._compound_inv(p)
        return self._compound[p]

    def _compound_inv(self, p):
        n = self.dim
        if self.diagonal:
            d = 1.0 / np.diagonal(self.g, axis1=-2, axis2=-1)
            idx = form_indices(n, p)
            return np.stack([np.prod(d[..., list(I)], axis=-1) for I in idx], axis=-1)
        if p <= n - p or p <= 1:
            return compound(self.inv, p)
        # Jacobi: minors of the inverse are complementary minors of g over det g.
        q = n - p
        small = compound(self.g, q)
        idx = form_indices(n, p)
        comp_pos = {I: k for k, I in enumerate(form_indices(n, q))}
        comp = [comp_pos[tuple(sorted(set(range(n)) - set(I)))] for I in idx]
        parity = np.array([(-1) ** (sum(I) % 2) for I in idx], dtype=float)
        out = small[..., comp, :][..., :, comp]
        out = np.swapaxes(out, -1, -2) * np.outer(parity, parity)
        return out / self.det[..., None, None]

    def raise_form(self, comps, p):
        """Components ``alpha^I`` of a p-form given its covariant components."""
        c = self.compound_inv(p)
        if self.diagonal:
            return comps * c
        return np.einsum("...ij,...j->...i", c, comps)

    @cached_property
    def dg(self):
        """``dg[..., a, i, j] = d_a g_ij``."""
        return np.moveaxis(gradient(self.g, self.grid), -1, -3)

    @cached_property
    def is_constant(self):
        return not np.any(self.dg)

    @cached_property
    def christoffel(self):
        if self.is_constant:
            return np.zeros(self.grid.shape + (self.dim,) * 3)
        dg = self.dg
        # lower[l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
        lower = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
        return np.einsum("...kl,...lij->...kij", self.inv, lower)


def christoffel(g: TensorField, g_inv: TensorField | None = None) -> TensorField:
    """Levi-Civita connection ``Gamma^k_ij = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij)``."""
    m = Metric.from_field(g)
    if g_inv is not None:
        m._inv_det = (np.asarray(g_inv.components), m.det)
    return TensorField(g.grid, (1, 2), m.christoffel)


def _as_metric(g):
    return g if isinstance(g, Metric) else Metric.from_field(g)


def riemann_up(metric: Metric):
    """``R_{ijk}^p`` with layout ``[..., i, j, k, p]``."""
    gam = metric.christoffel
    shape = metric.grid.shape + (metric.dim,) * 4
    if metric.is_constant:
        return np.zeros(shape)
    dgam = np.moveaxis(gradient(gam, metric.grid), -1, -4)  # [a, p, j, k]
    out = np.einsum("...ipjk->...ijkp", dgam)
    out = out - np.swapaxes(out, -4, -3)
    gg = np.einsum("...pim,...mjk->...ijkp", gam, gam)
    return out + gg - np.swapaxes(gg, -4, -3)


def riemann_array(metric: Metric):
    return np.einsum("...ijkp,...pl->...ijkl", riemann_up(metric), metric.g)


def ricci_array(metric: Metric):
    ric = np.einsum("...ijki->...jk", riemann_up(metric))
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def riemann(g) -> TensorField:
    m = _as_metric(g)
    return TensorField(m.grid, (0, 4), riemann_array(m))


def ricci(g) -> TensorField:
    m = _as_metric(g)
    return TensorField(m.grid, (0, 2), ricci_array(m))


def b_array(metric: Metric, J, ric):
    """``B = g^{-1}(J^T Ric + Ric J)``: ``g(Bx, y) = Ric(Jx, y) + Ric(x, Jy)``."""
    s = _batched.mm(np.swapaxes(J, -1, -2), ric) + _batched.mm(ric, J)
    return _batched.mm(metric.inv, s)


def b_tensor(pair, Ric: TensorField | None = None) -> TensorField:
    """Ricci correction endomorphism of the d*d-Ricci flow."""
    metric = pair.metric
    ric = ricci_array(metric) if Ric is None else np.asarray(Ric.components)
    return TensorField(metric.grid, (1, 1), b_array(metric, pair.J_array, ric))


def covariant_derivative(metric: Metric, t):
    """Levi-Civita derivative of a covariant tensor; new index first after the grid axes.

    ``t`` has shape ``grid + (dim,) * r``; the result ``grid + (dim,) * (r + 1)``
    holds ``(nabla_a t)_{i_1 ... i_r}`` at ``[..., a, i_1, ..., i_r]``.
    """
    t = np.asarray(t)
    ndim_grid = len(metric.grid.shape)
    r = t.ndim - ndim_grid
    out = np.moveaxis(gradient(t, metric.grid), -1, ndim_grid)
    if metric.is_constant:
        return out
    gam = metric.christoffel
    letters = string.ascii_lowercase[2: 2 + r]  # tensor slots
    for s in range(r):
        src = letters[:s] + "m" + letters[s + 1:]
        out = out - np.einsum(f"...ma{letters[s]},...{src}->...a{letters}", gam, t)
    return out


def tensor_norm_sq(metric: Metric, t):
    """Pointwise ``|t|_g^2`` for a covariant tensor (all indices contracted with g^{-1})."""
    t = np.asarray(t)
    r = t.ndim - len(metric.grid.shape)
    up = t
    letters = string.ascii_lowercase[:r]
    for s in range(r):
        src = letters[:s] + "z" + letters[s + 1:]
        up = np.einsum(f"...{letters[s]}z,...{src}->...{letters}", metric.inv, up)
    return np.sum((up * t).reshape(t.shape[: t.ndim - r] + (-1,)), axis=-1)


def predicted_metric_variation(theta, J, g=None) -> TensorField:
    """``h_ij = 1/2 (theta_ik J^k_j + theta_jk J^k_i)``: metric velocity of a compatible flow."""
    th = theta.full()
    jj = np.asarray(J.components)
    return TensorField(theta.grid, (0, 2), _batched.sym(_batched.mm(th, jj)))


def _check_symmetric(h):
    if not np.allclose(h, np.swapaxes(h, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
        raise ValueError("h must be symmetric")


def connection_variation_array(metric: Metric, h):
    _check_symmetric(h)
    nh = covariant_derivative(metric, h)  # [a, i, j]
    # 1/2 g^kl (nabla_i h_lj + nabla_j h_li - nabla_l h_ij)
    lower = 0.5 * (np.swapaxes(nh, -3, -2) + np.moveaxis(nh, -3, -1) - nh)
    return np.einsum("...kl,...lij->...kij", metric.inv, lower)


def predicted_connection_variation(g, h: TensorField) -> TensorField:
    m = _as_metric(g)
    return TensorField(m.grid, (1, 2), connection_variation_array(m, np.asarray(h.components)))


def curvature_variation_array(metric: Metric, h):
    """Exact first variation of ``R_{ijkl}`` under ``g' = h``.

    ``dR_{ijk}^p = nabla_i dGamma^p_jk - nabla_j dGamma^p_ik`` and
    ``dR_{ijkl} = dR_{ijk}^p g_pl + R_{ijk}^p h_pl``.
    """
    dgam = connection_variation_array(metric, h)  # [p, j, k]
    grid_axes = len(metric.grid.shape)
    der = np.moveaxis(gradient(dgam, metric.grid), -1, grid_axes)  # [i, p, j, k]
    if not metric.is_constant:
        gam = metric.christoffel
        der = der + np.einsum("...pim,...mjk->...ipjk", gam, dgam)
        der = der - np.einsum("...mij,...pmk->...ipjk", gam, dgam)
        der = der - np.einsum("...mik,...pjm->...ipjk", gam, dgam)
    dr_up = np.einsum("...ipjk->...ijkp", der)
    dr_up = dr_up - np.swapaxes(dr_up, -4, -3)
    out = np.einsum("...ijkp,...pl->...ijkl", dr_up, metric.g)
    return out + np.einsum("...ijkp,...pl->...ijkl", riemann_up(metric), h)


def predicted_curvature_variation(g, h: TensorField) -> TensorField:
    m = _as_metric(g)
    return TensorField(m.grid, (0, 4), curvature_variation_array(m, np.asarray(h.components)))


def curvature_monitors(metric: Metric, W):
    """``(max|Rm|, max|nabla omega|, max|nabla^2 omega|)`` in the metric norm."""
    rm = riemann_array(metric)
    nw = covariant_derivative(metric, W)
    nnw = covariant_derivative(metric, nw)
    vals = [tensor_norm_sq(metric, x) for x in (rm, nw, nnw)]
    return tuple(float(np.sqrt(np.max(v))) for v in vals)
