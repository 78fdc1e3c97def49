"""Named initial data for the flows.

Every preset returns a :class:`HermitianPair` on the given grid.  Random
presets draw only low Fourier modes so the data stay resolved on coarse grids.
"""

from __future__ import annotations

import math

import numpy as np

from . import exact
from .exterior import d_array
from .fields import FormField, GridSpec, ScalarField, components_from_full
from .hermitian import (HermitianPair, anti_invariant_array, compatible_J_array, constant_tensor, standard_J,
                        standard_omega)

PRESETS = ("standard", "t4_warped", "product_f", "twisted", "rotated", "symplectic", "tamed", "eigenform")


def _standard_J_field(grid):
    return constant_tensor(grid, standard_J(grid.dim), (1, 1))


def standard(grid: GridSpec, **_):
    """Constant ``(omega0, J0)``."""
    w = components_from_full(np.broadcast_to(standard_omega(grid.dim), grid.shape + (grid.dim,) * 2), grid.dim, 2)
    return HermitianPair(FormField(grid, 2, w), _standard_J_field(grid))


def t4_warped(grid: GridSpec, amplitude=0.1, **_):
    """``dx ^ dy + exp(amplitude cos x) dz ^ dw`` with ``J0``."""
    if grid.dim != 4:
        raise ValueError("t4_warped needs a four-dimensional grid")
    x = grid.coords()[0]
    return HermitianPair(exact.warped_form(grid, np.exp(amplitude * np.cos(x))), _standard_J_field(grid))


def product_f(grid: GridSpec, amplitude=0.1, **_):
    """``dx ^ dy + (1 + amplitude cos x) omega_2`` on ``T^2 x T^{2n}`` with ``J0``."""
    exact.fibre_half_dim(grid)
    x = grid.coords()[0]
    return HermitianPair(exact.warped_form(grid, 1.0 + amplitude * np.cos(x)), _standard_J_field(grid))


def warping_data(grid: GridSpec, kind, amplitude=0.1):
    """The warping function of :func:`t4_warped` or :func:`product_f` as a scalar field."""
    x = grid.coords()[0]
    if kind == "t4_b":
        return ScalarField(grid, np.exp(amplitude * np.cos(x)))
    return ScalarField(grid, 1.0 + amplitude * np.cos(x))


def _smooth_fields(grid, rng, count):
    """``count`` random smooth scalar fields, each a single low mode on one or two axes.

    Only axes with at least 8 points are used when there are two of them.
    """
    x = grid.coords()
    axes = [a for a in range(grid.dim) if grid.sizes[a] >= 8]
    if len(axes) < 2:
        axes = list(range(grid.dim))
    out = []
    for _ in range(count):
        a, b = rng.choice(axes, size=2, replace=False)
        ka = 2.0 * math.pi / grid.lengths[a]
        kb = 2.0 * math.pi / grid.lengths[b]
        phase = rng.uniform(0, 2 * math.pi)
        out.append(np.cos(ka * x[a] + rng.integers(0, 2) * kb * x[b] + phase))
    return out


def frame_field(grid: GridSpec, amplitude=0.2, seed=0):
    """A smooth invertible matrix field ``A = Id + amplitude * sum_k M_k s_k(x)``."""
    rng = np.random.default_rng(seed)
    n = grid.dim
    A = np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()
    for s in _smooth_fields(grid, rng, 3):
        M = rng.standard_normal((n, n))
        A += (amplitude / (3.0 * np.linalg.norm(M, 2))) * s[..., None, None] * M
    return A


def twisted(grid: GridSpec, amplitude=0.2, seed=0, **_):
    """Compatible pair ``(A^{-T} omega0 A^{-1}, A J0 A^{-1})`` for a smooth frame ``A``.

    Neither ``omega`` nor ``J`` is closed or constant, and the metric is ``A^{-T} A^{-1}``.
    """
    n = grid.dim
    A = frame_field(grid, amplitude, seed)
    Ainv = np.linalg.inv(A)
    J = A @ standard_J(n) @ Ainv
    W = np.swapaxes(Ainv, -1, -2) @ standard_omega(n) @ Ainv
    W = 0.5 * (W - np.swapaxes(W, -1, -2))
    return HermitianPair(FormField.from_full(grid, 2, W), J, check_J=False)


def rotated(grid: GridSpec, amplitude=2.5, **_):
    """``(R omega0 R^T, R J0 R^T)`` with ``R`` the rotation by ``amplitude cos x`` in the ``(x0, x2)`` plane.

    The pair is compatible, but for large ``amplitude`` the mean of ``omega``
    no longer tames ``J``, so the frozen-``J`` flow drives ``|Pf|`` down.
    """
    if grid.dim < 4:
        raise ValueError("rotated needs dimension at least 4")
    phi = amplitude * np.cos(grid.coords()[0])
    R = np.broadcast_to(np.eye(grid.dim), grid.shape + (grid.dim,) * 2).copy()
    R[..., 0, 0] = R[..., 2, 2] = np.cos(phi)
    R[..., 0, 2] = -np.sin(phi)
    R[..., 2, 0] = np.sin(phi)
    Rt = np.swapaxes(R, -1, -2)
    W = R @ standard_omega(grid.dim) @ Rt
    return HermitianPair(FormField.from_full(grid, 2, 0.5 * (W - np.swapaxes(W, -1, -2))),
                         R @ standard_J(grid.dim) @ Rt, check_J=False)


def symplectic(grid: GridSpec, amplitude=0.1, seed=0, **_):
    """``omega0 + d beta`` for a smooth one-form ``beta`` with its compatible ``J``.

    ``d beta`` is taken with the grid's own difference operator so that the
    discrete ``d omega`` vanishes to round-off.
    """
    rng = np.random.default_rng(seed)
    n = grid.dim
    beta = np.zeros(grid.shape + (n,))
    for a in range(n):
        beta[..., a] = amplitude * _smooth_fields(grid, rng, 1)[0]
    w = np.asarray(standard(grid).omega.components) + d_array(beta, grid, 1)
    W = FormField(grid, 2, w).full()
    return HermitianPair(FormField(grid, 2, w), compatible_J_array(W), check_J=False)


def tamed(grid: GridSpec, amplitude=0.2, anti=0.05, seed=0, **_):
    """:func:`twisted` data plus a smooth anti-invariant part of size ``anti``."""
    base = twisted(grid, amplitude, seed)
    rng = np.random.default_rng(seed + 1)
    n = grid.dim
    B = np.zeros(grid.shape + (n, n))
    for a in range(n):
        for b in range(a + 1, n):
            s = _smooth_fields(grid, rng, 1)[0]
            B[..., a, b] = s
            B[..., b, a] = -s
    Bm = anti_invariant_array(B, base.J_array)
    W = base.W + anti * Bm
    return HermitianPair(FormField.from_full(grid, 2, W), base.J_array, check_J=False)


def eigenform(grid: GridSpec, lam=1.0, eps=0.01, **_):
    """``omega0 + eps * cos(k . x) dz ^ dw`` with ``|k|^2 = lam`` and ``J0``."""
    ef = exact.eigenform_project(standard(grid), lam, eps)
    return HermitianPair(ef.omega, _standard_J_field(grid))


def build(name, grid: GridSpec, **params):
    """Preset by name."""
    table = {"standard": standard, "t4_warped": t4_warped, "product_f": product_f, "twisted": twisted,
             "rotated": rotated, "symplectic": symplectic, "tamed": tamed, "eigenform": eigenform}
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return table[name](grid, **params)
