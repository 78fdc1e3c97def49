"""Closed-form and spectral reference solutions.

The warped solutions reduce the flow to a scalar heat equation, solved here
exactly in time by a discrete Fourier transform so the oracle shares nothing
with the time stepper.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .curvature import Metric
from .exterior import d_star_d_array
from .fields import FormField, GridSpec, ScalarField, form_index_lookup
from .hermitian import HermitianPair

WARPED_KINDS = ("t4_b", "product_f")


class NotFound(LookupError):
    """No grid-resolved mode has the requested eigenvalue."""


def _wavenumbers(grid: GridSpec):
    return [2.0 * math.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(grid.sizes, grid.lengths)]


def heat_reference(u0: ScalarField, t: float) -> ScalarField:
    """Exact solution of ``du/dt = Laplacian u`` at time ``t`` for periodic ``u0``.

    Each Fourier mode ``m`` is damped by ``exp(-|2 pi m / L|^2 t)``.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    grid = u0.grid
    k = np.meshgrid(*_wavenumbers(grid), indexing="ij")
    k2 = sum(kk ** 2 for kk in k)
    uh = np.fft.fftn(np.asarray(u0.values))
    return ScalarField(grid, np.real(np.fft.ifftn(uh * np.exp(-k2 * t))))


def _check_base_only(data: ScalarField):
    """Warped data may vary only along the first two axes."""
    v = np.asarray(data.values)
    base = v[(slice(None), slice(None)) + (slice(0, 1),) * (v.ndim - 2)]
    if not np.array_equal(v, np.broadcast_to(base, v.shape)):
        raise ValueError("warped data must depend on the first two coordinates only")


def warped_form(grid: GridSpec, coeff) -> FormField:
    """``dx ^ dy + coeff * (dz1 ^ dz2 + dz3 ^ dz4 + ...)``."""
    look = form_index_lookup(grid.dim, 2)
    comps = np.zeros(grid.shape + (len(look),))
    comps[..., look[(0, 1)]] = 1.0
    for a in range(2, grid.dim, 2):
        comps[..., look[(a, a + 1)]] = coeff
    return FormField(grid, 2, comps)


def fibre_half_dim(grid: GridSpec):
    if grid.dim % 2 or grid.dim < 4:
        raise ValueError(f"warped products need an even dimension >= 4, got {grid.dim}")
    return (grid.dim - 2) // 2


def warped_coefficient(kind, data: ScalarField, t):
    """The warping function at time ``t``.

    ``t4_b`` and ``product_f`` with fibre half-dimension ``n = 1`` evolve
    ``log f`` by the heat equation; for ``n >= 2`` it is ``f^(n-1)``.
    """
    if kind not in WARPED_KINDS:
        raise ValueError(f"unknown warped kind {kind!r}; expected one of {WARPED_KINDS}")
    v = np.asarray(data.values)
    if np.any(v <= 0):
        raise ValueError("warping data must be positive")
    _check_base_only(data)
    n = fibre_half_dim(data.grid)
    if kind == "t4_b" and n != 1:
        raise ValueError("t4_b lives on a four-dimensional torus")
    if n == 1:
        return np.exp(heat_reference(ScalarField(data.grid, np.log(v)), t).values)
    u = heat_reference(ScalarField(data.grid, v ** (n - 1)), t).values
    return u ** (1.0 / (n - 1))


def warped_solution(kind, data: ScalarField, t) -> FormField:
    """Exact warped solution ``dx ^ dy + f(t) omega_2`` of the compatible flow."""
    return warped_form(data.grid, warped_coefficient(kind, data, t))


def limit_coefficient(data: ScalarField):
    """Long-time limit ``a`` of the warping function (the mean of ``f^(n-1)``, suitably rooted)."""
    v = np.asarray(data.values)
    n = fibre_half_dim(data.grid)
    if n == 1:
        return float(math.exp(np.mean(np.log(v))))
    return float(np.mean(v ** (n - 1)) ** (1.0 / (n - 1)))


@dataclass(frozen=True)
class Eigenform:
    """``omega = omega_base + eps * alpha`` with ``d*d alpha = lam alpha`` on the flat torus.

    ``residual`` is ``max |d*d alpha - lam alpha|`` for the discrete operator and
    ``discrete_lam`` the eigenvalue of the discrete operator on this mode.
    """

    omega: FormField
    alpha: FormField
    lam: float
    eps: float
    wave: tuple
    component: tuple
    residual: float
    discrete_lam: float


def _modes(grid, axes, lam, tol):
    ranges = [range(-(grid.sizes[a] // 2 - 1), grid.sizes[a] // 2) for a in axes]
    found = []
    for m in itertools.product(*ranges):
        k2 = sum((2.0 * math.pi * mi / grid.lengths[a]) ** 2 for mi, a in zip(m, axes))
        if abs(k2 - lam) <= tol * max(1.0, lam):
            found.append(m)
    # prefer the lowest and then the most axis-aligned mode, with nonnegative leading entry
    found.sort(key=lambda m: (max(abs(x) for x in m), sum(x != 0 for x in m), [-x for x in m]))
    return found


def eigenform_project(pair: HermitianPair, lam: float, eps: float = 0.01, tol: float = 1e-9) -> Eigenform:
    """Perturb ``pair.omega`` by a flat eigen-two-form of ``d*d`` with eigenvalue ``lam``.

    The mode is ``cos(k . x) dx_a ^ dx_b`` with ``(a, b)`` the last coordinate
    pair and ``k`` supported on the other axes, so that it is coclosed and
    ``d*d`` acts as ``|k|^2``.

    Raises
    ------
    NotFound
        If no grid-resolved ``k`` has ``|k|^2 = lam``.
    """
    grid = pair.grid
    if lam < 0:
        raise NotFound(f"d*d has no negative eigenvalues, got {lam}")
    a, b = grid.dim - 2, grid.dim - 1
    axes = [i for i in range(grid.dim) if i not in (a, b)]
    look = form_index_lookup(grid.dim, 2)
    alpha_c = np.zeros(grid.shape + (len(look),))
    if lam == 0:
        wave = (0,) * len(axes)
    else:
        modes = [m for m in _modes(grid, axes, lam, tol) if any(m)]
        if not modes:
            raise NotFound(f"no resolved mode with |k|^2 = {lam} on {grid.sizes}")
        wave = modes[0]
    x = grid.coords()
    phase = sum(2.0 * math.pi * m / grid.lengths[ax] * x[ax] for m, ax in zip(wave, axes))
    alpha_c[..., look[(a, b)]] = np.cos(phase) if lam > 0 else 1.0
    alpha = FormField(grid, 2, alpha_c)
    flat = Metric.flat(grid)
    dd = d_star_d_array(alpha_c, flat)
    residual = float(np.max(np.abs(dd - lam * alpha_c)))
    k = look[(a, b)]
    denom = float(np.sum(alpha_c[..., k] ** 2))
    discrete = float(np.sum(dd[..., k] * alpha_c[..., k]) / denom) if denom else 0.0
    omega = pair.omega + alpha.scaled(eps)
    return Eigenform(omega, alpha, float(lam), float(eps), tuple(wave), (a, b), residual, discrete)
