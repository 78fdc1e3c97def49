"""Tamed and compatible pairs (omega, J) and their induced metrics.

A two-form is held as the antisymmetric matrix ``W[..., i, j] = omega(e_i, e_j)``
and an endomorphism as ``J[..., j, i] = J^j_i``.  In this language

* ``omega(Jx, Jy)`` has matrix ``J^T W J``,
* the tamed metric ``g(x, y) = 1/2 (omega(x, Jy) + omega(y, Jx))`` is ``sym(W J)``,
* compatibility means ``J^T W J = W``, and then ``g = W J``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _batched
from .curvature import DegenerateMetric, Metric
from .errors import NondegeneracyLost, NotCompatible, NotTamed, RetractionDiverged
from .fields import FormField, GridSpec, ScalarField, TensorField

EPS_ND = 1e-8
TOL_C = 1e-8
TOL_J = 1e-10


def standard_J(dim):
    """``J0`` with ``J0 d_{x_{2k}} = d_{x_{2k+1}}``."""
    j = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        j[k + 1, k] = 1.0
        j[k, k + 1] = -1.0
    return j


def standard_omega(dim):
    """Components of ``dx0^dx1 + dx2^dx3 + ...``; compatible with :func:`standard_J`."""
    w = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        w[k, k + 1] = 1.0
        w[k + 1, k] = -1.0
    return w


@lru_cache(maxsize=None)
def _matchings(dim):
    """Signed perfect matchings of ``range(dim)``: the terms of the Pfaffian."""

    def rec(items):
        if not items:
            return [(1, ())]
        first, rest = items[0], items[1:]
        out = []
        for k, partner in enumerate(rest):
            remaining = rest[:k] + rest[k + 1:]
            for sign, pairs in rec(remaining):
                out.append(((-1) ** k * sign, ((first, partner),) + pairs))
        return out

    return tuple(rec(tuple(range(dim))))


def pfaffian_array(W):
    """Pfaffian of each trailing antisymmetric block by its matching expansion.

    Dimension 4 gives the three-term formula ``W01 W23 - W02 W13 + W03 W12``,
    dimension 6 the fifteen-term one.
    """
    W = np.asarray(W)
    total = np.zeros(W.shape[:-2])
    for sign, pairs in _matchings(W.shape[-1]):
        term = np.full(W.shape[:-2], float(sign))
        for a, b in pairs:
            term = term * W[..., a, b]
        total += term
    return total


def pullback_by(B, J):
    """Matrix of ``beta(Jx, Jy)``."""
    Jt = np.swapaxes(J, -1, -2) if J.ndim > 2 else J.T
    return _batched.mm(_batched.mm(Jt, B), J)


def invariant_array(B, J):
    return 0.5 * (B + pullback_by(B, J))


def anti_invariant_array(B, J):
    return 0.5 * (B - pullback_by(B, J))


def tamed_metric_array(W, J):
    return _batched.sym(_batched.mm(W, J))


@dataclass(frozen=True)
class AlmostComplexField:
    """A (1,1) field with ``J^2 = -Id`` to ``tol``."""

    J: TensorField
    tol: float = TOL_J

    def __post_init__(self):
        if self.J.valence != (1, 1):
            raise ValueError("an almost complex structure is a (1,1) tensor")
        d = self.defect
        if d > self.tol:
            raise ValueError(f"J^2 + Id has max entry {d:.3e} > {self.tol:.1e}")

    @property
    def defect(self):
        jj = np.asarray(self.J.components)
        return float(np.max(np.abs(jj @ jj + np.eye(jj.shape[-1]))))

    @property
    def grid(self):
        return self.J.grid

    @property
    def components(self):
        return self.J.components

    @classmethod
    def standard(cls, grid: GridSpec):
        return cls(constant_tensor(grid, standard_J(grid.dim), (1, 1)))


def constant_tensor(grid, matrix, valence):
    arr = np.broadcast_to(np.asarray(matrix, dtype=float), grid.shape + np.shape(matrix))
    return TensorField(grid, valence, np.array(arr))


def _J_array(J):
    if isinstance(J, AlmostComplexField):
        return np.asarray(J.J.components)
    if isinstance(J, TensorField):
        return np.asarray(J.components)
    return np.asarray(J)


def _check_degree2(omega):
    if omega.degree != 2:
        raise ValueError(f"expected a two-form, got degree {omega.degree}")


def invariant_part(omega: FormField, J) -> FormField:
    """``beta_J(x, y) = 1/2 (beta(x, y) + beta(Jx, Jy))``."""
    _check_degree2(omega)
    return FormField.from_full(omega.grid, 2, invariant_array(omega.full(), _J_array(J)))


def anti_invariant_part(omega: FormField, J) -> FormField:
    _check_degree2(omega)
    return FormField.from_full(omega.grid, 2, anti_invariant_array(omega.full(), _J_array(J)))


def metric_from_pair(omega: FormField, J) -> TensorField:
    """Symmetrized tamed metric; raises :class:`NotTamed` if not positive definite."""
    _check_degree2(omega)
    G = tamed_metric_array(omega.full(), _J_array(J))
    try:
        Metric(omega.grid, G)
    except DegenerateMetric as exc:
        raise NotTamed("omega(x, Jx) is not positive definite") from exc
    return TensorField(omega.grid, (0, 2), G)


def classify(omega: FormField, J, tol_c=TOL_C):
    """``'compatible'``, ``'tamed'`` or ``'invalid'`` without raising."""
    try:
        metric_from_pair(omega, J)
    except NotTamed:
        return "invalid"
    W = omega.full()
    if np.min(np.abs(pfaffian_array(W))) <= EPS_ND:
        return "invalid"
    defect = np.max(np.abs(anti_invariant_array(W, _J_array(J))))
    return "compatible" if defect <= tol_c else "tamed"


class HermitianPair:
    """A tamed pair with its metric data computed once at construction.

    Parameters
    ----------
    omega : FormField
        Nondegenerate two-form.
    J : AlmostComplexField or TensorField
        Almost complex structure taming ``omega``.
    eps_nd, tol_c : float
        Nondegeneracy and compatibility thresholds.

    Raises
    ------
    NotTamed
        The symmetrized form ``omega(., J.)`` is not positive definite.
    NondegeneracyLost
        ``min |Pf(omega)| <= eps_nd``.
    """

    def __init__(self, omega: FormField, J, eps_nd=EPS_ND, tol_c=TOL_C, check_J=True):
        _check_degree2(omega)
        if check_J and not isinstance(J, AlmostComplexField):
            J = AlmostComplexField(J if isinstance(J, TensorField) else TensorField(omega.grid, (1, 1), J))
        self.omega = omega
        self.grid = omega.grid
        self.J_array = _J_array(J)
        u = _batched.uniform(self.J_array)
        # a grid-constant J lets every pointwise product with it run as one GEMM
        self.J_mat = self.J_array if u is None else u
        self.W = omega.full()
        self.pf = pfaffian_array(self.W)
        min_pf = float(np.min(np.abs(self.pf)))
        if min_pf <= eps_nd:
            raise NondegeneracyLost(f"min |Pf(omega)| = {min_pf:.3e}")
        try:
            self.metric = Metric(self.grid, tamed_metric_array(self.W, self.J_mat))
        except DegenerateMetric as exc:
            raise NotTamed("omega(x, Jx) is not positive definite") from exc
        self.W_anti = anti_invariant_array(self.W, self.J_mat)
        self.compat_defect = float(np.max(np.abs(self.W_anti)))
        self.status = "compatible" if self.compat_defect <= tol_c else "tamed"
        self.tol_c = tol_c

    @property
    def J(self):
        return TensorField(self.grid, (1, 1), self.J_array)

    @property
    def g(self):
        return TensorField(self.grid, (0, 2), self.metric.g)

    @property
    def g_inv(self):
        return TensorField(self.grid, (2, 0), self.metric.inv)

    @property
    def omega_inv_array(self):
        if not hasattr(self, "_winv"):
            self._winv = _batched.inv(self.W)
        return self._winv

    @property
    def omega_inv(self):
        return TensorField(self.grid, (2, 0), self.omega_inv_array)

    @property
    def pfaffian(self):
        return ScalarField(self.grid, self.pf)

    @property
    def min_pf(self):
        return float(np.min(np.abs(self.pf)))

    @property
    def is_compatible(self):
        return self.status == "compatible"

    def require_compatible(self):
        if not self.is_compatible:
            raise NotCompatible(f"max |omega_J-| = {self.compat_defect:.3e} > {self.tol_c:.1e}")

    def invariant(self):
        """The compatible pair ``(omega_J, J)`` built from this tamed pair."""
        Wj = self.W - self.W_anti
        return HermitianPair(FormField.from_full(self.grid, 2, Wj), self.J_array, check_J=False)


@dataclass(frozen=True)
class VariationPair:
    theta: FormField
    K: TensorField


@dataclass(frozen=True)
class VariationDefect:
    anticommute: float
    kequ: float


def variation_defect_arrays(W, J, Theta, K):
    """Max-norm defects of ``JK + KJ = 0`` and
    ``omega(Kx, Jy) + omega(Jx, Ky) = theta(x, y) - theta(Jx, Jy)``."""
    anti = _batched.mm(J, K) + _batched.mm(K, J)
    Kt = np.swapaxes(K, -1, -2)
    Jt = np.swapaxes(J, -1, -2)
    lhs = _batched.mm(_batched.mm(Kt, W), J) + _batched.mm(_batched.mm(Jt, W), K)
    rhs = Theta - pullback_by(Theta, J)
    return VariationDefect(float(np.max(np.abs(anti))), float(np.max(np.abs(lhs - rhs))))


def check_variation(pair: HermitianPair, var: VariationPair) -> VariationDefect:
    return variation_defect_arrays(pair.W, pair.J_array, var.theta.full(), np.asarray(var.K.components))


def retract_array(J_raw, max_iter=50, tol=1e-14):
    """``J_raw S^{-1/2}`` with ``S = -J_raw^2``, by coupled Newton-Schulz iteration.

    The iteration works on ``S / c`` with ``c = tr(S) / n`` so that
    ``S / c`` is close to the identity near an almost complex structure.
    """
    J_raw = np.asarray(J_raw, dtype=float)
    n = J_raw.shape[-1]
    if J_raw.ndim > 2:
        u = _batched.uniform(J_raw)
        if u is not None:
            return np.array(np.broadcast_to(retract_array(u, max_iter, tol), J_raw.shape))
    eye = np.eye(n)
    S = -(J_raw @ J_raw)
    c = np.trace(S, axis1=-2, axis2=-1) / n
    if np.any(c <= 0):
        raise RetractionDiverged("-J_raw^2 has nonpositive trace")
    Y = S / c[..., None, None]
    Z = np.broadcast_to(eye, S.shape).copy()
    for _ in range(max_iter):
        R = Z @ Y
        err = np.max(np.abs(R - eye))
        if not np.isfinite(err):
            break
        if err <= tol:
            return J_raw @ (Z / np.sqrt(c)[..., None, None])
        T = 0.5 * (3.0 * eye - R)
        Y = Y @ T
        Z = T @ Z
    raise RetractionDiverged(f"Newton iteration did not converge in {max_iter} steps")


def retract_J(J_raw: TensorField) -> AlmostComplexField:
    return AlmostComplexField(TensorField(J_raw.grid, (1, 1), retract_array(J_raw.components)), tol=1e-12)


def compatible_J_array(W):
    """The compatible ``J = W^{-1} (W^T W)^{1/2}``, whose metric is ``(W^T W)^{1/2}``."""
    W = np.asarray(W)
    evals, evecs = np.linalg.eigh(np.swapaxes(W, -1, -2) @ W)
    root = (evecs * np.sqrt(evals)[..., None, :]) @ np.swapaxes(evecs, -1, -2)
    return np.linalg.solve(W, root)
