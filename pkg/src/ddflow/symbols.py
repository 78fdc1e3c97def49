"""Principal symbols of the flow operators at a single point.

Every symbol is the literal substitution ``d_p -> xi_p`` into the top-order
part of the right-hand side operator, so a parabolic right-hand side has a
positive symbol (the heat operator ``g^pq d_p d_q`` maps to ``|xi|^2``).
Second-order symbols are assembled by composing first-order pieces and
applying the composite to a basis of the domain; no symbol matrix is typed in
by hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior import interior_array, wedge_array
from .fields import components_from_full, full_from_components
from .hermitian import standard_J, standard_omega

ZERO_TOL = 1e-10


class InvalidPoint(ValueError):
    """Point data violates one of the stated matrix properties."""


@dataclass(frozen=True)
class PointData:
    """Frozen coefficients at one point.

    Attributes
    ----------
    dim : int
    g : ndarray
        Symmetric positive definite metric.
    omega : ndarray
        Antisymmetric matrix ``omega(e_i, e_j)``.
    J : ndarray
        ``J[j, i] = J^j_i`` with ``J^2 = -Id``.
    xi : ndarray
        Nonzero covector.
    """

    dim: int
    g: np.ndarray
    omega: np.ndarray
    J: np.ndarray
    xi: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        n = self.dim
        for name in ("g", "omega", "J"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != (n, n):
                raise InvalidPoint(f"{name} has shape {a.shape}, expected {(n, n)}")
            object.__setattr__(self, name, a)
        xi = np.asarray(self.xi, dtype=float)
        if xi.shape != (n,):
            raise InvalidPoint(f"xi has shape {xi.shape}, expected {(n,)}")
        object.__setattr__(self, "xi", xi)
        scale = max(1.0, float(np.max(np.abs(self.g))), float(np.max(np.abs(self.omega))))
        if np.max(np.abs(self.g - self.g.T)) > self.tol * scale:
            raise InvalidPoint("g is not symmetric")
        if np.min(np.linalg.eigvalsh(self.g)) <= 0:
            raise InvalidPoint("g is not positive definite")
        if np.max(np.abs(self.omega + self.omega.T)) > self.tol * scale:
            raise InvalidPoint("omega is not antisymmetric")
        if abs(np.linalg.det(self.omega)) <= self.tol:
            raise InvalidPoint("omega is degenerate")
        jscale = max(1.0, float(np.max(np.abs(self.J))) ** 2)
        if np.max(np.abs(self.J @ self.J + np.eye(n))) > self.tol * 100 * jscale:
            raise InvalidPoint("J^2 != -Id")
        if not np.any(xi):
            raise InvalidPoint("xi must be nonzero")

    @property
    def g_inv(self):
        return np.linalg.inv(self.g)

    @property
    def omega_inv(self):
        return np.linalg.inv(self.omega)

    @property
    def xi_sharp(self):
        return self.g_inv @ self.xi

    @property
    def xi_norm_sq(self):
        return float(self.xi @ self.g_inv @ self.xi)

    @property
    def compatibility_defect(self):
        W, J = self.omega, self.J
        return max(float(np.max(np.abs(J.T @ W @ J - W))), float(np.max(np.abs(W @ J - self.g))))

    @property
    def is_compatible(self):
        return self.compatibility_defect <= 1e-10 * max(1.0, float(np.max(np.abs(self.g))))

    def with_xi(self, xi):
        return PointData(self.dim, self.g, self.omega, self.J, xi, self.tol)

    def orthonormal(self):
        """The same data in a frame where ``g`` is the identity."""
        L = np.linalg.cholesky(self.g)
        A = np.linalg.inv(L).T  # columns of A are a g-orthonormal frame
        return PointData(self.dim, np.eye(self.dim), A.T @ self.omega @ A, np.linalg.solve(A, self.J @ A),
                         A.T @ self.xi, self.tol)

    @classmethod
    def standard(cls, dim, xi=None):
        xi = np.eye(dim)[0] if xi is None else xi
        return cls(dim, np.eye(dim), standard_omega(dim), standard_J(dim), xi)


def random_point(dim, rng, compatible=True, spread=0.5, tame_eps=0.1):
    """Compatible data ``A^{-T} (Id, omega0) A^{-1}``, ``J = A J0 A^{-1}`` for a random frame ``A``.

    ``compatible=False`` adds a small anti-invariant part to ``omega``.
    """
    if dim % 2 or dim < 2:
        raise ValueError(f"dimension must be even and positive, got {dim}")
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    A = q * np.exp(rng.uniform(-spread, spread, dim))
    Ainv = np.linalg.inv(A)
    J = A @ standard_J(dim) @ Ainv
    W = Ainv.T @ standard_omega(dim) @ Ainv
    if not compatible:
        B = rng.standard_normal((dim, dim))
        B = B - B.T
        W = W + tame_eps * 0.5 * (B - J.T @ B @ J) / max(1.0, float(np.max(np.abs(B))))
    g = 0.5 * (W @ J + (W @ J).T)
    xi = rng.standard_normal(dim)
    return PointData(dim, g, W, J, xi)


@dataclass
class SymbolReport:
    """Spectral summary of a symbol on a (possibly constrained) domain.

    Attributes
    ----------
    operator : str
    matrix : ndarray
        Symbol in the domain basis used.
    eigenvalues : ndarray
        Real parts, ascending.
    null_dim : int
        Eigenvalues with modulus at most the zero tolerance.
    verdict : bool
        Whether the claimed structure holds.
    details : dict
        Operator-specific checks (constraint eigenvalues, residuals).
    """

    operator: str
    matrix: np.ndarray
    eigenvalues: np.ndarray
    null_dim: int
    verdict: bool
    details: dict = field(default_factory=dict)

    @property
    def min_constrained(self):
        return self.details.get("min_constrained", float(self.eigenvalues[0]) if len(self.eigenvalues) else math.nan)


# --- linear-algebra helpers ----------------------------------------------------------


def _spectrum(M):
    ev = np.linalg.eigvals(M)
    return np.sort(ev.real), float(np.max(np.abs(ev.imag))) if len(ev) else 0.0


def _matrix_of(op, basis_in, basis_out=None):
    """Matrix of ``op`` with columns ``op(b)`` expressed in ``basis_out`` (least squares)."""
    if not basis_in:
        return np.zeros((0 if basis_out is None else len(basis_out), 0))
    cols = np.stack([np.ravel(op(b)) for b in basis_in], axis=1)
    if basis_out is None:
        return cols
    B = np.stack([np.ravel(b) for b in basis_out], axis=1)
    coef, *_ = np.linalg.lstsq(B, cols, rcond=None)
    return coef


def _null_space(M, tol=1e-12):
    u, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
    return vt[rank:].T


def _zero_tol(point):
    return ZERO_TOL * max(1.0, point.xi_norm_sq)


# --- first-order pieces -------------------------------------------------------------


def _sym_d(point, comps, p):
    """``d`` with ``d_p -> xi_p``: ``xi ^ alpha``."""
    return wedge_array(point.xi, comps, point.dim, 1, p)


def _sym_codiff(point, comps, p):
    """``d* = -g^{kl} d_k alpha_{l...}`` with ``d_k -> xi_k``: ``-iota_{xi#} alpha``."""
    return -interior_array(point.xi_sharp, comps, point.dim, p)


def _sym_laplace(point, arr):
    """``g^pq d_p d_q``."""
    return point.xi_norm_sq * arr


def _sym_deturck_x(point, B):
    """Top-order part of ``X^k = g^pq d_p omega_qj (omega^{-1})_jk`` applied to a variation ``B``."""
    return point.xi_sharp @ B @ point.omega_inv


def _sym_lie_omega(point, Y):
    """Top-order part of ``L_Y omega`` in ``Y``: ``xi_i (Y^l W_lj) + xi_j (W_il Y^l)``."""
    W, xi = point.omega, point.xi
    return np.outer(xi, Y @ W) + np.outer(W @ Y, xi)


def _sym_ricci(point, h):
    """Top-order part of ``Ric`` in a metric variation ``h``.

    Composed from ``delta Gamma^p_jk = 1/2 g^pl (d_j h_lk + d_k h_jl - d_l h_jk)`` and
    ``delta R_ijk^p = d_i delta Gamma^p_jk - d_j delta Gamma^p_ik``, contracted on ``i = p``.
    """
    gi, xi = point.g_inv, point.xi
    dG = 0.5 * np.einsum("pl,jlk->pjk", gi,
                         np.einsum("j,lk->jlk", xi, h) + np.einsum("k,jl->jlk", xi, h)
                         - np.einsum("l,jk->jlk", xi, h))
    dR = np.einsum("i,pjk->ijkp", xi, dG) - np.einsum("j,pik->ijkp", xi, dG)
    ric = np.einsum("ijki->jk", dR)
    return 0.5 * (ric + ric.T)


def _sym_b(point, h):
    """Top-order part of ``B = g^{-1}(J^T Ric + Ric J)`` in a metric variation ``h``."""
    R = _sym_ricci(point, h)
    return point.g_inv @ (point.J.T @ R + R @ point.J)


def _sym_k2_lead(point, P):
    """The displayed top-order part of ``K2`` on ``J``: ``1/2 g^pq d_p d_q (J - g^{-1} J^T g)``."""
    G = point.g
    return 0.5 * point.xi_norm_sq * (P - np.linalg.solve(G, P.T @ G))


# --- domain bases ---------------------------------------------------------------------


def form_basis(dim, p):
    c = math.comb(dim, p)
    return list(np.eye(c))


def anti_J_basis(point, g_skew=False):
    """Orthonormal (Frobenius) basis of ``{P : PJ + JP = 0}``, optionally also g-skew."""
    n, J, G = point.dim, point.J, point.g
    eye = np.eye(n * n)
    rows = [np.ravel(J @ E.reshape(n, n) + E.reshape(n, n) @ J) for E in eye]
    constraints = [np.stack(rows, axis=1)]
    if g_skew:
        rows = [np.ravel(G @ E.reshape(n, n) + (G @ E.reshape(n, n)).T) for E in eye]
        constraints.append(np.stack(rows, axis=1))
    N = _null_space(np.vstack(constraints))
    return [N[:, k].reshape(n, n) for k in range(N.shape[1])]


def symmetric_basis(dim):
    """Orthonormal basis of symmetric matrices."""
    out = []
    for a in range(dim):
        for b in range(a, dim):
            E = np.zeros((dim, dim))
            if a == b:
                E[a, a] = 1.0
            else:
                E[a, b] = E[b, a] = 1.0 / math.sqrt(2.0)
            out.append(E)
    return out


# --- operators ------------------------------------------------------------------------


def dstard_matrix(point):
    """Symbol of ``-d*d`` on two-forms in the component basis."""
    n = point.dim
    return _matrix_of(lambda b: -_sym_codiff(point, _sym_d(point, b, 2), 3), form_basis(n, 2))


def symbol_dstard(point: PointData) -> SymbolReport:
    """``iota_{xi#}(xi ^ .)`` on two-covectors.

    Verifies that the kernel is ``xi ^ Lambda^1`` (dimension ``dim - 1``), that the
    symbol is positive on ``ker iota_{xi#}`` and that its image lies in that kernel.
    """
    n = point.dim
    tol = _zero_tol(point)
    M = dstard_matrix(point)
    ev, imag = _spectrum(M)
    null_dim = int(np.sum(np.abs(ev) <= tol))
    # xi ^ Lambda^1 lies in the kernel
    wedge_xi = np.stack([_sym_d(point, e, 1) for e in np.eye(n)], axis=1)
    kernel_residual = float(np.max(np.abs(M @ wedge_xi)))
    # constraint operator sigma(d*) on two-forms and its kernel
    L = _matrix_of(lambda b: _sym_codiff(point, b, 2), form_basis(n, 2))
    K = _null_space(L)
    restricted = np.linalg.lstsq(K, M @ K, rcond=None)[0]
    rev, _ = _spectrum(restricted)
    image_residual = float(np.max(np.abs(L @ M)))
    min_c = float(rev[0]) if len(rev) else math.nan
    verdict = (null_dim == n - 1 and kernel_residual <= tol and image_residual <= tol
               and (len(rev) == 0 or min_c > tol) and imag <= tol)
    return SymbolReport("dstard", M, ev, null_dim, verdict, {
        "min_constrained": min_c, "constraint_dim": K.shape[1], "kernel_residual": kernel_residual,
        "image_residual": image_residual, "constrained_eigenvalues": rev, "imag": imag})


def symbol_k2(point: PointData, g_skew=False) -> SymbolReport:
    """The displayed top-order part of ``K2`` on anti-J endomorphisms.

    The claimed structure is ``sigma = |xi|^2 Id`` on the domain.  With
    ``g_skew=True`` the domain is the g-skew anti-J subspace, which is the tangent
    space of the J compatible with a fixed metric.
    """
    basis = anti_J_basis(point, g_skew=g_skew)
    tol = _zero_tol(point)
    M = _matrix_of(lambda P: _sym_k2_lead(point, P), basis, basis)
    ev, imag = _spectrum(M)
    target = point.xi_norm_sq
    dev = float(np.max(np.abs(ev - target))) if len(ev) else 0.0
    null_dim = int(np.sum(np.abs(ev) <= tol))
    # an empty domain (g-skew anti-J endomorphisms in dimension 2) holds the claim vacuously
    verdict = dev <= 1e-11 * max(1.0, target) and imag <= tol
    return SymbolReport("k2_gskew" if g_skew else "k2", M, ev, null_dim, verdict, {
        "min_constrained": float(ev[0]) if len(ev) else math.nan, "max_deviation": dev,
        "domain_dim": len(basis), "target": target, "imag": imag})


def diffeo_matrix(point):
    """Symbol of ``Y -> g^pq d_p (L_Y omega)_qj (omega^{-1})_jk`` on vectors."""
    return _matrix_of(lambda Y: _sym_deturck_x(point, _sym_lie_omega(point, Y)), list(np.eye(point.dim)))


def symbol_diffeo(point: PointData) -> SymbolReport:
    """Gauge-direction symbol, normalized by ``|xi|^2``.

    For compatible data it is ``Id - eta eta^T`` in a g-orthonormal frame, with
    ``eta = omega^T xi`` of unit length, so the spectrum is ``{0, 1, ..., 1}``.
    """
    on = point.orthonormal()
    xi = on.xi / math.sqrt(on.xi_norm_sq)
    unit = on.with_xi(xi)
    M = diffeo_matrix(unit)
    ev, imag = _spectrum(M)
    eta = unit.omega.T @ xi
    target = np.concatenate([[0.0], np.ones(point.dim - 1)])
    dev = float(np.max(np.abs(ev - target)))
    projector_residual = float(np.max(np.abs(M - (np.eye(point.dim) - np.outer(eta, eta)))))
    null_dim = int(np.sum(np.abs(ev) <= ZERO_TOL))
    verdict = dev <= ZERO_TOL and imag <= ZERO_TOL and float(ev[0]) >= -ZERO_TOL
    return SymbolReport("diffeo", M, ev, null_dim, verdict, {
        "min_constrained": float(ev[0]), "max_deviation": dev, "eta": eta,
        "eta_norm": float(np.linalg.norm(eta)), "projector_residual": projector_residual,
        "kernel_residual": float(np.max(np.abs(M @ eta)))})


def ricci_b_operator(point):
    """``h -> omega . sigma(B)(h)`` on symmetric two-tensors (``h = omega K``)."""
    return lambda h: point.omega @ _sym_b(point, h)


def ricci_b_zero_modes(point):
    """The two displayed zero modes: ``xi xi - (J xi)(J xi)`` and ``xi (J^T xi) + (J^T xi) xi``."""
    xi, J = point.xi, point.J
    h1 = np.outer(xi, xi) - np.outer(J @ xi, J @ xi)
    a = J.T @ xi
    h2 = np.outer(xi, a) + np.outer(a, xi)
    return h1, h2


def anti_invariant_symmetric_basis(point):
    """Orthonormal basis of symmetric ``h`` with ``h(J., J.) = -h``.

    These are exactly the metric variations ``sym(omega K)`` produced by
    anti-J variations ``K`` of ``J`` at a compatible point.
    """
    J = point.J
    cols = np.stack([np.ravel(0.5 * (h - J.T @ h @ J)) for h in symmetric_basis(point.dim)], axis=1)
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    r = int(np.sum(s > 1e-10))
    return [u[:, k].reshape(point.dim, point.dim) for k in range(r)]


def symbol_ricci_b(point: PointData) -> SymbolReport:
    """Symbol of ``B`` in the metric variation, as an operator on symmetric ``h``.

    The domain is the space of metric variations induced by variations of
    ``J`` (the anti-invariant symmetric tensors); the spectrum over all
    symmetric tensors is reported in ``details["full_eigenvalues"]``.
    Evaluated in a g-orthonormal frame so that the symmetrized matrix is the
    quadratic form of the symbol.
    """
    on = point.orthonormal()
    op = ricci_b_operator(on)
    basis = anti_invariant_symmetric_basis(on)
    M = _matrix_of(op, basis, basis)
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    full = symmetric_basis(point.dim)
    Mf = _matrix_of(op, full, full)
    tol = _zero_tol(on)
    h1, h2 = ricci_b_zero_modes(on)
    r1 = float(np.max(np.abs(op(h1))))
    r2 = float(np.max(np.abs(op(h2))))
    null_dim = int(np.sum(np.abs(ev) <= tol))
    verdict = r1 <= tol and r2 <= tol and float(ev[0]) >= -tol
    return SymbolReport("ricci_b", M, ev, null_dim, verdict, {
        "min_constrained": float(ev[0]), "zero_mode_residuals": (r1, r2),
        "asymmetry": float(np.max(np.abs(M - M.T))),
        "full_eigenvalues": np.linalg.eigvalsh(0.5 * (Mf + Mf.T))})


def _b_on_J(point, P):
    """Top order of ``B`` on a J variation through ``g = sym(omega J)``."""
    WP = point.omega @ P
    return _sym_b(point, 0.5 * (WP + WP.T))


def _theta_deturck(point, beta):
    """Top order of ``-d*d omega + L_X omega`` in a two-form variation ``beta`` (full matrix)."""
    n = point.dim
    b = components_from_full(beta, n, 2)
    dd = full_from_components(-_sym_codiff(point, _sym_d(point, b, 2), 3), n, 2)
    X = _sym_deturck_x(point, beta)
    W, xi = point.omega, point.xi
    return dd + np.outer(xi, X @ W) + np.outer(W @ X, xi)


def _k2_on_omega(point, beta):
    """Top order of the displayed ``K2`` in ``omega``: ``g^{-1} ((sigma(-d*d) beta)_{J-})^T``."""
    n = point.dim
    b = components_from_full(beta, n, 2)
    th = full_from_components(-_sym_codiff(point, _sym_d(point, b, 2), 3), n, 2)
    J = point.J
    psi = th - point.xi_norm_sq * beta
    phi = point.xi_norm_sq * (beta - J.T @ beta @ J)
    M = 0.5 * (psi - J.T @ psi @ J) + 0.5 * phi
    return np.linalg.solve(point.g, M.T)


def system_symbol(point: PointData, with_ricci=False, g_skew=False):
    """Block symbol of the gauge-fixed ``(theta, K)`` system on ``(beta, P)``, divided by ``|xi|^2``.

    Returns ``(matrix, blocks)`` with the four blocks in the two-form and anti-J
    bases.  ``with_ricci`` adds the top order of ``B`` to the ``K`` equation.
    """
    n = point.dim
    s = point.xi_norm_sq
    fb = [full_from_components(e, n, 2) for e in form_basis(n, 2)]
    jb = anti_J_basis(point, g_skew=g_skew)

    def coords_form(F):
        return components_from_full(F, n, 2)

    def k_total(P):
        out = _sym_k2_lead(point, P)
        if with_ricci:
            out = out + _b_on_J(point, P)
        return out

    TT = _matrix_of(lambda B: coords_form(_theta_deturck(point, B)), fb) / s
    TK = np.zeros((len(fb), len(jb)))
    KT = _matrix_of(lambda B: _k2_on_omega(point, B), fb, jb) / s
    KK = _matrix_of(k_total, jb, jb) / s
    top = np.hstack([TT, TK])
    bottom = np.hstack([KT, KK])
    return np.vstack([top, bottom]), {"theta_omega": TT, "theta_J": TK, "K_omega": KT, "K_J": KK}


def ricci_q(point: PointData, g_skew=False):
    """``Q``: the top order of ``B`` on anti-J variations of ``J``, divided by ``|xi|^2``."""
    jb = anti_J_basis(point, g_skew=g_skew)
    return _matrix_of(lambda P: _b_on_J(point, P), jb, jb) / point.xi_norm_sq


def check_suite(dims=(2, 4, 6), trials=100, seed=0):
    """Random-point trials of every symbol check; one row per (operator, dim)."""
    rng = np.random.default_rng(seed)
    rows = []
    ops = [("dstard", symbol_dstard), ("k2", symbol_k2),
           ("k2_gskew", lambda p: symbol_k2(p, g_skew=True)),
           ("diffeo", symbol_diffeo), ("ricci_b", symbol_ricci_b)]
    for dim in dims:
        if dim % 2 or dim < 2:
            raise ValueError(f"dimension must be even and positive, got {dim}")
        points = [random_point(dim, rng) for _ in range(trials)]
        for name, fn in ops:
            reps = [fn(p) for p in points]
            nulls = sorted({r.null_dim for r in reps})
            rows.append({
                "operator": name, "dim": dim, "trials": trials,
                "min_constrained": min(float(r.min_constrained) for r in reps if r.min_constrained == r.min_constrained)
                if any(r.min_constrained == r.min_constrained for r in reps) else math.nan,
                "null_dim": nulls[0] if len(nulls) == 1 else nulls,
                "passed": sum(r.verdict for r in reps),
                "verdict": all(r.verdict for r in reps),
            })
    return rows
