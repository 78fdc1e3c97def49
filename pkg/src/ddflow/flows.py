"""Right-hand sides, RK4 stepping and run loop for the d*d-type flows.

Flow kinds
----------
``tamed_dstard``
    ``d_t omega = -d*d omega`` with ``J`` frozen; the metric is the tamed one.
``compatible_dstard``
    ``d_t omega = -d*d omega``, ``d_t J = K1`` where ``g(K1 x, y) = (-d*d omega)_{J-}(x, y)``.
``deturck``
    Gauge-fixed system on tamed pairs::

        d_t omega = -d*d omega_J + L_X omega_J + g^pq d_p d_q omega_{J-}
        d_t J     = K2(omega_J, J) + L_X J

``dstard_ricci``
    ``d_t omega = -d*d omega``, ``d_t J = K1 + B``.
``laplacian_exploratory``
    ``d_t omega = -Delta omega`` with the ``K1`` formula applied to ``-Delta omega``;
    only available when explicitly enabled.

Every assembled ``K`` is projected onto ``{JK + KJ = 0}`` by ``K -> (K + JKJ)/2``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _batched
from .curvature import Metric, b_array, curvature_monitors, ricci_array
from .errors import BlowupDetected, NondegeneracyLost, NotCompatible, NotTamed, RetractionDiverged
from .exterior import (
    codiff_array,
    d_array,
    d_star_d_array,
    deturck_x_array,
    inner_array,
    lie_form_full,
    lie_J_array,
    minus_dstar_d_covariant_full,
)
from .fields import FormField, GridSpec, TensorField, components_from_full, diff2, full_from_components, save_snapshot
from .hermitian import EPS_ND, TOL_C, HermitianPair, anti_invariant_array, pullback_by, retract_array

FLOW_KINDS = ("tamed_dstard", "compatible_dstard", "deturck", "dstard_ricci", "laplacian_exploratory")
CSV_HEADER = ("t", "dt", "volume", "H0", "H1", "compat_inf", "min_pf", "max_rm", "max_grad_omega", "max_hess_omega")


class ConfigError(ValueError):
    """Invalid flow configuration."""


@dataclass(frozen=True)
class StopThresholds:
    min_metric_eig: float = 1e-8
    min_pf: float = EPS_ND
    max_monitor: float = 1e8


@dataclass(frozen=True)
class FlowConfig:
    """Settings for one flow run.

    ``monitor_every`` controls how often the curvature monitors
    (``max_rm``, ``max_grad_omega``, ``max_hess_omega``) are recomputed; rows in
    between repeat the latest values.
    """

    flow_kind: str
    t_end: float
    cfl_sigma: float = 0.2
    retraction: bool = True
    allow_exploratory: bool = False
    background_metric: str = "flat"
    stop: StopThresholds = field(default_factory=StopThresholds)
    monitor_every: int = 1
    snapshot_every: int = 0
    tol_c: float = TOL_C

    def __post_init__(self):
        if self.flow_kind not in FLOW_KINDS:
            raise ConfigError(f"flow_kind: unknown kind {self.flow_kind!r}; expected one of {FLOW_KINDS}")
        if not 0.0 < self.cfl_sigma < 1.0:
            raise ConfigError(f"cfl_sigma: must lie in (0, 1), got {self.cfl_sigma}")
        if not self.t_end > 0.0:
            raise ConfigError(f"t_end: must be positive, got {self.t_end}")
        if self.flow_kind == "laplacian_exploratory" and not self.allow_exploratory:
            raise ConfigError("flow_kind: laplacian_exploratory needs allow_exploratory = true")
        if self.background_metric != "flat":
            raise ConfigError("background_metric: only 'flat' is supported")
        if self.monitor_every < 1:
            raise ConfigError("monitor_every: must be at least 1")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every: must be nonnegative")


def cfl_dt(grid: GridSpec, sigma):
    """``sigma * min(h_a^2) / (2 dim)``."""
    return sigma * min(h * h for h in grid.spacing) / (2 * grid.dim)


@dataclass(frozen=True)
class Diagnostics:
    volume: float
    H0: float
    H1: float
    compat_inf: float
    min_pf: float
    max_rm: float = float("nan")
    max_grad_omega: float = float("nan")
    max_hess_omega: float = float("nan")
    min_metric_eig: float = float("nan")


@dataclass(frozen=True)
class FlowState:
    pair: HermitianPair
    t: float
    diagnostics: Diagnostics | None = None

    @property
    def omega(self):
        return self.pair.omega

    @property
    def J(self):
        return self.pair.J


# --- building blocks ----------------------------------------------------------


def project_anti_J(K, J):
    """Nearest-in-form anti-commuting part ``(K + J K J) / 2``."""
    return 0.5 * (K + _batched.mm(_batched.mm(J, K), J))


def k1_array(metric: Metric, J, Theta):
    """``K1^j_i = g^{jp} (theta_{J-})_{ip}`` for a full antisymmetric ``Theta``."""
    anti = anti_invariant_array(Theta, J)
    if not np.any(anti):
        return np.zeros(Theta.shape)
    return project_anti_J(_batched.mm(metric.inv, np.swapaxes(anti, -1, -2)), J)


def second_order_sum(arr, metric: Metric):
    """``g^pq d_p d_q arr`` with the 3-point stencil on the diagonal and composed differences off it."""
    grid, gi = metric.grid, metric.inv
    extra = arr.ndim - len(grid.shape)
    out = np.zeros_like(arr)
    for p in range(grid.dim):
        for q in range(p, grid.dim):
            coef = gi[..., p, q] if p == q else 2.0 * gi[..., p, q]
            if not np.any(coef):
                continue
            out += coef.reshape(coef.shape + (1,) * extra) * diff2(arr, p, q, grid.spacing)
    return out


def k2_parts(pair: HermitianPair):
    """Assemble ``K2`` from ``(omega_J, J)`` exactly as the displayed construction.

    Returns a dict with ``K2`` and the intermediate ``psi``, ``phi``, ``L``,
    ``theta_b`` (route (b) of ``-d*d omega_J``) and ``D2W = g^pq d_p d_q omega_J``.
    """
    cp = pair if pair.is_compatible else pair.invariant()
    m, J, W = cp.metric, cp.J_array, cp.W
    G = m.g
    theta_b = minus_dstar_d_covariant_full(W, m)
    D2W = second_order_sum(W, m)
    D2J = second_order_sum(J, m)
    psi = theta_b - D2W
    D2Jt = np.swapaxes(D2J, -1, -2)
    phi = D2W - pullback_by(D2W, J) - _batched.mm(D2Jt, G) + _batched.mm(G, D2J)
    M = anti_invariant_array(psi, J) + 0.5 * phi
    L = _batched.mm(m.inv, np.swapaxes(M, -1, -2))
    lead = 0.5 * (D2J - _batched.mm(_batched.mm(m.inv, D2Jt), G))
    K2 = project_anti_J(lead + L, J)
    return {"K2": K2, "psi": psi, "phi": phi, "L": L, "theta_b": theta_b, "D2W": D2W, "pair": cp}


def _pair(grid, w, J, tol_c, check_J=False):
    return HermitianPair(FormField(grid, 2, w), J, tol_c=tol_c, check_J=check_J)


def rhs_arrays(pair: HermitianPair, kind: str, enforce=True):
    """``(theta components, K)`` of the requested flow at ``pair``.

    With ``enforce`` the compatible kinds reject pairs whose defect exceeds
    ``tol_c``.  The time stepper checks this once at the start of a run and
    then lets the O(dt^2) per-step drift show up in the diagnostics instead.
    """
    grid, m, J = pair.grid, pair.metric, pair.J_mat
    w = np.asarray(pair.omega.components)
    if enforce and kind in ("compatible_dstard", "dstard_ricci"):
        pair.require_compatible()
    if kind == "tamed_dstard":
        return -d_star_d_array(w, m), np.zeros_like(J)
    if kind in ("compatible_dstard", "dstard_ricci", "laplacian_exploratory"):
        if kind == "laplacian_exploratory":
            theta = -(d_star_d_array(w, m) + d_array(codiff_array(w, m, 2), grid, 1))
        else:
            theta = -d_star_d_array(w, m)
        K = k1_array(m, J, full_from_components(theta, grid.dim, 2))
        if kind == "dstard_ricci":
            K = K + project_anti_J(b_array(m, J, ricci_array(m)), J)
        return theta, K
    if kind == "deturck":
        parts = k2_parts(pair)
        cp = parts["pair"]
        cm = cp.metric
        wj = np.asarray(cp.omega.components)
        X = deturck_x_array(cp.W, cm, cp.omega_inv_array)
        lie_w = components_from_full(lie_form_full(X, cp.W, grid), grid.dim, 2)
        w_minus = components_from_full(pair.W_anti, grid.dim, 2)
        theta = -d_star_d_array(wj, cm) + lie_w + second_order_sum(w_minus, cm)
        K = project_anti_J(parts["K2"] + lie_J_array(X, pair.J_array, grid), J)
        return theta, K
    raise ConfigError(f"unknown flow kind {kind!r}")


def rhs(state, flow_kind: str):
    """Field-level right-hand side ``(theta, K)``."""
    pair = state.pair if isinstance(state, FlowState) else state
    theta, K = rhs_arrays(pair, flow_kind)
    return FormField(pair.grid, 2, theta), TensorField(pair.grid, (1, 1), K)


def k1(pair: HermitianPair, theta: FormField) -> TensorField:
    pair.require_compatible()
    return TensorField(pair.grid, (1, 1), k1_array(pair.metric, pair.J_array, theta.full()))


def k2(pair: HermitianPair, background_connection=None) -> TensorField:
    return TensorField(pair.grid, (1, 1), k2_parts(pair)["K2"])


def deturck_x(pair: HermitianPair, background_connection=None) -> TensorField:
    return TensorField(pair.grid, (1, 0), deturck_x_array(pair.W, pair.metric, pair.omega_inv_array))


# --- diagnostics ------------------------------------------------------------------


def diagnostics(pair: HermitianPair, with_monitors=True) -> Diagnostics:
    m, grid = pair.metric, pair.grid
    w = np.asarray(pair.omega.components)
    dw = d_array(w, grid, 2)
    sw = codiff_array(w, m, 2)
    cell = grid.cell_volume
    h0 = float(np.sum(inner_array(dw, dw, m, 3) * m.sqrt_det) * cell)
    h1 = float(np.sum(inner_array(sw, sw, m, 1) * m.sqrt_det) * cell)
    # correctly rounded, so late-time decrements of a few ulp stay visible
    vol = math.fsum((np.asarray(pair.pf) * cell).ravel())
    d = Diagnostics(vol, h0, h1, pair.compat_defect, pair.min_pf)
    if with_monitors:
        rm, gw, hw = curvature_monitors(m, pair.W)
        if m.diagonal:
            eig = float(np.min(np.diagonal(m.g, axis1=-2, axis2=-1)))
        else:
            eig = float(np.min(np.linalg.eigvalsh(m.g)))
        d = replace(d, max_rm=rm, max_grad_omega=gw, max_hess_omega=hw, min_metric_eig=eig)
    return d


def _check_stop(diag: Diagnostics, stop: StopThresholds, t):
    if diag.min_pf <= stop.min_pf:
        raise NondegeneracyLost(f"min |Pf| = {diag.min_pf:.3e} at t = {t:.6g}")
    if diag.min_metric_eig == diag.min_metric_eig and diag.min_metric_eig <= stop.min_metric_eig:
        raise NondegeneracyLost(f"min eigenvalue of g = {diag.min_metric_eig:.3e} at t = {t:.6g}")
    for name in ("max_rm", "max_grad_omega", "max_hess_omega", "H0", "H1"):
        v = getattr(diag, name)
        if v == v and (not math.isfinite(v) or v > stop.max_monitor):
            raise BlowupDetected(f"{name} = {v:.3e} exceeds {stop.max_monitor:.1e} at t = {t:.6g}")


# --- time stepping ---------------------------------------------------------------


def _rk4(pair: HermitianPair, kind, dt, tol_c):
    grid = pair.grid
    w0 = np.asarray(pair.omega.components)
    J0 = pair.J_array

    def f(w, J, p=None):
        return rhs_arrays(p if p is not None else _pair(grid, w, J, tol_c), kind, enforce=False)

    t1, k1_ = f(w0, J0, pair)
    t2, k2_ = f(w0 + 0.5 * dt * t1, J0 + 0.5 * dt * k1_)
    t3, k3_ = f(w0 + 0.5 * dt * t2, J0 + 0.5 * dt * k2_)
    t4, k4_ = f(w0 + dt * t3, J0 + dt * k3_)
    w = w0 + dt / 6.0 * (t1 + 2 * t2 + 2 * t3 + t4)
    J = J0 + dt / 6.0 * (k1_ + 2 * k2_ + 2 * k3_ + k4_)
    return w, J


def step(state: FlowState, config: FlowConfig, dt: float | None = None, with_monitors=True) -> FlowState:
    """One RK4 step followed by the J retraction and fresh diagnostics."""
    pair = state.pair
    if dt is None:
        dt = cfl_dt(pair.grid, config.cfl_sigma)
    w, J = _rk4(pair, config.flow_kind, dt, config.tol_c)
    if config.retraction and config.flow_kind != "tamed_dstard":
        J = retract_array(J)
    t = state.t + dt
    if not np.all(np.isfinite(w)) or not np.all(np.isfinite(J)):
        raise BlowupDetected(f"non-finite state at t = {t:.6g}")
    try:
        new_pair = _pair(pair.grid, w, J, config.tol_c)
    except NotTamed as exc:
        raise NondegeneracyLost(f"taming lost at t = {t:.6g}") from exc
    diag = diagnostics(new_pair, with_monitors=with_monitors)
    _check_stop(diag, config.stop, t)
    return FlowState(new_pair, t, diag)


@dataclass
class RunResult:
    final: FlowState
    rows: list
    reason: str
    error: Exception | None = None
    wall_time: float = 0.0
    steps: int = 0

    @property
    def ok(self):
        return self.error is None


def _row(state: FlowState, dt):
    d = state.diagnostics
    return (state.t, dt, d.volume, d.H0, d.H1, d.compat_inf, d.min_pf, d.max_rm, d.max_grad_omega, d.max_hess_omega)


def run(pair: HermitianPair, config: FlowConfig, csv_path=None, snapshot_dir=None, keep_states=False,
        max_steps=None) -> RunResult:
    """Integrate to ``config.t_end`` (or until a stop condition fires).

    A CSV row is written for the initial state and after every step; the file
    is flushed per row so an interrupted run still leaves its trajectory.
    """
    start = time.perf_counter()
    dt_cfl = cfl_dt(pair.grid, config.cfl_sigma)
    if config.flow_kind in ("compatible_dstard", "dstard_ricci"):
        pair.require_compatible()
    state = FlowState(pair, 0.0, diagnostics(pair))
    rows = [_row(state, 0.0)]
    states = [state] if keep_states else None
    fh = writer = None
    if csv_path is not None:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerow([repr(float(v)) for v in rows[0]])
    if snapshot_dir is not None and config.snapshot_every:
        _snapshot(state, snapshot_dir, 0)
    reason, error, nstep = "t_end reached", None, 0
    last = state.diagnostics
    try:
        while state.t < config.t_end * (1 - 1e-12):
            if max_steps is not None and nstep >= max_steps:
                reason = "max_steps reached"
                break
            dt = min(dt_cfl, config.t_end - state.t)
            nstep += 1
            monitor = nstep % config.monitor_every == 0
            state = step(state, config, dt, with_monitors=monitor)
            if not monitor:
                state = replace(state, diagnostics=replace(
                    state.diagnostics, max_rm=last.max_rm, max_grad_omega=last.max_grad_omega,
                    max_hess_omega=last.max_hess_omega, min_metric_eig=last.min_metric_eig))
            last = state.diagnostics
            rows.append(_row(state, dt))
            if writer is not None:
                writer.writerow([repr(float(v)) for v in rows[-1]])
                fh.flush()
            if keep_states:
                states.append(state)
            if snapshot_dir is not None and config.snapshot_every and nstep % config.snapshot_every == 0:
                _snapshot(state, snapshot_dir, nstep)
    except (BlowupDetected, NondegeneracyLost, RetractionDiverged, NotCompatible) as exc:
        reason, error = f"{type(exc).__name__}: {exc}", exc
    finally:
        if fh is not None:
            fh.close()
    result = RunResult(state, rows, reason, error, time.perf_counter() - start, nstep)
    if keep_states:
        result.states = states
    return result


def _snapshot(state: FlowState, directory, nstep):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_snapshot(state.pair.omega, directory / f"omega_{nstep:06d}.json", name="omega")
    save_snapshot(state.pair.J, directory / f"J_{nstep:06d}.json", name="J")
