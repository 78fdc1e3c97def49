import csv
import math

import numpy as np
import pytest

from ddflow import presets
from ddflow.errors import NotCompatible
from ddflow.fields import GridSpec, form_index_lookup
from ddflow.flows import (CSV_HEADER, ConfigError, FlowConfig, FlowState, StopThresholds, cfl_dt, k1_array,
                          k2_parts, project_anti_J, rhs_arrays, run, second_order_sum, step)
from ddflow.hermitian import variation_defect_arrays

from conftest import TWO_PI


class TestFlowConfig:
    @pytest.mark.parametrize("kwargs,field_name", [
        ({"flow_kind": "mystery"}, "flow_kind"),
        ({"cfl_sigma": 1.5}, "cfl_sigma"),
        ({"cfl_sigma": 0.0}, "cfl_sigma"),
        ({"t_end": 0.0}, "t_end"),
        ({"flow_kind": "laplacian_exploratory"}, "flow_kind"),
        ({"background_metric": "round"}, "background_metric"),
        ({"monitor_every": 0}, "monitor_every"),
        ({"snapshot_every": -1}, "snapshot_every"),
    ])
    def test_invalid_field_named(self, kwargs, field_name):
        base = {"flow_kind": "compatible_dstard", "t_end": 1.0}
        base.update(kwargs)
        with pytest.raises(ConfigError, match=field_name):
            FlowConfig(**base)

    def test_exploratory_needs_flag(self):
        assert FlowConfig("laplacian_exploratory", 1.0, allow_exploratory=True).allow_exploratory

    def test_cfl_dt(self):
        g = GridSpec(4, (16, 8, 4, 4), (TWO_PI,) * 4)
        assert cfl_dt(g, 0.2) == pytest.approx(0.2 * (TWO_PI / 16) ** 2 / 8)


class TestBuildingBlocks:
    def test_projection_anticommutes_and_is_idempotent(self, rng):
        J = presets.standard(GridSpec(4, (4,) * 4, (1.0,) * 4)).J_array[0, 0, 0, 0]
        K = rng.standard_normal((4, 4))
        P = project_anti_J(K, J)
        np.testing.assert_allclose(J @ P + P @ J, 0, atol=1e-14)
        np.testing.assert_allclose(project_anti_J(P, J), P, atol=1e-14)

    def test_k1_keeps_compatibility_to_first_order(self, grid4_smooth, rng):
        pair = presets.twisted(grid4_smooth)
        B = rng.standard_normal(grid4_smooth.shape + (4, 4))
        Theta = B - np.swapaxes(B, -1, -2)
        K = k1_array(pair.metric, pair.J_array, Theta)
        d = variation_defect_arrays(pair.W, pair.J_array, Theta, K)
        assert d.anticommute < 1e-12 and d.kequ < 1e-11

    def test_k1_vanishes_on_invariant_velocity(self, grid4):
        pair = presets.standard(grid4)
        assert np.max(np.abs(k1_array(pair.metric, pair.J_array, pair.W))) == 0.0

    def test_second_order_sum_flat_symbol(self):
        g = GridSpec(4, (16, 16, 4, 4), (TWO_PI,) * 4)
        x, y, _, _ = g.coords()
        h = g.spacing[0]
        u = np.cos(x)[..., None]
        out = second_order_sum(u, presets.standard(g).metric)
        np.testing.assert_allclose(out, -(2 * math.sin(h / 2) / h) ** 2 * u, atol=1e-12)

    def test_k2_equals_k1_on_warped_pair(self):
        g = GridSpec(4, (16, 4, 4, 4), (TWO_PI,) * 4)
        pair = presets.t4_warped(g)
        theta, K1 = rhs_arrays(pair, "compatible_dstard")
        assert np.max(np.abs(K1)) == 0.0
        assert np.max(np.abs(k2_parts(pair)["K2"])) < 1e-12


class TestRhs:
    @pytest.mark.parametrize("kind", ["tamed_dstard", "compatible_dstard", "dstard_ricci", "deturck"])
    def test_standard_pair_is_stationary(self, grid4, kind):
        theta, K = rhs_arrays(presets.standard(grid4), kind)
        assert np.max(np.abs(theta)) == 0.0 and np.max(np.abs(K)) == 0.0

    @pytest.mark.parametrize("kind", ["tamed_dstard", "compatible_dstard", "dstard_ricci"])
    def test_symplectic_omega_is_stationary(self, kind):
        g = GridSpec(4, (16, 16, 4, 4), (TWO_PI,) * 4)
        theta, _ = rhs_arrays(presets.symplectic(g), kind)
        assert np.max(np.abs(theta)) < 1e-12

    @pytest.mark.parametrize("kind", ["compatible_dstard", "dstard_ricci"])
    def test_compatible_kinds_reject_tamed_data(self, grid4_smooth, kind):
        with pytest.raises(NotCompatible):
            rhs_arrays(presets.tamed(grid4_smooth), kind)

    def test_velocity_anticommutes_with_J(self, grid4_smooth):
        pair = presets.twisted(grid4_smooth)
        for kind in ("compatible_dstard", "dstard_ricci", "deturck"):
            _, K = rhs_arrays(pair, kind)
            J = pair.J_array
            assert np.max(np.abs(J @ K + K @ J)) < 1e-10

    def test_warped_velocity_is_warping_equation(self):
        # d_t b = b'' - b'^2 / b for omega = dx^dy + b dz^dw, to second order
        errs = []
        for n in (16, 32):
            g = GridSpec(4, (n, 4, 4, 4), (TWO_PI,) * 4)
            x = g.coords()[0]
            b = np.exp(0.1 * np.cos(x))
            db, d2b = -0.1 * np.sin(x) * b, (0.01 * np.sin(x) ** 2 - 0.1 * np.cos(x)) * b
            theta, _ = rhs_arrays(presets.t4_warped(g), "compatible_dstard")
            errs.append(np.max(np.abs(theta[..., form_index_lookup(4, 2)[(2, 3)]] - (d2b - db ** 2 / b))))
        assert math.log2(errs[0] / errs[1]) >= 1.8


class TestGridReduction:
    """Data depending on ``x`` alone evolve identically on any number of points along the other axes."""

    @pytest.mark.parametrize("kind", ["compatible_dstard", "deturck"])
    def test_four_dim(self, kind):
        small = GridSpec(4, (16, 4, 4, 4), (TWO_PI,) * 4)
        big = GridSpec(4, (16, 8, 6, 4), (TWO_PI,) * 4)
        cfg = FlowConfig(kind, 1.0)
        dt = cfl_dt(small, 0.2)
        a = step(FlowState(presets.t4_warped(small), 0.0), cfg, dt, with_monitors=False)
        b = step(FlowState(presets.t4_warped(big), 0.0), cfg, dt, with_monitors=False)
        wa, wb = np.asarray(a.pair.omega.components), np.asarray(b.pair.omega.components)
        np.testing.assert_allclose(wb[:, :4, :4, :4], wa, atol=1e-15)
        assert np.ptp(wb, axis=(1, 2, 3)).max() == 0.0

    def test_six_dim(self):
        small = GridSpec(6, (8, 4, 4, 4, 4, 4), (TWO_PI,) * 6)
        big = GridSpec(6, (8, 8, 4, 4, 4, 4), (TWO_PI,) * 6)
        cfg = FlowConfig("compatible_dstard", 1.0)
        dt = cfl_dt(small, 0.2)
        a = step(FlowState(presets.product_f(small), 0.0), cfg, dt, with_monitors=False)
        b = step(FlowState(presets.product_f(big), 0.0), cfg, dt, with_monitors=False)
        np.testing.assert_allclose(np.asarray(b.pair.omega.components)[:, :4], a.pair.omega.components, atol=1e-15)


class TestRun:
    def test_csv_rows_and_header(self, tmp_path):
        g = GridSpec(4, (8, 4, 4, 4), (TWO_PI,) * 4)
        cfg = FlowConfig("compatible_dstard", 0.05, monitor_every=2)
        res = run(presets.t4_warped(g), cfg, csv_path=tmp_path / "d.csv")
        assert res.ok and res.reason == "t_end reached"
        rows = list(csv.reader(open(tmp_path / "d.csv")))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == res.steps + 2
        assert float(rows[-1][0]) == pytest.approx(0.05)
        vols = [float(r[2]) for r in rows[1:]]
        assert all(b < a for a, b in zip(vols, vols[1:]))

    def test_stops_on_pfaffian_threshold(self):
        g = GridSpec(4, (16, 4, 4, 4), (TWO_PI,) * 4)
        pair = presets.rotated(g)
        cfg = FlowConfig("tamed_dstard", 1.0, stop=StopThresholds(min_pf=pair.min_pf - 1e-4))
        res = run(pair, cfg)
        assert not res.ok and "NondegeneracyLost" in res.reason
        assert res.final.t < 1.0

    def test_max_steps(self):
        g = GridSpec(4, (8, 4, 4, 4), (TWO_PI,) * 4)
        res = run(presets.t4_warped(g), FlowConfig("compatible_dstard", 1.0), max_steps=3)
        assert res.steps == 3 and res.reason == "max_steps reached"

    def test_snapshots_written(self, tmp_path):
        g = GridSpec(4, (8, 4, 4, 4), (TWO_PI,) * 4)
        run(presets.t4_warped(g), FlowConfig("compatible_dstard", 1.0, snapshot_every=2), snapshot_dir=tmp_path,
            max_steps=4)
        names = sorted(p.name for p in tmp_path.glob("*.json"))
        assert names == ["J_000000.json", "J_000002.json", "J_000004.json",
                         "omega_000000.json", "omega_000002.json", "omega_000004.json"]

    def test_compatibility_preserved_by_retraction(self):
        g = GridSpec(4, (16, 16, 4, 4), (TWO_PI,) * 4)
        res = run(presets.twisted(g), FlowConfig("compatible_dstard", 0.02, monitor_every=100))
        assert res.ok
        assert res.final.diagnostics.compat_inf < 1e-6
        J = res.final.pair.J_array
        np.testing.assert_allclose(J @ J, -np.broadcast_to(np.eye(4), J.shape), atol=1e-12)
