import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddflow.fields import (FormField, GridError, GridSpec, ScalarField, TensorField, components_from_full, diff,
                           diff2, form_index_lookup, form_indices, full_from_components, integrate, load_snapshot,
                           partial, permutation_sign, save_snapshot, second_partial)

from conftest import TWO_PI, random_form


class TestGridSpec:
    def test_spacing_and_volume(self):
        g = GridSpec(2, (8, 4), (TWO_PI, 2.0))
        assert g.spacing == pytest.approx((TWO_PI / 8, 0.5))
        assert g.cell_volume == pytest.approx(TWO_PI / 8 * 0.5)
        assert g.npoints == 32

    @pytest.mark.parametrize("dim,sizes,lengths", [
        (3, (4, 4, 4), (1, 1, 1)),
        (4, (4, 4, 4), (1, 1, 1, 1)),
        (2, (3, 4), (1, 1)),
        (2, (4, 4), (1, 0)),
        (2, (4, 4), (1, -2)),
        (8, (4,) * 8, (1,) * 8),
    ])
    def test_rejects_invalid(self, dim, sizes, lengths):
        with pytest.raises(GridError):
            GridSpec(dim, sizes, lengths)

    def test_coords_start_at_zero_and_are_periodic_steps(self):
        g = GridSpec.uniform(2, 8)
        x, y = g.coords()
        assert x[0, 0] == 0.0 and x[1, 0] == pytest.approx(TWO_PI / 8)
        assert np.all(y[:, 3] == pytest.approx(3 * TWO_PI / 8))

    def test_dict_roundtrip(self):
        g = GridSpec(4, (8, 6, 4, 5), (1.0, 2.0, 3.0, 4.0))
        assert GridSpec.from_dict(g.to_dict()) == g


class TestIndexing:
    @pytest.mark.parametrize("dim", [2, 4, 6])
    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    def test_count_and_order(self, dim, p):
        idx = form_indices(dim, p)
        assert len(idx) == math.comb(dim, p)
        assert list(idx) == sorted(idx)
        assert all(list(I) == sorted(set(I)) for I in idx)

    def test_lookup_inverts_indices(self):
        for k, I in enumerate(form_indices(6, 3)):
            assert form_index_lookup(6, 3)[I] == k

    @pytest.mark.parametrize("seq,sign", [((0, 1, 2), 1), ((1, 0, 2), -1), ((2, 0, 1), 1), ((0, 0, 1), 0)])
    def test_permutation_sign(self, seq, sign):
        assert permutation_sign(seq) == sign


class TestFullComponents:
    @pytest.mark.parametrize("dim,p", [(2, 1), (2, 2), (4, 2), (4, 3), (6, 2), (6, 3)])
    def test_roundtrip(self, rng, dim, p):
        c = rng.standard_normal((3, math.comb(dim, p)))
        full = full_from_components(c, dim, p)
        assert full.shape == (3,) + (dim,) * p
        np.testing.assert_array_equal(components_from_full(full, dim, p), c)

    def test_antisymmetry(self, rng):
        full = full_from_components(rng.standard_normal((5, 4)), 4, 3)
        np.testing.assert_array_equal(full, -np.swapaxes(full, -1, -2))
        np.testing.assert_array_equal(full, -np.swapaxes(full, -3, -2))
        assert np.all(full[..., 1, 1, 2] == 0)

    def test_two_form_entries(self):
        c = np.arange(1.0, 7.0)
        W = full_from_components(c, 4, 2)
        look = form_index_lookup(4, 2)
        for (i, j), k in look.items():
            assert W[i, j] == c[k] and W[j, i] == -c[k]


class TestFields:
    def test_shape_checked(self, grid4):
        with pytest.raises(GridError):
            FormField(grid4, 2, np.zeros(grid4.shape + (5,)))
        with pytest.raises(GridError):
            TensorField(grid4, (1, 1), np.zeros(grid4.shape + (4,)))

    def test_non_finite_rejected(self, grid4):
        v = np.zeros(grid4.shape)
        v[0, 0, 0, 0] = np.nan
        with pytest.raises(GridError):
            ScalarField(grid4, v)

    def test_components_are_read_only(self, grid4):
        f = FormField.zeros(grid4, 1)
        with pytest.raises(ValueError):
            f.components[0, 0, 0, 0, 0] = 1.0

    def test_arithmetic(self, grid4, rng):
        a = FormField(grid4, 2, random_form(rng, grid4, 2))
        b = FormField(grid4, 2, random_form(rng, grid4, 2))
        np.testing.assert_allclose((a + b - b).components, a.components, atol=1e-15)
        np.testing.assert_array_equal(a.scaled(2.0).components, 2.0 * a.components)
        with pytest.raises(GridError):
            a + FormField.zeros(grid4, 1)


class TestDifferences:
    def test_diff_matches_roll_stencil(self, rng):
        a = rng.standard_normal((7, 5, 3))
        for axis in range(2):
            ref = (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * 0.3)
            np.testing.assert_allclose(diff(a, axis, 0.3), ref, atol=1e-14)

    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_diff_symbol_on_fourier_mode(self, n):
        g = GridSpec.uniform(2, n)
        x, _ = g.coords()
        h = g.spacing[0]
        d = partial(ScalarField(g, np.sin(2 * x)), 0).values
        np.testing.assert_allclose(d, math.sin(2 * h) / h * np.cos(2 * x), atol=1e-13)

    def test_second_difference_symbol(self):
        g = GridSpec.uniform(2, 16)
        x, y = g.coords()
        h = g.spacing[0]
        u = np.cos(3 * x)
        lam = -(2 * math.sin(1.5 * h) / h) ** 2
        np.testing.assert_allclose(second_partial(ScalarField(g, u), 0, 0).values, lam * u, atol=1e-12)

    def test_mixed_second_difference_commutes(self, rng):
        a = rng.standard_normal((6, 8))
        sp = (0.4, 0.7)
        np.testing.assert_allclose(diff2(a, 0, 1, sp), diff2(a, 1, 0, sp), atol=1e-13)

    def test_partial_rejects_bad_axis(self, grid4):
        with pytest.raises(GridError):
            partial(ScalarField(grid4, np.zeros(grid4.shape)), 4)

    @given(st.integers(0, 3), st.floats(-3, 3))
    def test_constants_have_zero_derivative(self, axis, c):
        g = GridSpec(4, (4, 5, 4, 6), (1.0,) * 4)
        assert np.all(diff(np.full(g.shape, c), axis, g.spacing[axis]) == 0.0)


class TestIntegrate:
    def test_rectangle_rule_exact_for_trig(self):
        g = GridSpec.uniform(2, 8)
        x, y = g.coords()
        assert integrate(ScalarField(g, 1.0 + np.cos(x) * np.sin(2 * y))) == pytest.approx(TWO_PI ** 2)


class TestSnapshots:
    @pytest.mark.parametrize("kind", ["scalar", "form", "tensor"])
    def test_roundtrip_bitwise(self, tmp_path, grid4, rng, kind):
        if kind == "scalar":
            f = ScalarField(grid4, rng.standard_normal(grid4.shape))
        elif kind == "form":
            f = FormField(grid4, 2, random_form(rng, grid4, 2))
        else:
            f = TensorField(grid4, (1, 1), rng.standard_normal(grid4.shape + (4, 4)))
        path = save_snapshot(f, tmp_path / "f.json")
        g = load_snapshot(path)
        assert type(g) is type(f) and g.grid == f.grid
        data = g.values if kind == "scalar" else g.components
        ref = f.values if kind == "scalar" else f.components
        assert np.array_equal(data, ref)

    def test_truncated_payload_rejected(self, tmp_path, grid4):
        path = save_snapshot(FormField.zeros(grid4, 1), tmp_path / "f.json")
        payload = tmp_path / "f.json.bin"
        payload.write_bytes(payload.read_bytes()[:-8])
        with pytest.raises(GridError):
            load_snapshot(path)
