import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcflow.grid import (
    FieldKind,
    Grid,
    NonFiniteFieldError,
    Scheme,
    get_calculus,
    kind_of,
    lp_norm,
    project_to_sphere,
    read_snapshot,
    total,
    unit_defect,
    write_snapshot,
)


def trig_field(grid):
    x, y, z = grid.coordinates()
    f = np.sin(x) * np.cos(2 * y) + np.cos(z)
    grad = np.stack([np.cos(x) * np.cos(2 * y), -2 * np.sin(x) * np.sin(2 * y), -np.sin(z)])
    lap = -5 * np.sin(x) * np.cos(2 * y) - np.cos(z)
    return f, grad, lap


class TestGrid:
    def test_spacing_and_volume(self):
        g = Grid((8, 16, 32), (1.0, 2.0, 4.0))
        assert g.spacing == (0.125, 0.125, 0.125)
        assert g.h_min == 0.125
        assert math.isclose(g.volume, 8.0)
        assert g.n_nodes == 8 * 16 * 32

    @pytest.mark.parametrize("dims", [(2, 8, 8), (8, 0, 8)])
    def test_rejects_tiny_dims(self, dims):
        with pytest.raises(ValueError):
            Grid(dims)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            Grid((8, 8, 8), (1.0, -1.0, 1.0))

    def test_zeros_shapes(self):
        g = Grid((4, 4, 4))
        assert g.zeros(FieldKind.SCALAR).shape == (4, 4, 4)
        assert g.zeros(FieldKind.VECTOR).shape == (3, 4, 4, 4)
        assert g.zeros(FieldKind.TENSOR).shape == (3, 3, 4, 4, 4)
        assert kind_of(g.zeros(FieldKind.TENSOR)) is FieldKind.TENSOR


class TestSpectral:
    def test_gradient_and_laplacian_exact(self, grid32):
        calc = get_calculus(grid32)
        f, grad, lap = trig_field(grid32)
        assert np.abs(calc.gradient(f) - grad).max() < 1e-12
        assert np.abs(calc.laplacian(f) - lap).max() < 1e-12

    def test_div_curl_vanishes(self, grid32):
        calc = get_calculus(grid32)
        x, y, z = grid32.coordinates()
        v = np.stack([np.sin(y) * np.cos(z), np.sin(2 * x) + np.cos(z), np.cos(x) * np.sin(y)])
        assert np.abs(calc.divergence(calc.curl(v))).max() < 1e-12

    def test_constant_field_has_exact_zero_derivatives(self, grid16):
        calc = get_calculus(grid16)
        c = np.full(grid16.dims, 0.1)
        assert not calc.gradient(c).any()
        assert not calc.laplacian(c).any()

    def test_dealias_removes_high_modes(self, grid16):
        calc = get_calculus(grid16)
        x, _, _ = grid16.coordinates()
        low, high = np.sin(2 * x), np.sin(7 * x)
        assert np.abs(calc.dealias(low + high) - low).max() < 1e-13

    def test_non_finite_input_rejected(self, grid16):
        calc = get_calculus(grid16)
        f = np.zeros(grid16.dims)
        f[1, 2, 3] = np.nan
        with pytest.raises(NonFiniteFieldError) as err:
            calc.gradient(f)
        assert err.value.index == (1, 2, 3)

    def test_shape_mismatch(self, grid16):
        with pytest.raises(ValueError):
            get_calculus(grid16).laplacian(np.zeros((8, 8, 8)))


class TestFiniteDifference:
    def test_second_order(self):
        errors = []
        for n in (16, 32, 64):
            g = Grid((n, n, n))
            f, grad, lap = trig_field(g)
            calc = get_calculus(g, Scheme.FD2)
            errors.append(np.abs(calc.laplacian(f) - lap).max() + np.abs(calc.gradient(f) - grad).max())
        orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert min(orders) > 1.9


class TestNorms:
    def test_constant_norms(self):
        g = Grid((8, 8, 8), (1.0, 1.0, 1.0))
        ones = np.ones(g.dims)
        for p in (1, 2, 3, 4, 6):
            assert math.isclose(lp_norm(ones, g, p), 1.0, rel_tol=1e-14)
        assert lp_norm(ones, g, math.inf) == 1.0

    def test_rejects_unknown_exponent(self, grid16):
        with pytest.raises(ValueError):
            lp_norm(np.ones(grid16.dims), grid16, 2.5)

    def test_total_is_order_independent_of_copies(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((16, 16, 16))
        assert total(a) == total(a.copy(order="F"))

    def test_projection(self, grid16):
        rng = np.random.default_rng(0)
        d = project_to_sphere(rng.standard_normal((3,) + grid16.dims) + 2.0)
        assert unit_defect(d) < 1e-15


class TestSnapshot:
    @settings(max_examples=20, deadline=None)
    @given(
        dims=st.tuples(*[st.integers(4, 7)] * 3),
        kind=st.sampled_from(list(FieldKind)),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_round_trip(self, dims, kind, seed):
        g = Grid(dims, (1.0, 2.0, 3.0))
        data = np.random.default_rng(seed).standard_normal(g.zeros(kind).shape)
        buf = io.BytesIO()
        write_snapshot(buf, data, g, kind)
        buf.seek(0)
        snap = read_snapshot(buf)
        assert snap.grid == g and snap.kind is kind
        assert np.array_equal(snap.data, data)

    def test_component_fastest_layout(self):
        g = Grid((4, 4, 4))
        v = np.stack([np.full(g.dims, c) for c in (1.0, 2.0, 3.0)])
        buf = io.BytesIO()
        write_snapshot(buf, v, g)
        payload = np.frombuffer(buf.getvalue()[-8 * 6 :], dtype="<f8")
        assert payload.tolist() == [1.0, 2.0, 3.0, 1.0, 2.0, 3.0]

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            read_snapshot(io.BytesIO(b"XXXX" + bytes(80)))

    def test_truncated(self):
        g = Grid((4, 4, 4))
        buf = io.BytesIO()
        write_snapshot(buf, np.zeros(g.dims), g)
        with pytest.raises(ValueError):
            read_snapshot(io.BytesIO(buf.getvalue()[:-8]))
