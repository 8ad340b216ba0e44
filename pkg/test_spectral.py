"""
Tests for the spectral core: grids, fields, transforms, multipliers, norms
and the dyadic rescaling map.
"""
import math

import numpy as np
import pytest

from models.exceptions import DomainError, StructuralError, UnsupportedOperationError
from models.schemas import PhysicsParams
from utils.spectral import (Field, Grid, apply_multiplier, frac_laplacian, gradient, gradient_component,
                            h_norm, hdot_norm, lp_norm, mass, norm, periodization_leak, rescale,
                            resolvent, spectral_mass, transform)


def plane_wave(grid: Grid, k: float) -> Field:
    return Field(grid, values=np.exp(1j * k * grid.coordinates[0]))


class TestGrid:
    """Grid construction and derived arrays."""

    def test_spacing_and_volume(self):
        grid = Grid(2, 64, 10.0)
        assert grid.shape == (64, 64)
        assert grid.spacing == pytest.approx(20.0 / 64)
        assert grid.volume == pytest.approx(400.0)
        assert grid.cell_volume == pytest.approx((20.0 / 64) ** 2)

    def test_axis_starts_at_minus_L(self):
        grid = Grid(1, 32, 5.0)
        assert grid.axis[0] == -5.0
        assert grid.axis[-1] == pytest.approx(5.0 - grid.spacing)

    def test_wavenumbers_are_integer_multiples_of_pi_over_L(self):
        grid = Grid(1, 16, 2.0)
        assert np.allclose(grid.wavenumber_axis / (np.pi / 2.0), np.fft.fftfreq(16, d=1 / 16))

    def test_arrays_are_read_only(self):
        grid = Grid(1, 16, 1.0)
        with pytest.raises(ValueError):
            grid.axis[0] = 1.0

    @pytest.mark.parametrize("n", [8, 100, 0])
    def test_rejects_bad_point_counts(self, n):
        with pytest.raises(StructuralError, match="power of two"):
            Grid(1, n, 1.0)

    def test_rejects_unsupported_dimension(self):
        with pytest.raises(StructuralError, match="dimension"):
            Grid(4, 16, 1.0)

    def test_rejects_non_positive_half_length(self):
        with pytest.raises(DomainError, match="half_length"):
            Grid(1, 16, 0.0)


class TestField:
    """Field representations and algebra."""

    def test_needs_some_representation(self):
        with pytest.raises(StructuralError):
            Field(Grid(1, 16, 1.0))

    def test_size_mismatch(self):
        with pytest.raises(StructuralError, match="entries"):
            Field(Grid(1, 16, 1.0), values=np.zeros(32))

    def test_constant_field_spectrum(self):
        grid = Grid(2, 16, 3.0)
        field = Field(grid, values=np.full(grid.shape, 2.5))
        spectral = field.spectral
        assert spectral[0, 0] == pytest.approx(2.5)
        others = np.abs(spectral).copy()
        others[0, 0] = 0.0
        assert np.max(others) < 1e-14

    def test_plane_wave_has_single_coefficient(self):
        grid = Grid(1, 64, math.pi)
        spectral = plane_wave(grid, 3.0).spectral
        assert abs(spectral[3]) == pytest.approx(1.0)
        assert np.sum(np.abs(spectral) > 1e-12) == 1

    def test_round_trip(self, rng):
        grid = Grid(2, 32, 4.0)
        values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        field = Field(grid, values=values)
        back = transform(transform(field, "to_spectral"), "to_physical")
        assert np.linalg.norm(back.values - values) / np.linalg.norm(values) < 1e-12

    def test_transform_rejects_unknown_direction(self):
        field = Field.zeros(Grid(1, 16, 1.0))
        with pytest.raises(StructuralError, match="direction"):
            transform(field, "sideways")

    def test_operations_require_same_grid(self):
        a = Field.zeros(Grid(1, 16, 1.0))
        b = Field.zeros(Grid(1, 16, 2.0))
        with pytest.raises(StructuralError, match="different grids"):
            a + b

    def test_scalar_multiplication_and_inner_product(self):
        grid = Grid(1, 64, math.pi)
        u = plane_wave(grid, 1.0)
        v = 2j * u
        assert u.inner(v) == pytest.approx(2j * 2 * math.pi)
        assert (v - u).inner(v - u).real == pytest.approx(5 * 2 * math.pi)

    def test_values_cannot_be_mutated(self):
        field = Field.zeros(Grid(1, 16, 1.0))
        with pytest.raises(ValueError):
            field.values[0] = 1.0


class TestMultipliers:
    """Fourier multipliers on periodic grids."""

    def test_frac_laplacian_kills_constants(self):
        grid = Grid(1, 32, 2.0)
        out = apply_multiplier(Field(grid, values=np.full(grid.shape, 4.0)), frac_laplacian(0.7))
        assert np.max(np.abs(out.values)) < 1e-14

    def test_frac_laplacian_on_plane_wave(self):
        grid = Grid(1, 64, math.pi)
        u = plane_wave(grid, 2.0)
        out = apply_multiplier(u, frac_laplacian(0.7))
        assert np.allclose(out.values, 2.0 ** 1.4 * u.values, atol=1e-12)

    def test_resolvent_on_plane_wave(self):
        # |xi| = 2 requires pi k / L = 2; k = 4, L = 2 pi
        grid = Grid(1, 64, 2 * math.pi)
        u = plane_wave(grid, 2.0)
        out = apply_multiplier(u, resolvent(1.0))
        assert np.allclose(out.values, u.values / 5.0, atol=1e-14)

    def test_gradient_of_sine(self):
        grid = Grid(1, 64, math.pi)
        x = grid.coordinates[0]
        (dx,) = gradient(Field(grid, values=np.sin(3 * x)))
        assert np.allclose(dx.values, 3 * np.cos(3 * x), atol=1e-12)

    def test_gradient_of_real_field_stays_real(self, rng):
        grid = Grid(2, 16, 1.0)
        field = Field(grid, values=rng.standard_normal(grid.shape))
        for component in gradient(field):
            assert component.is_real(tol=1e-12)

    @pytest.mark.parametrize("symbol", [frac_laplacian(0.7), frac_laplacian(0.35), resolvent(0.5)],
                             ids=["frac_laplacian", "half_order", "resolvent"])
    def test_linear_and_self_adjoint(self, rng, symbol):
        grid = Grid(2, 32, 3.0)
        u, v = (Field(grid, values=rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
                for _ in range(2))
        a, b = 0.3 - 1.7j, 2.5
        combined = apply_multiplier(a * u + b * v, symbol)
        expected = a * apply_multiplier(u, symbol) + b * apply_multiplier(v, symbol)
        assert np.allclose(combined.values, expected.values, rtol=1e-12, atol=1e-12)
        left = apply_multiplier(u, symbol).inner(v)
        right = u.inner(apply_multiplier(v, symbol))
        assert abs(left - right) <= 1e-12 * abs(left)

    def test_gradient_is_skew_adjoint(self, rng):
        grid = Grid(2, 32, 3.0)
        u, v = (Field(grid, values=rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
                for _ in range(2))
        for axis in range(2):
            d = gradient_component(axis)
            left = apply_multiplier(u, d).inner(v)
            assert abs(left + u.inner(apply_multiplier(v, d))) <= 1e-12 * abs(left)

    def test_gradient_axis_is_zero_based(self):
        grid = Grid(2, 16, math.pi)
        y = grid.coordinates[1]
        dy = apply_multiplier(Field(grid, values=np.sin(2 * y)), gradient_component(1))
        assert np.allclose(dy.values, 2 * np.cos(2 * y), atol=1e-12)
        with pytest.raises(StructuralError, match="out of range"):
            apply_multiplier(Field.zeros(grid), gradient_component(2))

    @pytest.mark.parametrize("factory, arg, message", [
        (frac_laplacian, -0.5, "power"),
        (resolvent, 0.0, "shift"),
        (resolvent, -1.0, "shift"),
    ])
    def test_invalid_parameters(self, factory, arg, message):
        with pytest.raises(DomainError, match=message):
            factory(arg)


class TestNorms:
    """Lebesgue and Sobolev norms by quadrature and Plancherel."""

    def test_gaussian_l2_norm(self, gaussian_1d):
        assert abs(lp_norm(gaussian_1d, 2.0) - (math.pi / 2) ** 0.25) <= 1e-10

    def test_plancherel(self, gaussian_1d):
        assert spectral_mass(gaussian_1d) == pytest.approx(mass(gaussian_1d), rel=1e-13)
        assert hdot_norm(gaussian_1d, 0.0) == pytest.approx(lp_norm(gaussian_1d, 2.0), rel=1e-13)

    def test_gaussian_l4_norm(self, gaussian_1d):
        # int exp(-4x^2) = sqrt(pi)/2
        assert lp_norm(gaussian_1d, 4.0) ** 4 == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-10)

    def test_sup_norm(self, gaussian_1d):
        assert lp_norm(gaussian_1d, math.inf) == pytest.approx(1.0)

    def test_gaussian_h1_seminorm(self, gaussian_1d):
        # int |2x exp(-x^2)|^2 = sqrt(pi/2)
        assert hdot_norm(gaussian_1d, 1.0) ** 2 == pytest.approx(math.sqrt(math.pi / 2), rel=1e-10)

    def test_plane_wave_sobolev_norms(self):
        grid = Grid(1, 64, math.pi)
        u = plane_wave(grid, 2.0)
        l2 = math.sqrt(2 * math.pi)
        assert hdot_norm(u, 0.35) == pytest.approx(2.0 ** 0.35 * l2)
        assert h_norm(u, 0.5) == pytest.approx(math.sqrt(5.0) ** 0.5 * l2)

    def test_zero_field(self):
        zero = Field.zeros(Grid(2, 16, 1.0))
        for kind, order in [("Lp", 2.0), ("Lp", 5.0), ("Hdot", 0.6), ("H", 1.0)]:
            assert norm(zero, kind, order) == 0.0

    def test_norm_dispatch(self, gaussian_1d):
        assert norm(gaussian_1d, "Lp", 3.0) == lp_norm(gaussian_1d, 3.0)
        assert norm(gaussian_1d, "Hdot", 0.6) == hdot_norm(gaussian_1d, 0.6)
        with pytest.raises(StructuralError, match="norm kind"):
            norm(gaussian_1d, "Besov", 1.0)

    def test_invalid_orders(self, gaussian_1d):
        with pytest.raises(DomainError, match="p >= 1"):
            lp_norm(gaussian_1d, 0.5)
        with pytest.raises(DomainError, match="Sobolev index"):
            hdot_norm(gaussian_1d, -0.1)

    def test_periodization_leak(self, gaussian_1d):
        assert periodization_leak(gaussian_1d) < 1e-30
        grid = gaussian_1d.grid
        wide = Field(grid, values=np.exp(-(grid.coordinates[0] / 12.0) ** 2))
        assert periodization_leak(wide) > 0.05


class TestRescale:
    """u -> lam^(2s/alpha) u(lam x) on dyadic factors."""

    params = PhysicsParams(1, 0.6, 3.0)

    def gaussian(self):
        grid = Grid(1, 1024, 20.0)
        return Field(grid, values=np.exp(-grid.coordinates[0] ** 2))

    def test_identity(self):
        u = self.gaussian()
        assert np.array_equal(rescale(u, 1.0, self.params).values, u.values)

    @pytest.mark.parametrize("lam", [2.0, 0.5])
    def test_scaling_law(self, lam):
        u = self.gaussian()
        scaled = rescale(u, lam, self.params)
        p = self.params
        for nu in (0.0, 0.5, p.s):
            expected = lam ** (nu + 2 * p.s / p.alpha - p.dim / 2) * hdot_norm(u, nu)
            assert hdot_norm(scaled, nu) == pytest.approx(expected, rel=1e-8)
        assert "support_overflow" not in scaled.accuracy_flags

    def test_critical_norm_invariant(self):
        u = self.gaussian()
        scaled = rescale(u, 2.0, self.params)
        s_c = self.params.s_c
        assert s_c == pytest.approx(0.1)
        assert hdot_norm(scaled, s_c) == pytest.approx(hdot_norm(u, s_c), rel=1e-8)

    @pytest.mark.parametrize("lam", [3.0, 1.5, -2.0, 0.0])
    def test_non_dyadic_factor(self, lam):
        with pytest.raises(UnsupportedOperationError):
            rescale(self.gaussian(), lam, self.params)

    def test_support_overflow_flag(self):
        grid = Grid(1, 256, 20.0)
        wide = Field(grid, values=np.exp(-(grid.coordinates[0] / 15.0) ** 2))
        assert "support_overflow" in rescale(wide, 0.5, self.params).accuracy_flags
