"""Tests for freespec.freeprob."""

from __future__ import annotations

import numpy as np
import pytest

from freespec.errors import (
    ConditioningError,
    DomainError,
    InvalidArgumentError,
    NonConvergenceError,
)
from freespec.freeprob import (
    PointMassTransform,
    WishartCauchyTransform,
    asd_p2,
    cauchy_mp,
    corner_cauchy,
    default_grid,
    empirical_grid,
    free_sum_density,
    h_transform,
    lambda_eps,
    linearize_p2,
    operator_cauchy_wishart,
    stieltjes_invert,
    subordinate,
    subordination_sum,
)
from freespec.models import FixedPointConfig, MpParams, OperatorPoint, PolynomialKind
from freespec.randmat import (
    histogram,
    l1_distance,
    mp_density,
    mp_quadrature,
    preprocess,
    sample_covariance,
    sample_gaussian_matrix,
)


def _quadrature_cauchy(params: MpParams, z: complex) -> complex:
    t, w = mp_quadrature(params, 4096)
    return complex(np.sum(w / (z - t)))


def _difference_eigenvalues(n: int, seed: int) -> np.ndarray:
    s0, s1 = np.random.SeedSequence(seed).spawn(2)
    sigma0 = sample_covariance(preprocess(sample_gaussian_matrix(n, n, s0), seed=1))
    sigma1 = sample_covariance(preprocess(sample_gaussian_matrix(n, n, s1), seed=2))
    return np.linalg.eigvalsh(sigma1.matrix - sigma0.matrix)


class TestCauchyMp:
    @pytest.mark.parametrize("z", [1.0 + 1.0j, -0.5 + 0.2j, 3.0 + 0.05j])
    def test_matches_quadrature(self, z):
        params = MpParams(0.4, 1.3)
        assert cauchy_mp(params, z) == pytest.approx(_quadrature_cauchy(params, z), abs=1e-8)

    def test_large_z_behaves_like_one_over_z(self):
        z = 1e6j
        assert abs(z * cauchy_mp(MpParams(), z) - 1.0) < 1e-5

    def test_value_in_lower_half_plane(self):
        assert cauchy_mp(MpParams(), 2.0 + 0.1j).imag < 0

    def test_domain_error(self):
        with pytest.raises(DomainError):
            cauchy_mp(MpParams(), 1.0)

    def test_domain_error_is_value_error(self):
        with pytest.raises(ValueError):
            cauchy_mp(MpParams(), 1.0 - 0.1j)


class TestWishartCauchyTransform:
    def test_scalar_matches_closed_form(self):
        params = MpParams(0.5, 1.0)
        g = WishartCauchyTransform([[1.0]], params)
        z = 1.5 + 0.3j
        value = g(np.array([[[z]]]))[0, 0, 0]
        assert value == pytest.approx(cauchy_mp(params, z), abs=1e-12)

    def test_negated_law(self):
        # G_{-X}(z) = -G_X(-z)
        params = MpParams()
        z = 0.5 + 0.3j
        value = WishartCauchyTransform([[-1.0]], params)(np.array([[[z]]]))[0, 0, 0]
        expected = -complex(np.conj(cauchy_mp(params, -np.conj(z))))
        assert value == pytest.approx(expected, abs=1e-10)

    def test_pencil_agrees_with_quadrature(self):
        lin = linearize_p2()
        points = lambda_eps(np.array([1.0 + 0.5j, 6.0 + 0.2j]), 0.1) - lin.c
        params = MpParams(0.5, 1.0)
        pencil = WishartCauchyTransform(lin.b0, params)(points)
        quad = WishartCauchyTransform(lin.b0, params, method="quadrature")(points)
        np.testing.assert_allclose(pencil, quad, atol=1e-6)

    def test_rejects_asymmetric_coefficient(self):
        with pytest.raises(InvalidArgumentError):
            WishartCauchyTransform([[0.0, 1.0], [0.0, 0.0]], MpParams())

    def test_rejects_unknown_method(self):
        with pytest.raises(InvalidArgumentError, match="method"):
            WishartCauchyTransform([[1.0]], MpParams(), method="series")  # type: ignore[arg-type]


class TestOperatorCauchyWishart:
    def test_scalar_matches_closed_form(self):
        params = MpParams(0.25, 1.0)
        z = 1.0 + 0.5j
        value = operator_cauchy_wishart([[1.0]], params, OperatorPoint.scalar(z))
        assert value.entries[0, 0] == pytest.approx(cauchy_mp(params, z), abs=1e-8)

    def test_domain_error_below_axis(self):
        with pytest.raises(DomainError):
            operator_cauchy_wishart([[1.0]], MpParams(), OperatorPoint.scalar(1.0 - 0.5j))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError, match="dimensions"):
            operator_cauchy_wishart(np.eye(2), MpParams(), OperatorPoint.scalar(1.0j))


class TestHTransform:
    def test_scalar(self):
        z = OperatorPoint.scalar(2.0 + 1.0j)
        g = OperatorPoint.scalar(0.5)
        assert h_transform(g, z).entries[0, 0] == pytest.approx(2.0 - (2.0 + 1.0j))

    def test_singular_value_raises(self):
        with pytest.raises(ConditioningError):
            h_transform(OperatorPoint(np.diag([1.0, 0.0])), OperatorPoint(np.eye(2) * 1j))


class TestSubordination:
    def test_sum_of_two_mp_laws_is_mp(self):
        # MP(1, 1) ⊞ MP(1, 1) is the MP law with c = 1/2 and σ² = 2.
        g = WishartCauchyTransform([[1.0]], MpParams())
        for z in (1.0 + 0.5j, 4.0 + 0.1j, -0.3 + 0.2j):
            value = subordination_sum(g, g, OperatorPoint.scalar(z))
            assert value.entries[0, 0] == pytest.approx(
                cauchy_mp(MpParams(0.5, 2.0), z), abs=1e-6
            )

    def test_point_masses_add(self):
        gx = PointMassTransform([[1.0]])
        gy = PointMassTransform([[2.5]])
        z = 1.0 + 0.2j
        value = subordination_sum(gx, gy, OperatorPoint.scalar(z))
        assert value.entries[0, 0] == pytest.approx(1.0 / (z - 3.5))

    def test_batched_result_fields(self):
        g = WishartCauchyTransform([[1.0]], MpParams())
        points = (np.linspace(-1.0, 5.0, 7) + 0.1j)[:, None, None]
        result = subordinate(g, g, points)
        assert result.valid.all()
        assert result.value.shape == (7, 1, 1)
        assert result.residual < 1e-9
        assert np.all(result.value[:, 0, 0].imag < 0)

    def test_non_convergence_reports_residual(self):
        g = WishartCauchyTransform([[1.0]], MpParams())
        config = FixedPointConfig(tolerance=1e-15, max_iterations=2)
        with pytest.raises(NonConvergenceError) as info:
            subordinate(g, g, np.array([[[2.0 + 0.001j]]]), config)
        assert info.value.exit_code == 2
        assert "residual" in str(info.value)

    def test_lower_point_rejected(self):
        g = WishartCauchyTransform([[1.0]], MpParams())
        with pytest.raises(DomainError):
            subordination_sum(g, g, OperatorPoint.scalar(1.0 - 0.1j))

    @pytest.fixture
    def operator_fixed_point(self):
        lin = linearize_p2()
        params = MpParams()
        gx = WishartCauchyTransform(lin.b0, params)
        gy = WishartCauchyTransform(lin.b1, params)
        shifts = np.array([-1.0, 0.5, 2.0, 6.0])
        points = np.stack([np.diag([s, 0.0, 0.0]) - lin.c for s in shifts]) + 1j * np.eye(3)
        config = FixedPointConfig(tolerance=1e-11)
        return gx, gy, points, config, subordinate(gx, gy, points, config)

    def test_subordination_functions_agree(self, operator_fixed_point):
        gx, gy, _, config, result = operator_fixed_point
        assert result.valid.all()
        # Im b = 1 bounds both transforms by 1, so the gap is at most dim·tolerance.
        gap = np.abs(gx(result.omega1) - gy(result.omega2))
        assert np.max(gap) <= 10 * config.tolerance

    def test_subordination_functions_dominate_point(self, operator_fixed_point):
        _, _, points, _, result = operator_fixed_point
        for omega in (result.omega1, result.omega2):
            lift = omega - points
            imag = (lift - np.conj(np.swapaxes(lift, -1, -2))) / 2j
            assert np.all(np.linalg.eigvalsh(imag)[:, 0] > -1e-9)

    def test_scalar_subordination_functions_agree(self):
        g = WishartCauchyTransform([[1.0]], MpParams())
        h = WishartCauchyTransform([[2.0]], MpParams(0.5))
        points = (np.linspace(-2.0, 8.0, 11) + 1.0j)[:, None, None]
        config = FixedPointConfig(tolerance=1e-11)
        result = subordinate(g, h, points, config)
        assert np.max(np.abs(g(result.omega1) - h(result.omega2))) <= 10 * config.tolerance
        assert np.all(result.omega1[:, 0, 0].imag >= 1.0 - 1e-9)
        assert np.all(result.omega2[:, 0, 0].imag >= 1.0 - 1e-9)


class TestStieltjesInvert:
    def test_recovers_mp_density(self):
        params = MpParams(0.25, 1.0)
        grid = np.linspace(-0.5, 3.5, 801)
        y = 1e-3
        g = np.array([cauchy_mp(params, x + 1j * y) for x in grid])
        density = stieltjes_invert(g, grid, smoothing_offset=y)
        ((lo, hi),) = density.support_intervals
        assert lo == pytest.approx(0.25, abs=0.05)
        assert hi == pytest.approx(2.25, abs=0.05)
        assert density.total_mass() == pytest.approx(1.0, abs=0.02)
        interior = (grid > 0.5) & (grid < 2.0)
        np.testing.assert_allclose(
            density.values[interior], mp_density(params, grid[interior]), rtol=0.05
        )

    def test_invalid_points_counted(self):
        grid = np.linspace(0.0, 1.0, 5)
        g = np.array([-1j, -1j, np.nan, -1j, -1j])
        density = stieltjes_invert(g, grid, support_threshold=0.0, smoothing_offset=0.01)
        assert density.invalid_points == 1
        assert density.values[2] == 0.0

    def test_positive_imaginary_part_is_clipped(self):
        grid = np.linspace(0.0, 1.0, 11)
        g = np.full(11, 0.5j)
        density = stieltjes_invert(g, grid, support_threshold=0.0, smoothing_offset=0.01)
        assert np.all(density.values == 0.0)
        assert density.clipped_mass == pytest.approx(0.5 / np.pi)
        assert density.support_intervals == ()

    def test_explicit_threshold_splits_support(self):
        grid = np.linspace(0.0, 4.0, 5)
        g = -1j * np.pi * np.array([0.0, 1.0, 0.0, 2.0, 0.0])
        density = stieltjes_invert(g, grid, support_threshold=0.5, smoothing_offset=0.1)
        assert density.support_intervals == ((1.0, 1.0), (3.0, 3.0))

    def test_grid_must_ascend(self):
        with pytest.raises(InvalidArgumentError):
            stieltjes_invert(np.array([-1j, -1j]), np.array([1.0, 0.0]))


class TestFreeSumDensity:
    def test_two_mp_laws(self):
        g = WishartCauchyTransform([[1.0]], MpParams())
        grid = np.linspace(-0.5, 6.5, 701)
        density = free_sum_density(g, g, grid)
        expected = MpParams(0.5, 2.0)
        lo, hi = density.support_bounds
        assert lo == pytest.approx(expected.lower_edge, abs=0.1)
        assert hi == pytest.approx(expected.upper_edge, abs=0.1)
        assert density.total_mass() == pytest.approx(1.0, abs=0.02)

    def test_needs_scalar_transforms(self):
        g = WishartCauchyTransform(np.eye(2), MpParams())
        with pytest.raises(InvalidArgumentError, match="scalar"):
            free_sum_density(g, g, np.linspace(0.0, 1.0, 3))


class TestP1Density:
    def test_unit_mass_and_symmetry(self, p1_asd):
        assert p1_asd.total_mass() == pytest.approx(1.0, abs=0.02)
        np.testing.assert_allclose(p1_asd.values, p1_asd.values[::-1], atol=0.01)
        lo, hi = p1_asd.support_bounds
        assert lo == pytest.approx(-hi, abs=2 * p1_asd.spacing)

    def test_single_interval(self, p1_asd):
        assert len(p1_asd.support_intervals) == 1

    def test_against_monte_carlo(self, p1_asd):
        eigs = _difference_eigenvalues(300, seed=5)
        assert l1_distance(histogram(eigs), p1_asd.cdf) < 0.1

    @pytest.mark.slow
    def test_against_monte_carlo_large(self, p1_asd):
        eigs = _difference_eigenvalues(1000, seed=0)
        assert l1_distance(histogram(eigs), p1_asd.cdf) < 0.05


class TestP2Density:
    def test_scalar_corner_recovers_square(self):
        lin = linearize_p2()
        a, b, z = 0.7, 2.0, 1.0 + 0.5j
        value = corner_cauchy(lin, [[a]], [[b]], z, eps=1e-8)
        assert value == pytest.approx(1.0 / (z - (b - a) ** 2), abs=1e-6)

    def test_scalar_subordination_recovers_square(self):
        lin = linearize_p2()
        a, b, z = 0.7, 2.0, 1.0 + 0.5j
        points = lambda_eps(z, 1e-8) - lin.c
        result = subordinate(
            PointMassTransform(lin.b0 * a), PointMassTransform(lin.b1 * b), points
        )
        assert result.value[0, 0, 0] == pytest.approx(1.0 / (z - (b - a) ** 2), abs=1e-6)

    def test_linearization_matches_square_for_matrices(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 4))
        s0, s1 = x @ x.T / 4, np.eye(4)
        z = 2.0 + 0.7j
        square = (s1 - s0) @ (s1 - s0)
        expected = np.trace(np.linalg.inv(z * np.eye(4) - square)) / 4
        value = corner_cauchy(linearize_p2(), s0, s1, z, eps=1e-9)
        assert value == pytest.approx(expected, abs=1e-6)

    def test_nonnegative_support(self, p2_asd):
        lo, _ = p2_asd.support_bounds
        assert lo >= -0.5
        assert p2_asd.total_mass() == pytest.approx(1.0, abs=0.08)

    def test_upper_edge_is_square_of_p1_edge(self, p1_asd, p2_asd):
        _, hi1 = p1_asd.support_bounds
        _, hi2 = p2_asd.support_bounds
        assert hi2 == pytest.approx(hi1**2, rel=0.03)

    def test_little_mass_below_zero(self, unit_params):
        grid = default_grid(PolynomialKind.P2, unit_params, unit_params)
        density = asd_p2(unit_params, unit_params, grid, smoothing_offset=0.005)
        below = grid < -0.05
        assert float(np.trapezoid(density.values[below], grid[below])) < 0.01

    def test_extrapolation_changes_little(self, unit_params):
        grid = np.linspace(-0.5, 16.5, 64)
        plain = asd_p2(unit_params, unit_params, grid)
        extrapolated = asd_p2(unit_params, unit_params, grid, extrapolate=True)
        np.testing.assert_allclose(plain.values, extrapolated.values, atol=1e-3)

    def test_rejects_non_positive_corner_eps(self, unit_params):
        with pytest.raises(InvalidArgumentError, match="corner_eps"):
            asd_p2(unit_params, unit_params, np.linspace(0.0, 1.0, 3), corner_eps=0.0)

    @pytest.mark.slow
    def test_against_monte_carlo_large(self, p2_asd):
        eigs = _difference_eigenvalues(1000, seed=1) ** 2
        assert l1_distance(histogram(eigs), p2_asd.cdf) < 0.07


class TestGrids:
    def test_p1_default_grid(self):
        grid = default_grid(PolynomialKind.P1, MpParams(), MpParams(), 11)
        assert grid[0] == pytest.approx(-4.5)
        assert grid[-1] == pytest.approx(4.5)
        assert grid.size == 11

    def test_p2_default_grid(self):
        grid = default_grid(PolynomialKind.P2, MpParams(0.25, 1.0), MpParams(), 11)
        assert grid[0] == pytest.approx(-0.5)
        assert grid[-1] == pytest.approx(16.5)

    def test_empirical_grid(self):
        grid = empirical_grid(np.array([1.0, -2.0, 3.0]), 6)
        assert (grid[0], grid[-1]) == (-2.5, 3.5)

    def test_rejects_tiny_grid(self):
        with pytest.raises(InvalidArgumentError):
            default_grid(PolynomialKind.P1, MpParams(), MpParams(), 1)
