"""
Tests for the fractional gradient/divergence pair and the operator assemblies
"""
import numpy as np

from fmse_lab.src.exceptions import FieldError, GridError
from fmse_lab.src.fields import Potentials, sigma_from_A
from fmse_lab.src.grid import ScalarField, inner_product, pair_inner_product
from fmse_lab.src.kernels import alpha_kernel, c_ns
from fmse_lab.src.operators import (
    assemble_bilinear, assemble_expansion, assemble_sigma_form, conductivity_matrix,
    fourier_symbol_check, frac_divergence, frac_gradient, fractional_laplacian_pointwise,
    magnetic_gradient, reduced_potentials, reduction_identity_residual, reduction_qprime,
)
from .base import BaseLabTestCase


class KernelTest(BaseLabTestCase):

    def test_normalization_constant(self):
        # C_{1,1/2} = 1/π
        self.assertAlmostEqual(c_ns(1, 0.5), 1.0 / np.pi, places=14)
        # C_{2,1/2} = 1/(2π)
        self.assertAlmostEqual(c_ns(2, 0.5), 1.0 / (2.0 * np.pi), places=14)

    def test_alpha_is_antisymmetric_with_known_length(self):
        grid = self.make_grid_2d(nodes=6, s=0.3)
        kernel = alpha_kernel(grid)

        self.assertAllClose(kernel.alpha, -np.swapaxes(kernel.alpha, 0, 1), atol=0.0)
        off_diagonal = grid.distances > 0
        expected = kernel.c_ns / (2.0 * grid.distances[off_diagonal] ** (grid.n + 2 * grid.s))
        self.assertAllClose(kernel.squared[off_diagonal], expected, rtol=1e-12)
        self.assertIs(alpha_kernel(grid), kernel)


class GradientDivergenceTest(BaseLabTestCase):
    """∇ˢ and (∇·)ˢ are adjoint under the quadrature inner products"""

    def test_adjointness(self):
        for grid in (self.make_grid_1d(nodes=12, s=0.3), self.make_grid_2d(nodes=6, s=0.7)):
            with self.subTest(n=grid.n):
                u = self.random_field(grid)
                V = self.random_vector_field(grid)
                lhs = inner_product(frac_divergence(V), u)
                rhs = pair_inner_product(V, frac_gradient(u))
                self.assertAlmostEqual(lhs, rhs, delta=1e-12 * max(abs(lhs), abs(rhs)))

    def test_gradient_is_symmetric_and_parallel(self):
        grid = self.make_grid_2d(nodes=6)
        gradient = frac_gradient(self.random_field(grid))

        self.assertAllClose(gradient.values, np.swapaxes(gradient.values, 0, 1), atol=0.0)
        cross = gradient.values[..., 0] * grid.differences[..., 1] - gradient.values[..., 1] * grid.differences[..., 0]
        self.assertLess(np.max(np.abs(cross)), 1e-12)

    def test_gradient_of_constant_vanishes(self):
        grid = self.make_grid_1d(nodes=12)
        self.assertTrue(frac_gradient(ScalarField.constant(grid, 3.0)).is_zero())

    def test_divergence_of_gradient_is_the_fractional_laplacian(self):
        grid = self.make_grid_1d(nodes=12)
        u = self.random_field(grid)
        laplacian = fractional_laplacian_pointwise(grid) @ u.values
        self.assertAllClose(frac_divergence(frac_gradient(u)).values, laplacian, rtol=1e-11, atol=1e-12)

    def test_magnetic_gradient_adds_potential_term(self):
        grid = self.make_grid_1d(nodes=12)
        u = self.random_field(grid)
        A = self.random_potentials(grid).A
        expected = frac_gradient(u).values + A.values * u.values[:, None, None]
        self.assertAllClose(magnetic_gradient(u, A).values, expected, atol=0.0)


class AssemblyTest(BaseLabTestCase):
    """Composition, expansion and σ-form define the same matrix"""

    def assertSameOperator(self, P):
        bilinear = assemble_bilinear(P)
        expansion = assemble_expansion(P)
        sigma_form = assemble_sigma_form(sigma_from_A(P.A), P.Q)

        self.assertLess(bilinear.relative_distance(expansion), 1e-10)
        self.assertLess(bilinear.relative_distance(sigma_form), 1e-10)
        self.assertLess(bilinear.asymmetry(), 1e-12)

    def test_three_assemblies_agree_in_one_dimension(self):
        grid = self.make_grid_1d(nodes=16, s=0.4)
        self.assertSameOperator(self.random_potentials(grid))

    def test_three_assemblies_agree_in_two_dimensions(self):
        grid = self.make_grid_2d(nodes=7, s=0.6)
        self.assertSameOperator(self.random_potentials(grid))

    def test_zero_potentials_give_the_fractional_laplacian(self):
        grid = self.make_grid_1d(nodes=12)
        K = assemble_bilinear(Potentials.zero(grid))
        self.assertAllClose(K.pointwise(), fractional_laplacian_pointwise(grid), rtol=1e-12, atol=1e-12)
        self.assertLess(np.max(np.abs(K.apply(ScalarField.constant(grid, 1.0)))), 1e-12)

    def test_bilinear_form_is_the_magnetic_gradient_pairing(self):
        grid = self.make_grid_1d(nodes=12)
        P = self.random_potentials(grid)
        v, w = self.random_field(grid), self.random_field(grid)

        expected = (
            pair_inner_product(magnetic_gradient(v, P.A), magnetic_gradient(w, P.A))
            + inner_product(ScalarField(grid, P.q.values * v.values), w)
        )
        self.assertAlmostEqual(assemble_bilinear(P).pair(v, w), expected, delta=1e-11 * abs(expected))

    def test_pointwise_is_weak_over_weight(self):
        grid = self.make_grid_1d(nodes=12)
        K = assemble_expansion(self.random_potentials(grid))
        u = self.random_field(grid)
        self.assertAllClose(K.apply_pointwise(u).values, K.apply(u) / grid.weight, rtol=1e-14)

    def test_fields_on_other_grids_rejected(self):
        grid = self.make_grid_1d(nodes=12)
        with self.assertRaises(GridError):
            assemble_sigma_form(sigma_from_A(Potentials.zero(grid).A), ScalarField.zeros(self.make_grid_1d(nodes=9)))


class ConductivityReductionTest(BaseLabTestCase):
    """Conductivity equation ↔ magnetic Schrödinger equation with q′"""

    def setUp(self):
        super().setUp()
        self.grid = self.make_grid_1d(nodes=14)
        self.P = self.random_potentials(self.grid)
        self.gamma = self.random_gamma(self.grid)

    def test_reduction_identity(self):
        for _ in range(3):
            residual = reduction_identity_residual(self.gamma, self.P, self.random_field(self.grid))
            self.assertLess(residual, 1e-10)

    def test_reduction_identity_in_two_dimensions(self):
        grid = self.make_grid_2d(nodes=6)
        P = self.random_potentials(grid)
        residual = reduction_identity_residual(self.random_gamma(grid), P, self.random_field(grid))
        self.assertLess(residual, 1e-10)

    def test_unit_conductivity_keeps_q(self):
        unit = ScalarField.constant(self.grid, 1.0)
        self.assertAllClose(reduction_qprime(unit, self.P).values, self.P.q.values, atol=1e-12)
        self.assertLess(conductivity_matrix(unit, self.P).relative_distance(assemble_bilinear(self.P)), 1e-14)

    def test_reduced_q_may_leave_omega(self):
        reduced = reduced_potentials(self.gamma, self.P)
        self.assertFalse(reduced.enforce_support)
        self.assertGreater(np.max(np.abs(reduced.q.exterior_values)), 0.0)

    def test_conductivity_must_be_positive(self):
        values = self.gamma.values.copy()
        values[self.grid.omega_indices[0]] = -1.0
        with self.assertRaises(FieldError):
            conductivity_matrix(ScalarField(self.grid, values), self.P)


class FourierSymbolTest(BaseLabTestCase):
    """Fit of the pairwise-gradient transform against its symbol model"""

    def test_enlarging_the_box_reduces_the_residual(self):
        base = fourier_symbol_check(0.5, 128, (-8.0, 8.0))
        wide = fourier_symbol_check(0.5, 256, (-16.0, 16.0))

        self.assertLess(wide.residual, base.residual)
        self.assertTrue(np.isfinite(base.k_fit))
        self.assertEqual(base.diagonal, 'limit')
        self.assertLess(base.real_fraction, 1e-8)

    def test_zero_diagonal_away_from_one_half(self):
        report = fourier_symbol_check(0.3, 64, (-8.0, 8.0))
        self.assertEqual(report.diagonal, 'zero')
        self.assertEqual(report.as_dict()['N'], 64)

    def test_rejects_invalid_parameters(self):
        with self.assertRaises(GridError):
            fourier_symbol_check(0.5, 100)
        with self.assertRaises(GridError):
            fourier_symbol_check(0.5, 64, n=2)
        with self.assertRaises(GridError):
            fourier_symbol_check(1.5, 64)
