"""
Tests for the Alessandrini identity, the Runge rank and the recovery pipeline
"""
import numpy as np

from fmse_lab.src.exceptions import GridError
from fmse_lab.src.fields import Potentials
from fmse_lab.src.gauge import gauge_partner
from fmse_lab.src.inverse import (
    InverseCrimeOracle, RecoveryEngine, alessandrini_residual, alessandrini_terms, omega_pairs, recover,
    recovery_equations, runge_rank, solve_equilibrated, true_unknowns,
)
from fmse_lab.src.presets import build_preset
from fmse_lab.src.solver import DirichletSolver
from .base import BaseLabTestCase


class AlessandriniTest(BaseLabTestCase):

    def test_identity_holds_for_random_pairs(self):
        grid = self.make_grid_1d(nodes=14)
        solver = DirichletSolver()
        for _ in range(3):
            P1, P2 = self.random_potentials(grid), self.random_potentials(grid)
            f1, f2 = self.random_exterior_data(grid), self.random_exterior_data(grid)
            terms = alessandrini_terms(P1, P2, f1, f2, solver)
            self.assertLess(terms.residual, 1e-10)
            self.assertGreater(abs(terms.lhs), 0.0)

    def test_identity_holds_in_two_dimensions(self):
        grid = self.make_grid_2d(nodes=6)
        P1, P2 = self.random_potentials(grid), self.random_potentials(grid)
        terms = alessandrini_terms(P1, P2, self.random_exterior_data(grid), self.random_exterior_data(grid))
        self.assertLess(terms.residual, 1e-10)

    def test_identical_potentials_give_zero_on_both_sides(self):
        grid = self.make_grid_1d(nodes=12)
        P = self.random_potentials(grid)
        terms = alessandrini_terms(P, P, self.random_exterior_data(grid), self.random_exterior_data(grid))
        self.assertEqual(terms.lhs, 0.0)
        self.assertEqual(terms.rhs, 0.0)

    def test_residual_shortcut_matches_terms(self):
        grid = self.make_grid_1d(nodes=12)
        P1, P2 = self.random_potentials(grid), self.random_potentials(grid)
        f1, f2 = self.random_exterior_data(grid), self.random_exterior_data(grid)
        solver = DirichletSolver()
        self.assertEqual(
            alessandrini_residual(P1, P2, f1, f2, solver), alessandrini_terms(P1, P2, f1, f2, solver).residual,
        )


class RungeRankTest(BaseLabTestCase):

    def test_full_rank_with_enough_exterior_nodes(self):
        grid = build_preset('recovery-1d', seed=1).grid
        report = runge_rank(self.random_potentials(grid))

        self.assertEqual(report.omega_nodes, 4)
        self.assertEqual(report.exterior_nodes, 14)
        self.assertTrue(report.full_rank)
        self.assertEqual(report.explanation, '')

    def test_rank_bounded_by_exterior_node_count(self):
        grid = self.make_grid_1d(nodes=9, box=(-1.0, 1.0), omega=(-0.8, 0.8))
        report = runge_rank(Potentials.zero(grid))

        self.assertEqual(report.exterior_nodes, 2)
        self.assertEqual(report.omega_nodes, 7)
        self.assertLessEqual(report.rank, 2)
        self.assertFalse(report.full_rank)
        self.assertIn('exterior nodes', report.explanation)
        self.assertEqual(len(report.as_dict()['singular_values']), 2)


class RecoveryTest(BaseLabTestCase):
    """Inverse-crime recovery of (σ, Q) on the recovery-1d instance"""

    def setUp(self):
        super().setUp()
        self.instance = build_preset('recovery-1d', seed=7)
        self.grid = self.instance.grid
        self.reference = self.instance.extras['reference']
        self.truth = self.instance.extras['truth']
        self.solver = DirichletSolver()
        self.measured = self.solver.assemble_dn(self.truth)

    def test_system_dimensions(self):
        oracle = InverseCrimeOracle(self.truth, self.solver)
        system = recovery_equations(self.measured, self.reference, oracle, solver=self.solver)

        self.assertEqual(len(omega_pairs(4)), 6)
        self.assertEqual(system.matrix.shape, (14 * 14, 6 + 4))
        self.assertEqual(len(system.labels), 10)
        self.assertTrue(system.labels[0].startswith('sigma['))
        self.assertTrue(system.labels[-1].startswith('Q['))

    def test_rank_grows_with_the_measured_pairs(self):
        oracle = InverseCrimeOracle(self.truth, self.solver)
        full = recovery_equations(self.measured, self.reference, oracle, solver=self.solver)
        # one absolute cutoff for every subsystem: row subsets cannot raise singular values
        cutoff = 1e-10 * np.linalg.norm(full.matrix, 2)

        ranks = []
        for size in (1, 2, 4, 8, 14):
            positions = list(range(size))
            system = recovery_equations(self.measured, self.reference, oracle,
                                        sources=positions, sinks=positions, solver=self.solver)
            self.assertEqual(system.matrix.shape, (size * size, 10))
            ranks.append(int(np.linalg.matrix_rank(system.matrix, tol=cutoff)))

        self.assertEqual(ranks, sorted(ranks))
        self.assertEqual(ranks[-1], int(np.linalg.matrix_rank(full.matrix, tol=cutoff)))
        self.assertGreater(ranks[-1], ranks[0])

    def test_true_differences_satisfy_the_equations(self):
        oracle = InverseCrimeOracle(self.truth, self.solver)
        system = recovery_equations(self.measured, self.reference, oracle, solver=self.solver)
        target = true_unknowns(self.truth, self.reference)

        defect = np.linalg.norm(system.matrix @ target - system.rhs) / np.linalg.norm(system.rhs)
        self.assertLess(defect, 1e-8)

    def test_recovery_fits_the_data(self):
        result = RecoveryEngine(self.solver).recover(self.measured, self.reference, self.truth)

        self.assertLess(result.data_fit_residual, 1e-8)
        self.assertLess(result.parameter_errors['equations_at_truth'], 1e-8)
        self.assertEqual(result.unknown_count, 10)
        self.assertEqual(result.equation_count, 196)
        if not result.ill_conditioned:
            self.assertLess(result.parameter_errors['all'], 1e-3)

    def test_recovered_q_matches_reference_outside_omega(self):
        result = RecoveryEngine(self.solver).recover(self.measured, self.reference, self.truth)
        exterior = self.grid.exterior_indices
        self.assertTrue(np.array_equal(result.Q.values[exterior], self.reference.Q.values[exterior]))
        self.assertAllClose(result.sigma, result.sigma.T, atol=0.0)

    def test_subsets_of_sources_and_sinks(self):
        result = RecoveryEngine(self.solver).recover(
            self.measured, self.reference, self.truth, sources=[0, 1, 2, 3], sinks=range(14),
        )
        self.assertEqual(result.equation_count, 56)
        self.assertLess(result.data_fit_residual, 1e-8)

    def test_invalid_subsets_rejected(self):
        engine = RecoveryEngine(self.solver)
        with self.assertRaises(GridError):
            engine.recover(self.measured, self.reference, self.truth, sources=[])
        with self.assertRaises(GridError):
            engine.recover(self.measured, self.reference, self.truth, sinks=[14])

    def test_negative_regularization_rejected(self):
        oracle = InverseCrimeOracle(self.truth, self.solver)
        with self.assertRaises(ValueError):
            recover(self.measured, self.reference, oracle, reg=-1.0)

    def test_regularization_trades_fit_for_stability(self):
        oracle = InverseCrimeOracle(self.truth, self.solver)
        plain = recover(self.measured, self.reference, oracle, solver=self.solver)
        damped = recover(self.measured, self.reference, oracle, reg=1e-2, solver=self.solver)

        self.assertGreaterEqual(damped.data_fit_residual, plain.data_fit_residual)
        self.assertEqual(damped.reg, 1e-2)


class PartnerRecoveryTest(BaseLabTestCase):

    def test_gauge_partner_is_invisible_to_recovery(self):
        grid = self.make_grid_2d(nodes=6)
        reference = self.random_potentials(grid)
        partner = gauge_partner(reference)
        solver = DirichletSolver()

        result = RecoveryEngine(solver).recover(solver.assemble_dn(partner), reference, partner)
        self.assertLess(float(np.max(np.abs(result.unknowns))), 1e-6)


class EquilibratedSolveTest(BaseLabTestCase):

    def test_recovers_exact_solution_of_badly_scaled_system(self):
        matrix = self.rng.standard_normal((12, 4)) * np.array([1e-6, 1.0, 1e4, 1.0])
        x = self.rng.standard_normal(4)
        solution, condition, rank = solve_equilibrated(matrix, matrix @ x)

        self.assertAllClose(solution, x, rtol=1e-8)
        self.assertEqual(rank, 4)
        self.assertLess(condition, 1e3)

    def test_rank_cutoff_drops_dependent_columns(self):
        column = self.rng.standard_normal(10)
        matrix = np.column_stack([column, 2.0 * column, self.rng.standard_normal(10)])
        _, condition, rank = solve_equilibrated(matrix, matrix @ np.ones(3))

        self.assertEqual(rank, 2)
        self.assertGreater(condition, 1e10)

    def test_tikhonov_filter_shrinks_every_component(self):
        matrix = self.rng.standard_normal((10, 5))
        matrix /= np.linalg.norm(matrix, axis=0)
        rhs = self.rng.standard_normal(10)
        plain, _, _ = solve_equilibrated(matrix, rhs)
        damped, _, _ = solve_equilibrated(matrix, rhs, reg=0.1)

        self.assertLess(np.linalg.norm(damped), np.linalg.norm(plain))
