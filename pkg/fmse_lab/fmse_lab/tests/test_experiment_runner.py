"""
Tests for ExperimentRunner: every subcommand end to end on small instances
"""
import json
import tempfile
from pathlib import Path

from fmse_lab.core.test_containers import test_container
from fmse_lab.src.exceptions import ConfigurationError, GaugeConstructionError
from fmse_lab.src.schemas import parse_experiment_config
from fmse_lab.src.serializers import write_scalar_csv, write_vector_field_csv
from .base import BaseLabTestCase


class RunnerTestCase(BaseLabTestCase):

    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.out = Path(self._tmp.name)
        self.runner = test_container.experiment_runner()

    def run_experiment(self, subcommand, payload, seed=None, out=None, **kwargs):
        experiment = parse_experiment_config(payload)
        return self.runner.run(subcommand, experiment, seed=seed, output_dir=str(out or self.out), **kwargs)

    def assertPassed(self, result):
        self.assertTrue(result.passed, {name: result.report['metrics'][name] for name in result.failed_metrics})
        self.assertEqual(result.report['status'], 'passed')


class OperatorSubcommandsTest(RunnerTestCase):

    small_1d = {'potentials': {'preset': 'random-1d', 'params': {'nodes_per_axis': 12}}}

    def test_check_ops(self):
        result = self.run_experiment('check-ops', self.small_1d)
        self.assertPassed(result)
        for name in ('adjointness', 'decomposition', 'pythagoras', 'bilinear_vs_expansion',
                     'bilinear_vs_sigma_form', 'matrix_asymmetry'):
            self.assertTrue(result.report['metrics'][name]['passed'], name)
        self.assertIn('operator.bin', result.report['artifacts'])
        self.assertTrue((self.out / 'report.json').exists())

    def test_report_is_reproducible(self):
        first = self.run_experiment('check-ops', self.small_1d, seed=5, out=self.out / 'a')
        second = self.run_experiment('check-ops', self.small_1d, seed=5, out=self.out / 'b')
        self.assertEqual((self.out / 'a' / 'report.json').read_text(), (self.out / 'b' / 'report.json').read_text())
        self.assertEqual(first.report['config_hash'], second.report['config_hash'])

    def test_seed_precedence(self):
        payload = dict(self.small_1d, seed=99)
        self.assertEqual(self.run_experiment('check-ops', payload, seed=3).report['seed'], 3)
        self.assertEqual(self.run_experiment('check-ops', payload).report['seed'], 99)
        self.assertEqual(self.run_experiment('check-ops', self.small_1d).report['seed'], 12345)

    def test_failed_identity_is_reported(self):
        payload = dict(self.small_1d, tolerances={'identity': 1e-300})
        result = self.run_experiment('check-ops', payload)
        self.assertFalse(result.passed)
        self.assertIn('bilinear_vs_sigma_form', result.failed_metrics)
        self.assertEqual(json.loads((self.out / 'report.json').read_text())['status'], 'failed')

    def test_solve_from_files(self):
        grid = self.make_grid_1d(nodes=12)
        P = self.random_potentials(grid)
        a_path = write_vector_field_csv(self.out / 'A.csv', P.A)
        q_path = write_scalar_csv(self.out / 'q.csv', P.q)
        payload = {
            'grid': {'n': 1, 's': 0.5, 'box': [[-2, 2]], 'nodes_per_axis': 12, 'omega': {'box': [[-1, 1]]}},
            'potentials': {'a_path': str(a_path), 'q_path': str(q_path)},
        }
        result = self.run_experiment('solve', payload)

        self.assertPassed(result)
        self.assertEqual(result.report['potentials']['hash'], P.digest)
        self.assertIn('u.csv', result.report['artifacts'])

    def test_preset_and_grid_are_exclusive(self):
        payload = dict(self.small_1d, grid={
            'n': 1, 's': 0.5, 'box': [[-2, 2]], 'nodes_per_axis': 12, 'omega': {'box': [[-1, 1]]},
        })
        with self.assertRaises(ConfigurationError):
            self.run_experiment('solve', payload)

    def test_file_potentials_need_a_grid(self):
        with self.assertRaises(ConfigurationError):
            self.run_experiment('solve', {'potentials': {'q_path': 'q.csv'}})

    def test_dn(self):
        result = self.run_experiment('dn', self.small_1d, threads=2)
        self.assertPassed(result)
        self.assertEqual(self.runner.solver.threads, 2)
        runge = result.report['metrics']['runge']['value']
        self.assertEqual(runge['omega_nodes'] + runge['exterior_nodes'], 12)
        self.assertGreater(runge['rank'], 0)
        for name in ('dn.csv', 'dn_legend.csv', 'dn.bin'):
            self.assertIn(name, result.report['artifacts'])

    def test_reduce(self):
        result = self.run_experiment('reduce', {
            'potentials': {'preset': 'conductivity-1d', 'params': {'nodes_per_axis': 12}},
            'reduce': {'samples': 2},
        })
        self.assertPassed(result)

    def test_unknown_subcommand(self):
        with self.assertRaises(ConfigurationError):
            self.run_experiment('plot', self.small_1d)


class GaugeSubcommandTest(RunnerTestCase):

    def test_gauge_on_two_dimensional_instance(self):
        result = self.run_experiment('gauge', {
            'potentials': {'preset': 'perpendicular-2d', 'params': {'nodes_per_axis': 6}},
        })
        self.assertPassed(result)
        self.assertIn('partner_A.bin', result.report['artifacts'])
        self.assertTrue(result.report['metrics']['approx_gauge_fails']['value'])

    def test_gauge_needs_a_partner(self):
        with self.assertRaises(GaugeConstructionError):
            self.run_experiment('gauge', {'potentials': {'preset': 'random-1d', 'params': {'nodes_per_axis': 12}}})


class InvertSubcommandTest(RunnerTestCase):

    def test_perturbation_recovery(self):
        result = self.run_experiment('invert', {'potentials': {'preset': 'recovery-1d'}})
        self.assertPassed(result)
        recovery = result.report['recovery']
        self.assertEqual(recovery['unknown_count'], 10)
        self.assertIn('recovered_Q.csv', result.report['artifacts'])

    def test_partner_measurement_recovers_nothing(self):
        result = self.run_experiment('invert', {
            'potentials': {'preset': 'random-2d', 'params': {'nodes_per_axis': 6}},
            'invert': {'measured': 'partner'},
            'tolerances': {'recovery': 1e-6},
        })
        self.assertPassed(result)

    def test_partner_measurement_needs_two_dimensions(self):
        with self.assertRaises(ConfigurationError):
            self.run_experiment('invert', {
                'potentials': {'preset': 'random-1d', 'params': {'nodes_per_axis': 12}},
                'invert': {'measured': 'partner'},
            })


class WalkAndFourierSubcommandTest(RunnerTestCase):

    def test_walk(self):
        result = self.run_experiment('walk', {
            'potentials': {'preset': 'walk-1d'},
            'walk': {'steps': 3, 'count': 20000},
        })
        self.assertPassed(result)
        series = (self.out / 'walk_series.csv').read_text().splitlines()
        self.assertEqual(series[0], 'node_index,coord_1,t0,t1,t2,t3')
        self.assertEqual(len(series), 1 + 33)

    def test_fourier(self):
        result = self.run_experiment('fourier', {})
        self.assertPassed(result)
        self.assertFalse(result.report['metrics']['fourier_residual']['checked'])
        residual = result.report['metrics']['fourier_residual']['value']
        self.assertTrue(0.1 < residual < 0.3, residual)
        self.assertIn('about 0.2 on [-8, 8]', result.report['legend']['fourier_residual'])
        self.assertLess(result.report['wide_box_fit']['residual'], residual)
        self.assertEqual(result.report['grid_hash'], '')
