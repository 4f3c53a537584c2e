"""
Tests for lab configuration, experiment schemas and the DI containers
"""
import json
import os
import tempfile
from pathlib import Path
from unittest.mock import patch

from fmse_lab.core import config as config_module
from fmse_lab.core.config import (
    EnvironmentConfigProvider, FileConfigProvider, LabConfig, get_config_provider, get_lab_config,
    reset_config,
)
from fmse_lab.core.containers import LabContainer
from fmse_lab.core.test_containers import TestLabContainer
from fmse_lab.core.utils import load_env_file
from fmse_lab.src.exceptions import ConfigurationError
from fmse_lab.src.experiment_runner import ExperimentRunner
from fmse_lab.src.gauge import GaugeInspector
from fmse_lab.src.inverse import RecoveryEngine
from fmse_lab.src.management.commands.fmse import Command
from fmse_lab.src.presets import PresetFactory
from fmse_lab.src.schemas import ExperimentConfig, load_experiment_config, parse_experiment_config
from fmse_lab.src.solver import DirichletSolver
from .base import BaseLabTestCase


class LabConfigTest(BaseLabTestCase):

    def setUp(self):
        super().setUp()
        reset_config()
        self.addCleanup(reset_config)
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)

    def test_defaults(self):
        config = LabConfig()
        self.assertEqual(config.tolerance, 1e-10)
        self.assertEqual(config.probability_tolerance, 1e-15)
        self.assertEqual(config.condition_limit, 1e12)
        self.assertEqual(config.chi_square_quantile, 0.999)

    @patch.dict(os.environ, {'FMSE_TOLERANCE': '1e-9', 'FMSE_THREADS': '3', 'FMSE_SEED': '7'})
    def test_environment_provider(self):
        config = EnvironmentConfigProvider().get_config()
        self.assertEqual(config.tolerance, 1e-9)
        self.assertEqual(config.threads, 3)
        self.assertEqual(config.default_seed, 7)

    def test_file_provider_overlays_environment(self):
        path = Path(self._tmp.name) / 'lab.json'
        path.write_text(json.dumps({'rank_cutoff': 1e-8, 'output_dir': 'elsewhere'}))
        provider = FileConfigProvider(str(path))

        config = provider.get_config()
        self.assertEqual(config.rank_cutoff, 1e-8)
        self.assertEqual(config.output_dir, 'elsewhere')
        self.assertEqual(config.tolerance, 1e-10)
        self.assertEqual(provider.get_setting('output_dir'), 'elsewhere')
        self.assertIs(provider.get_config(), config)

    def test_file_provider_rejects_unknown_keys(self):
        path = Path(self._tmp.name) / 'lab.json'
        path.write_text(json.dumps({'tolerence': 1e-8}))
        with self.assertRaises(ConfigurationError):
            FileConfigProvider(str(path)).get_config()

    def test_provider_selection(self):
        path = Path(self._tmp.name) / 'lab.json'
        path.write_text('{}')
        with patch.dict(os.environ, {'FMSE_CONFIG_FILE': str(path)}):
            self.assertIsInstance(get_config_provider(), FileConfigProvider)
        with patch.dict(os.environ, {'FMSE_CONFIG_FILE': str(path) + '.missing'}):
            self.assertIsInstance(get_config_provider(), EnvironmentConfigProvider)

    def test_singleton_and_reset(self):
        first = get_lab_config()
        self.assertIs(get_lab_config(), first)
        reset_config()
        self.assertIsNone(config_module._lab_config)


class ExperimentSchemaTest(BaseLabTestCase):

    def test_defaults(self):
        experiment = ExperimentConfig()
        self.assertEqual(experiment.potentials.preset, 'random-1d')
        self.assertEqual(experiment.tolerances.fourier, 0.05)
        self.assertEqual(experiment.fourier.nodes, [128, 256])
        self.assertIsNone(experiment.seed)
        self.assertEqual(experiment.walk.count, 1_000_000)

    def test_unknown_keys_rejected(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'potentials': {'preset': 'zero'}, 'tolerance': 1e-3})
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'walk': {'stpes': 3}})

    def test_preset_and_files_are_exclusive(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'potentials': {'preset': 'zero', 'q_path': 'q.csv'}})
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'potentials': {}})

    def test_fourier_nodes_are_powers_of_two(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'fourier': {'nodes': [100]}})

    def test_seed_range(self):
        with self.assertRaises(ConfigurationError):
            parse_experiment_config({'seed': -1})
        self.assertEqual(parse_experiment_config({'seed': 2 ** 64 - 1}).seed, 2 ** 64 - 1)

    def test_load_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'experiment.json'
            path.write_text(json.dumps({'potentials': {'preset': 'zero'}, 'seed': 9}))
            self.assertEqual(load_experiment_config(path).seed, 9)

            path.write_text('{not json')
            with self.assertRaises(ConfigurationError):
                load_experiment_config(path)
            with self.assertRaises(ConfigurationError):
                load_experiment_config(Path(tmp) / 'missing.json')
        self.assertEqual(load_experiment_config(None), ExperimentConfig())


class ContainerTest(BaseLabTestCase):

    def test_test_container_wires_the_runner(self):
        container = TestLabContainer()
        runner = container.experiment_runner()

        self.assertIsInstance(runner, ExperimentRunner)
        self.assertIsInstance(runner.solver, DirichletSolver)
        self.assertEqual(runner.config.default_seed, 12345)
        self.assertEqual(runner.solver.condition_limit, 1e12)

    def test_main_container_shares_one_solver(self):
        container = LabContainer()
        self.assertIs(container.dirichlet_solver(), container.dirichlet_solver())
        self.assertIs(container.recovery_engine().solver, container.dirichlet_solver())


class EnvFileTest(BaseLabTestCase):

    def test_env_file_fills_only_missing_variables(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / '.env'
            path.write_text(
                "# development overrides\n"
                "export FMSE_THREADS=4\n"
                "FMSE_OUTPUT_DIR='runs/dev'\n"
                "FMSE_SEED=7\n"
                "not a variable\n",
                encoding='utf-8',
            )
            with patch.dict(os.environ, {'FMSE_SEED': '99'}, clear=False):
                os.environ.pop('FMSE_THREADS', None)
                os.environ.pop('FMSE_OUTPUT_DIR', None)
                applied = load_env_file(str(path))

                self.assertEqual(applied, {'FMSE_THREADS': '4', 'FMSE_OUTPUT_DIR': 'runs/dev'})
                self.assertEqual(os.environ['FMSE_SEED'], '99')
                self.assertEqual(os.environ['FMSE_OUTPUT_DIR'], 'runs/dev')

    def test_missing_file_is_ignored(self):
        self.assertEqual(load_env_file('/nonexistent/.env'), {})


class ServiceDocstringTest(BaseLabTestCase):

    def test_consumer_sections_are_in_english(self):
        for service in (ExperimentRunner, DirichletSolver, GaugeInspector, RecoveryEngine, PresetFactory, Command):
            with self.subTest(service=service.__name__):
                doc = service.__doc__ or ''
                self.assertIn('Used by', doc)
                self.assertNotIn('przez', doc)
