# Django management command framework
from django.core.management.base import BaseCommand, CommandError

from fmse_lab.src.exceptions import (
    ConfigurationError, FieldError, GaugeConstructionError, GridError, IdentityFailure,
    WellPosednessError,
)

EXIT_IDENTITY_FAILURE = 1
EXIT_CONFIGURATION = 2
EXIT_WELL_POSEDNESS = 3


class Command(BaseCommand):
    """
    Django management command running one FMSE lab experiment.

    Thin wrapper around ExperimentRunner: parses flags, loads and validates the JSON
    experiment config, runs the subcommand and maps failures onto exit codes
    (1 identity failure, 2 configuration error, 3 well-posedness violation).

    Used by:
    - batch reproduction of the identity checks
    - tests of the command surface

    Example Usage:
    python manage.py fmse check-ops
    python manage.py fmse dn --config dn.json --out results/dn
    python manage.py fmse walk --seed 7 --threads 4
    python manage.py fmse --list-presets
    """

    help = 'Run a fractional magnetic Schrödinger lab experiment and write its report'

    def add_arguments(self, parser):
        """
        Configure command-line arguments.

        Args:
            parser: Django ArgumentParser instance
        """
        from fmse_lab.src.experiment_runner import SUBCOMMANDS

        parser.add_argument(
            'subcommand',
            nargs='?',
            choices=SUBCOMMANDS,
            help='Experiment to run',
        )

        parser.add_argument(
            '--config',
            type=str,
            help='Path to the JSON experiment configuration',
        )

        parser.add_argument(
            '--out',
            type=str,
            help='Output directory for report.json and artifacts',
        )

        parser.add_argument(
            '--seed',
            type=int,
            help='Seed overriding the configuration (unsigned 64-bit)',
        )

        parser.add_argument(
            '--threads',
            type=int,
            help='Worker threads; results do not depend on it',
        )

        parser.add_argument(
            '--list-presets',
            action='store_true',
            help='List the available potential presets',
        )

    def handle(self, *args, **options):
        """
        Execute the experiment and report its outcome.

        Args:
            *args: Positional arguments (unused)
            **options: Parsed command-line arguments
        """
        if options['list_presets']:
            from fmse_lab.src.presets import PresetFactory
            for name in PresetFactory.get_available_presets():
                self.stdout.write(f"  {name}")
            return

        subcommand = options.get('subcommand')
        if not subcommand:
            raise CommandError("a subcommand is required", returncode=EXIT_CONFIGURATION)
        seed = options.get('seed')
        if seed is not None and not 0 <= seed < 2 ** 64:
            raise CommandError(f"--seed {seed} is not an unsigned 64-bit integer", returncode=EXIT_CONFIGURATION)
        threads = options.get('threads')
        if threads is not None and threads < 1:
            raise CommandError(f"--threads must be at least 1, got {threads}", returncode=EXIT_CONFIGURATION)

        try:
            from fmse_lab.core.containers import container
            from fmse_lab.src.schemas import load_experiment_config

            experiment = load_experiment_config(options.get('config'))
            runner = container.experiment_runner()
            result = runner.run(subcommand, experiment, seed=seed, threads=threads, output_dir=options.get('out'))
        except (ConfigurationError, GridError, FieldError, GaugeConstructionError) as e:
            raise CommandError(f"Configuration error: {e}", returncode=EXIT_CONFIGURATION)
        except WellPosednessError as e:
            raise CommandError(f"Well-posedness violated: {e}", returncode=EXIT_WELL_POSEDNESS)

        self._display_result(result)
        if not result.passed:
            name = result.failed_metrics[0]
            metric = result.report['metrics'][name]
            failure = IdentityFailure(name, float(metric.get('value', 0.0)), float(metric.get('tolerance', 0.0)))
            raise CommandError(f"Identity failed: {failure}", returncode=EXIT_IDENTITY_FAILURE)

    def _display_result(self, result):
        """
        Print the metric table of an experiment.

        Args:
            result: ExperimentResult returned by the runner
        """
        self.stdout.write("=" * 60)
        self.stdout.write(f"FMSE {result.subcommand}")
        self.stdout.write("=" * 60)
        for name, metric in sorted(result.report['metrics'].items()):
            value = metric.get('value')
            if not metric.get('checked', False):
                self.stdout.write(f"   · {name}: {self._format(value)}")
            elif metric.get('passed'):
                self.stdout.write(self.style.SUCCESS(f"   ✓ {name}: {self._format(value)}"))
            else:
                self.stdout.write(self.style.ERROR(f"   ✗ {name}: {self._format(value)}"))

        if result.passed:
            self.stdout.write(self.style.SUCCESS("Status: PASSED"))
        else:
            self.stdout.write(self.style.ERROR(f"Status: FAILED ({', '.join(result.failed_metrics)})"))
        self.stdout.write(f"Report: {result.artifacts[-1]}")

    @staticmethod
    def _format(value):
        if isinstance(value, bool):
            return str(value)
        if isinstance(value, float):
            return f"{value:.3e}"
        return str(value)
