"""
FMSE Experiment Runner

Orchestrates one reproducible experiment per call: loads the potentials (preset or
files), runs the pipeline of the requested subcommand, checks every asserted identity
against its tolerance and writes the JSON report plus CSV/binary artifacts.

Subcommands:
    check-ops, solve, dn, gauge, invert, walk, reduce, fourier

Usage:
    from fmse_lab.core.containers import container
    runner = container.experiment_runner()
    result = runner.run('dn', load_experiment_config('dn.json'), seed=7)

Reports contain no timestamps: the same config and seed give byte-identical JSON.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from fmse_lab.core.config import LabConfig
from .exceptions import ConfigurationError, GaugeConstructionError
from .fields import (
    BivariateVectorField, Potentials, antisym_parallel_part, decompose, field_l2_norm,
    j_norm_field, sigma_from_A,
)
from .gauge import GaugeInspector, approx_gauge_residual, gauge_partner, homotopy_residuals
from .grid import Grid, ScalarField, build_grid, inner_product, l2_norm, pair_inner_product
from .inverse import RecoveryEngine, runge_rank
from .operators import (
    assemble_bilinear, assemble_expansion, assemble_sigma_form, fourier_symbol_check,
    frac_divergence, frac_gradient, reduction_identity_residual, reduction_qprime,
)
from .presets import PresetFactory, PresetInstance, random_conductivity
from .schemas import ExperimentConfig
from .serializers import (
    build_report, read_dn_matrix, read_exterior_csv, read_scalar_csv, read_vector_field,
    read_vector_field_csv, write_dn_csv, write_pair_binary, write_report, write_scalar_csv,
    write_vector_field,
)
from .solver import DirichletSolver
from .walk import (
    WalkConfig, evolve, generator_residual, jump_probabilities, lattice_zeta, probability_defect,
    sample_jumps,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('check-ops', 'solve', 'dn', 'gauge', 'invert', 'walk', 'reduce', 'fourier')


@dataclass
class ExperimentResult:
    subcommand: str
    report: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)
    failed_metrics: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failed_metrics


class MetricBook:
    """Collects named metrics; `checked=False` marks advisory values that never fail a run."""

    def __init__(self):
        self.metrics: Dict[str, Dict[str, Any]] = {}
        self.failed: List[str] = []

    def at_most(self, name: str, value: float, tolerance: float, checked: bool = True) -> bool:
        passed = bool(value <= tolerance)
        self.metrics[name] = {'value': float(value), 'tolerance': float(tolerance), 'passed': passed,
                              'checked': checked}
        if checked and not passed:
            self.failed.append(name)
            logger.warning(f"Identity failed: {name} = {value:.3e} > {tolerance:.1e}")
        return passed

    def holds(self, name: str, condition: bool, detail: Any = None) -> bool:
        self.metrics[name] = {'value': bool(condition), 'passed': bool(condition), 'checked': True}
        if detail is not None:
            self.metrics[name]['detail'] = detail
        if not condition:
            self.failed.append(name)
            logger.warning(f"Property failed: {name}")
        return bool(condition)

    def record(self, name: str, value: Any) -> None:
        self.metrics[name] = {'value': value, 'checked': False}


def _relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)


class ExperimentRunner:
    """
    Main runner of FMSE lab experiments.

    Used by:
    - management command `fmse`
    - tests of the command surface

    Args:
        config: lab-wide tolerances and defaults
        dirichlet_solver: solver shared by every pipeline
        gauge_inspector: gauge partner / DN comparison service
        recovery_engine: inverse-crime recovery service
    """

    def __init__(self, config: LabConfig, dirichlet_solver: DirichletSolver,
                 gauge_inspector: GaugeInspector, recovery_engine: RecoveryEngine):
        self.config = config
        self.solver = dirichlet_solver
        self.gauge_inspector = gauge_inspector
        self.recovery_engine = recovery_engine

    # --- entry point -------------------------------------------------------------------

    def run(self, subcommand: str, experiment: ExperimentConfig, seed: Optional[int] = None,
            threads: Optional[int] = None, output_dir: Optional[str] = None) -> ExperimentResult:
        if subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"Unknown subcommand: {subcommand}. Available: {', '.join(SUBCOMMANDS)}")
        seed = self._resolve_seed(experiment, seed)
        if threads is not None:
            self.solver.threads = max(1, int(threads))
        out = Path(output_dir or experiment.output_dir or self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)

        logger.info(f"Running '{subcommand}' with seed {seed} into {out}")
        book = MetricBook()
        artifacts: List[Path] = []
        handler = getattr(self, subcommand.replace('-', '_'))
        body, grid = handler(experiment, seed, book, out, artifacts)

        body.update({
            'subcommand': subcommand,
            'seed': seed,
            'metrics': book.metrics,
            'failed_metrics': list(book.failed),
            'status': 'passed' if not book.failed else 'failed',
            'artifacts': sorted(path.name for path in artifacts),
        })
        if grid is not None:
            body['grid'] = grid.describe()
        config_payload = experiment.model_dump(mode='json')
        config_payload['seed'] = seed
        report = build_report(body, config_payload, grid.digest if grid is not None else None,
                              self.config.report_schema_version)
        report_path = write_report(out / 'report.json', report)
        artifacts.append(report_path)
        return ExperimentResult(subcommand, report, artifacts, list(book.failed))

    def _resolve_seed(self, experiment: ExperimentConfig, seed: Optional[int]) -> int:
        if seed is not None:
            return int(seed)
        if experiment.seed is not None:
            return int(experiment.seed)
        return int(self.config.default_seed)

    # --- inputs ------------------------------------------------------------------------

    def load_instance(self, experiment: ExperimentConfig, seed: int) -> PresetInstance:
        source = experiment.potentials
        if source.preset is not None:
            if experiment.grid is not None:
                raise ConfigurationError("a preset defines its own grid; set grid parameters through potentials.params")
            return PresetFactory.create(source.preset, seed, source.params)

        if experiment.grid is None:
            raise ConfigurationError("file-based potentials need a grid configuration")
        grid = build_grid(experiment.grid)
        if source.a_path is None:
            A = BivariateVectorField.zeros(grid)
        elif source.a_path.endswith('.csv'):
            A = read_vector_field_csv(source.a_path, grid)
        else:
            A = read_vector_field(source.a_path, grid)
        q = read_scalar_csv(source.q_path, grid) if source.q_path else ScalarField.zeros(grid)
        return PresetInstance('files', grid, Potentials(A, q, label='files'))

    def exterior_data(self, experiment: ExperimentConfig, grid: Grid, seed: int) -> np.ndarray:
        if experiment.exterior_data_path:
            return read_exterior_csv(experiment.exterior_data_path, grid)
        return np.random.default_rng([seed, 1]).standard_normal(grid.exterior_indices.size)

    # --- subcommands -------------------------------------------------------------------

    def check_ops(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid, P = instance.grid, instance.potentials
        tolerances = experiment.tolerances
        rng = np.random.default_rng([seed, 2])
        shape = (grid.node_count, grid.node_count, grid.n)

        adjoint, decomposition, pythagoras = 0.0, 0.0, 0.0
        for _ in range(experiment.check.samples):
            u = ScalarField(grid, rng.standard_normal(grid.node_count))
            V = BivariateVectorField(grid, rng.standard_normal(shape))
            adjoint = max(adjoint, _relative_gap(
                inner_product(frac_divergence(V), u), pair_inner_product(V, frac_gradient(u))
            ))

            scale = max(V.max_abs(), np.finfo(float).tiny)
            sym, anti = decompose(V, 'sym'), decompose(V, 'antisym')
            par, perp = decompose(V, 'par'), decompose(V, 'perp')
            norm_sq = pair_inner_product(V, V)
            decomposition = max(
                decomposition,
                ((sym + anti) - V).max_abs() / scale,
                ((par + perp) - V).max_abs() / scale,
                abs(pair_inner_product(sym, anti)) / norm_sq,
                abs(pair_inner_product(par, perp)) / norm_sq,
                _relative_gap(l2_norm(j_norm_field(V, 'first')), field_l2_norm(V)),
            )
            pythagoras = max(
                pythagoras,
                _relative_gap(norm_sq, pair_inner_product(sym, sym) + pair_inner_product(anti, anti)),
                _relative_gap(norm_sq, pair_inner_product(par, par) + pair_inner_product(perp, perp)),
            )
        book.at_most('adjointness', adjoint, tolerances.adjoint)
        book.at_most('decomposition', decomposition, tolerances.adjoint)
        book.at_most('pythagoras', pythagoras, tolerances.adjoint)

        bilinear = assemble_bilinear(P)
        expansion = assemble_expansion(P)
        sigma_form = assemble_sigma_form(sigma_from_A(P.A), P.Q)
        book.at_most('bilinear_vs_expansion', bilinear.relative_distance(expansion), tolerances.identity)
        book.at_most('bilinear_vs_sigma_form', bilinear.relative_distance(sigma_form), tolerances.identity)
        book.at_most('matrix_asymmetry', bilinear.asymmetry(), tolerances.symmetry)

        artifacts.append(write_pair_binary(out / 'operator.bin', bilinear.matrix))
        body = {'potentials': self._describe_potentials(P)}
        return body, grid

    def solve(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid, P = instance.grid, instance.potentials
        f = self.exterior_data(experiment, grid, seed)
        solution = self.solver.solve_dirichlet(P, f)
        book.at_most('solve_residual', solution.residual, experiment.tolerances.identity)
        book.record('condition', solution.condition)
        book.record('energy_ratio', solution.energy_ratio)
        artifacts.append(write_scalar_csv(out / 'u.csv', solution.u))
        return {'potentials': self._describe_potentials(P), 'solution': solution.as_dict()}, grid

    def dn(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid, P = instance.grid, instance.potentials
        dn = self.solver.assemble_dn(P, 'schur')
        by_columns = self.solver.assemble_dn(P, 'columns')
        book.at_most('dn_asymmetry', dn.asymmetry(), experiment.tolerances.symmetry)
        book.at_most('dn_routes_agree', dn.relative_distance(by_columns), experiment.tolerances.identity)

        runge = runge_rank(P, self.solver, self.config.rank_cutoff)
        book.record('runge', runge.as_dict())
        artifacts.extend(write_dn_csv(out, dn).values())
        artifacts.append(write_pair_binary(out / 'dn.bin', dn.matrix))
        return {'potentials': self._describe_potentials(P), 'potentials_hash': dn.potentials_hash}, grid

    def gauge(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid, P = instance.grid, instance.potentials
        tolerance = experiment.tolerances.identity
        inspection = self.gauge_inspector.inspect(P)
        report = inspection['report']
        partner = inspection['partner']

        book.holds('sim_verdict', report.verdict, report.as_dict())
        book.holds('verdict_matches_operators', report.consistent)
        book.holds('partner_differs', inspection['partner_differs'] > 0.0)
        book.at_most('dn_distance', inspection['dn_distance'], tolerance)
        book.at_most('dn_asymmetry', inspection['dn_asymmetry'], experiment.tolerances.symmetry)

        rng = np.random.default_rng([seed, 3])
        phi = ScalarField(grid, np.where(grid.omega_mask, rng.uniform(0.5, 1.5, grid.node_count), 1.0))
        baseline = approx_gauge_residual(P, partner, ScalarField.constant(grid, 1.0))
        witness = approx_gauge_residual(P, partner, phi)
        book.at_most('approx_gauge_identity_phi', baseline, tolerance)
        book.holds('approx_gauge_fails', witness > 10.0 * tolerance,
                   {'residual': witness, 'homotopy': homotopy_residuals(P, partner, phi)})

        artifacts.append(write_vector_field(out / 'partner_A.bin', partner.A))
        artifacts.append(write_scalar_csv(out / 'partner_q.csv', partner.q))
        return {'potentials': self._describe_potentials(P), 'partner': self._describe_potentials(partner)}, grid

    def invert(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid = instance.grid
        options = experiment.invert
        tolerances = experiment.tolerances

        if options.measured == 'partner':
            reference = instance.potentials
            try:
                truth = gauge_partner(reference, tolerance=tolerances.identity)
            except GaugeConstructionError as error:
                raise ConfigurationError(f"measured='partner' needs a gauge partner: {error}") from error
        else:
            reference = instance.extras.get('reference', Potentials.zero(grid))
            truth = instance.extras.get('truth', instance.potentials)

        if options.dn_path:
            measured = read_dn_matrix(options.dn_path, grid, truth.digest)
        else:
            measured = self.solver.assemble_dn(truth)

        self.recovery_engine.condition_limit = options.condition_limit
        result = self.recovery_engine.recover(
            measured, reference, truth, reg=options.reg, sources=options.sources, sinks=options.sinks,
        )
        if options.measured == 'partner':
            book.at_most('max_abs_delta', float(np.max(np.abs(result.unknowns))), tolerances.recovery)
        else:
            book.at_most('data_fit_residual', result.data_fit_residual, tolerances.recovery)
            error = result.parameter_errors.get('all', 0.0)
            book.at_most('parameter_error', error, tolerances.parameter, checked=not result.ill_conditioned)
        book.record('flagged_ill_conditioned', result.ill_conditioned)

        artifacts.append(write_pair_binary(out / 'recovered_sigma.bin', result.sigma))
        artifacts.append(write_scalar_csv(out / 'recovered_Q.csv', result.Q))
        return {'recovery': result.as_dict(), 'reference': self._describe_potentials(reference)}, grid

    def walk(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid = instance.grid
        options = experiment.walk
        tolerances = experiment.tolerances
        sigma = instance.extras.get('sigma') or sigma_from_A(instance.potentials.A)
        cfg = WalkConfig.create(grid, sigma, options.max_jump, seed)
        node = grid.nearest_node(options.node) if options.node else int(grid.omega_indices[grid.omega_indices.size // 2])

        book.at_most('probability_sum', probability_defect(cfg), tolerances.probability)
        rng = np.random.default_rng([seed, 4])
        u = ScalarField(grid, rng.standard_normal(grid.node_count))
        book.at_most('generator_residual', generator_residual(cfg, u), tolerances.adjoint)

        table = sample_jumps(cfg, node, options.count, self.config.chi_square_quantile)
        book.holds('chi_square', table.passes, table.as_dict())

        unit = WalkConfig.create(grid, None, options.max_jump, seed)
        unit_jumps = jump_probabilities(unit, node)
        zeta_value = lattice_zeta(grid.n, grid.s)
        book.at_most('zeta_truncation', abs(zeta_value - unit_jumps.normalizer), unit_jumps.tail_bound * (1 + 1e-12))
        book.record('zeta', zeta_value)

        u0 = np.zeros(grid.node_count)
        u0[node] = 1.0
        history = evolve(cfg, ScalarField(grid, u0), options.steps)
        series = np.column_stack([np.arange(grid.node_count), grid.nodes] + [step.values for step in history])
        header = 'node_index,' + ','.join(f"coord_{k + 1}" for k in range(grid.n)) + ',' + ','.join(
            f"t{k}" for k in range(len(history)))
        path = out / 'walk_series.csv'
        np.savetxt(path, series, delimiter=',', header=header, comments='',
                   fmt=['%d'] + ['%.17g'] * (grid.n + len(history)))
        artifacts.append(path)
        return {'node': node, 'tau': cfg.tau, 'normalizer': float(cfg.normalizers[node])}, grid

    def reduce(self, experiment, seed, book, out, artifacts):
        instance = self.load_instance(experiment, seed)
        grid, P = instance.grid, instance.potentials
        tolerance = experiment.tolerances.identity
        rng = np.random.default_rng([seed, 5])
        gamma = instance.extras.get('gamma') or random_conductivity(grid, rng, experiment.reduce.gamma_amplitude)

        residual = 0.0
        for _ in range(experiment.reduce.samples):
            w = ScalarField(grid, rng.standard_normal(grid.node_count))
            residual = max(residual, reduction_identity_residual(gamma, P, w))
        book.at_most('reduction_identity', residual, tolerance)

        unit_q = reduction_qprime(ScalarField.constant(grid, 1.0), P)
        book.at_most('unit_gamma_keeps_q', float(np.max(np.abs(unit_q.values - P.q.values))),
                     tolerance * max(1.0, float(np.max(np.abs(P.q.values)))))

        f = self.exterior_data(experiment, grid, seed)
        direct = self.solver.solve_conductivity(gamma, P, f, 'direct')
        reduced = self.solver.solve_conductivity(gamma, P, f, 'reduction')
        gap = np.linalg.norm(direct.u.values - reduced.u.values) / max(np.linalg.norm(direct.u.values), np.finfo(float).tiny)
        book.at_most('conductivity_routes_agree', float(gap), tolerance)

        artifacts.append(write_scalar_csv(out / 'qprime.csv', reduction_qprime(gamma, P)))
        artifacts.append(write_scalar_csv(out / 'gamma.csv', gamma))
        return {'potentials': self._describe_potentials(P)}, grid

    def fourier(self, experiment, seed, book, out, artifacts):
        options = experiment.fourier
        lower, upper = options.box
        fits = [fourier_symbol_check(options.s, count, (lower, upper)).as_dict() for count in options.nodes]
        finest = max(options.nodes)
        wide = fourier_symbol_check(options.s, 2 * finest, (2 * lower, 2 * upper)).as_dict()
        base = next(fit for fit in fits if fit['N'] == finest)

        book.at_most('fourier_residual', base['residual'], experiment.tolerances.fourier, checked=False)
        book.holds('fourier_box_refinement', wide['residual'] < base['residual'],
                   {'base': base['residual'], 'wide': wide['residual']})
        book.holds('fourier_real_k', bool(np.isfinite(base['k_fit'])))
        legend = {
            'fourier_residual': (
                'advisory; the fit error comes from cutting the kernel off at the box, not from N. '
                'At s = 0.5 with a Gaussian it is about 0.2 on [-8, 8] for both N = 128 and N = 256 '
                'and about 0.14 on [-16, 16]. It shrinks when the box grows at fixed spacing. '
                f'Nominal target {experiment.tolerances.fourier:g}.'
            ),
            'fourier_box_refinement': 'residual on the doubled box at the same spacing is below the base residual',
        }
        return {'fits': fits, 'wide_box_fit': wide, 'legend': legend}, None

    # --- helpers -----------------------------------------------------------------------

    @staticmethod
    def _describe_potentials(P: Potentials) -> Dict[str, Any]:
        return {
            'label': P.label,
            'hash': P.digest,
            'properties': P.property_report.as_dict(),
            'a_apar_max': antisym_parallel_part(P.A).max_abs(),
        }
