"""
Named, seeded experiment instances.

Each preset builds its grid and potentials from a seed only, so the same seed always
reproduces the same arrays.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from .exceptions import ConfigurationError
from .fields import BivariateVectorField, Potentials, antisym_parallel_field
from .grid import Grid, ScalarField, make_grid
from .walk import bump, smooth_sigma

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PresetInstance:
    name: str
    grid: Grid
    potentials: Potentials
    extras: Dict[str, Any] = field(default_factory=dict)


PresetBuilder = Callable[[np.random.Generator, Mapping[str, Any]], PresetInstance]


def _omega_pair_mask(grid: Grid) -> np.ndarray:
    mask = grid.omega_mask[:, None] & grid.omega_mask[None, :]
    np.fill_diagonal(mask, False)
    return mask


def random_potentials(grid: Grid,
                      rng: np.random.Generator,
                      amplitude: float = 0.5,
                      antisym_parallel: bool = True,
                      sym_parallel: bool = True,
                      perpendicular: bool = True,
                      q_scale: float = 1.0,
                      label: str = 'random') -> Potentials:
    """
    Random (A, q) in the admissible class.

    A_{a∥} = w(x_j − x_i) with w symmetric ≥ 0, A_{s∥} = v(x_j − x_i) with v
    antisymmetric, A_⊥ = t·R(x_j − x_i) (n = 2); all supported on Ω² off the
    diagonal. q is uniform on [0, q_scale] at Ω nodes.
    """
    count = grid.node_count
    mask = _omega_pair_mask(grid)
    values = np.zeros((count, count, grid.n))

    if antisym_parallel:
        weight = rng.uniform(0.0, amplitude, (count, count))
        values += antisym_parallel_field(grid, (weight + weight.T) * mask).values
    if sym_parallel:
        raw = rng.uniform(-amplitude, amplitude, (count, count))
        skew = 0.5 * (raw - raw.T) * mask
        values += skew[:, :, None] * grid.differences
    if perpendicular and grid.n == 2:
        turn = rng.uniform(-amplitude, amplitude, (count, count)) * mask
        differences = grid.differences
        rotated = np.stack([-differences[..., 1], differences[..., 0]], axis=-1)
        values += turn[:, :, None] * rotated

    q = np.where(grid.omega_mask, rng.uniform(0.0, q_scale, count), 0.0)
    return Potentials(BivariateVectorField(grid, values), ScalarField(grid, q), label=label)


def random_conductivity(grid: Grid, rng: np.random.Generator, amplitude: float = 0.5) -> ScalarField:
    """γ = 1 + a·bump on Ω with a random amplitude in (0, amplitude]; γ = 1 on exterior nodes."""
    omega_nodes = grid.nodes[grid.omega_indices]
    center = omega_nodes.mean(axis=0)
    radius = float(np.max(np.linalg.norm(omega_nodes - center[None, :], axis=1))) + grid.h
    scale = rng.uniform(0.1, 1.0) * amplitude
    values = 1.0 + scale * bump(grid.nodes, center, radius) * grid.omega_mask
    return ScalarField(grid, values)


def _grid_1d(params: Mapping[str, Any], box, nodes, omega, s=0.5) -> Grid:
    return make_grid(
        n=1, s=float(params.get('s', s)), box=[box],
        nodes_per_axis=int(params.get('nodes_per_axis', nodes)), omega={'box': [omega]},
    )


def _grid_2d(params: Mapping[str, Any], s=0.5) -> Grid:
    return make_grid(
        n=2, s=float(params.get('s', s)), box=[[-1.0, 1.0], [-1.0, 1.0]],
        nodes_per_axis=int(params.get('nodes_per_axis', 12)), omega={'box': [[-0.5, 0.5], [-0.5, 0.5]]},
    )


class PresetFactory:
    """
    Registry of preset builders.

    Used by:
    - ExperimentRunner, when a config names a preset
    - tests that need a reproducible instance
    """

    _presets: Dict[str, PresetBuilder] = {}

    @classmethod
    def register_preset(cls, name: str) -> Callable[[PresetBuilder], PresetBuilder]:
        def decorator(builder: PresetBuilder) -> PresetBuilder:
            cls._presets[name] = builder
            return builder
        return decorator

    @classmethod
    def get_available_presets(cls) -> List[str]:
        return sorted(cls._presets)

    @classmethod
    def create(cls, name: str, seed: int, params: Optional[Mapping[str, Any]] = None) -> PresetInstance:
        builder = cls._presets.get(name)
        if builder is None:
            available = ', '.join(cls.get_available_presets())
            raise ConfigurationError(f"Unknown preset: {name}. Available: {available}")
        rng = np.random.default_rng(seed)
        params = dict(params or {})
        instance = builder(rng, params)
        logger.info(f"Preset '{name}' built with seed {seed}: {instance.grid.node_count} nodes")
        return instance


def build_preset(name: str, seed: int, params: Optional[Mapping[str, Any]] = None) -> PresetInstance:
    return PresetFactory.create(name, seed, params)


@PresetFactory.register_preset('zero')
def _zero(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_1d(params, [-2.0, 2.0], 9, [-1.0, 1.0])
    return PresetInstance('zero', grid, Potentials.zero(grid))


@PresetFactory.register_preset('random-1d')
def _random_1d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_1d(params, [-2.0, 2.0], 32, [-1.0, 1.0])
    P = random_potentials(grid, rng, amplitude=float(params.get('amplitude', 0.5)), label='random-1d')
    return PresetInstance('random-1d', grid, P)


@PresetFactory.register_preset('random-2d')
def _random_2d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_2d(params)
    P = random_potentials(grid, rng, amplitude=float(params.get('amplitude', 0.5)), label='random-2d')
    return PresetInstance('random-2d', grid, P)


@PresetFactory.register_preset('perpendicular-2d')
def _perpendicular_2d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_2d(params)
    P = random_potentials(
        grid, rng, amplitude=float(params.get('amplitude', 0.5)),
        antisym_parallel=True, sym_parallel=False, perpendicular=True, label='perpendicular-2d',
    )
    return PresetInstance('perpendicular-2d', grid, P)


@PresetFactory.register_preset('parallel-only-2d')
def _parallel_only_2d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_2d(params)
    P = random_potentials(
        grid, rng, amplitude=float(params.get('amplitude', 0.5)),
        perpendicular=False, label='parallel-only-2d',
    )
    return PresetInstance('parallel-only-2d', grid, P)


@PresetFactory.register_preset('conductivity-1d')
def _conductivity_1d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_1d(params, [-2.0, 2.0], 32, [-1.0, 1.0])
    P = random_potentials(grid, rng, amplitude=float(params.get('amplitude', 0.5)), label='conductivity-1d')
    gamma = random_conductivity(grid, rng, float(params.get('gamma_amplitude', 0.5)))
    return PresetInstance('conductivity-1d', grid, P, {'gamma': gamma})


@PresetFactory.register_preset('recovery-1d')
def _recovery_1d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_1d(params, [-2.125, 2.125], 18, [-0.5, 0.5])
    truth = random_potentials(grid, rng, amplitude=float(params.get('amplitude', 0.2)),
                              q_scale=float(params.get('q_scale', 0.5)), label='recovery-truth')
    reference = Potentials.zero(grid)
    return PresetInstance('recovery-1d', grid, truth, {'reference': reference, 'truth': truth})


@PresetFactory.register_preset('walk-1d')
def _walk_1d(rng: np.random.Generator, params: Mapping[str, Any]) -> PresetInstance:
    grid = _grid_1d(params, [-4.0, 4.0], 33, [-1.0, 1.0])
    sigma = smooth_sigma(grid, amplitude=float(params.get('amplitude', 1.0)), center=[0.0], radius=0.9)
    gamma = random_conductivity(grid, rng, float(params.get('gamma_amplitude', 0.5)))
    return PresetInstance('walk-1d', grid, Potentials.zero(grid), {'sigma': sigma, 'gamma': gamma})
