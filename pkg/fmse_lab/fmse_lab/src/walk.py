"""
Weighted long-jump random walk on the truncated lattice hℤⁿ ∩ B.

A particle at x jumps by hk with probability P(x, k) ∝ σ(x, x + hk)|k|^{−n−2s}.
Jumps leaving the box carry no mass: P is renormalized over in-box targets and the
truncated mass of the unweighted normalizer is bounded by `tail_bound`.

The master equation u(x, t + τ) = Σ_k P(x, k) u(x + hk, t), τ = h^{2s}, is normalized
at the point being updated. For nonconstant σ it is not the transpose of a stochastic
forward chain, so Monte Carlo checks sample P(x, ·) itself.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import zeta

from .exceptions import FieldError, GridError
from .fields import SigmaKernel, antisym_parallel_field, separable_sigma, sigma_from_A
from .grid import Grid, ScalarField

logger = logging.getLogger(__name__)

NodeRef = Union[int, Sequence[float]]


@dataclass(frozen=True, eq=False)
class WalkConfig:
    """Lattice, σ-kernel, time step τ = h^{2s}, jump cutoff K and RNG seed."""

    grid: Grid
    sigma: SigmaKernel
    max_jump: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self):
        self.grid.require_same(self.sigma.grid)
        if self.max_jump is not None and self.max_jump < 1.0:
            raise GridError(f"max_jump={self.max_jump} excludes every nearest-neighbour jump")
        if not (0 <= int(self.rng_seed) < 2 ** 64):
            raise FieldError(f"rng_seed={self.rng_seed} is not a 64-bit unsigned integer")

    @classmethod
    def create(cls, grid: Grid, sigma: Optional[SigmaKernel] = None, max_jump: Optional[float] = None,
               rng_seed: int = 0) -> "WalkConfig":
        sigma = sigma if sigma is not None else SigmaKernel.ones(grid)
        return cls(grid=grid, sigma=sigma, max_jump=max_jump, rng_seed=rng_seed)

    @property
    def tau(self) -> float:
        return self.grid.h ** (2.0 * self.grid.s)

    @property
    def exponent(self) -> float:
        return self.grid.n + 2.0 * self.grid.s

    @cached_property
    def jump_lengths(self) -> np.ndarray:
        """|k_ij| = |x_j − x_i|/h in lattice units."""
        return self.grid.distances / self.grid.h

    @cached_property
    def admissible(self) -> np.ndarray:
        mask = self.jump_lengths > 0.5
        if self.max_jump is not None:
            mask &= self.jump_lengths <= self.max_jump * (1.0 + 1e-12)
        return mask

    @cached_property
    def lattice_weights(self) -> np.ndarray:
        """|k|^{−n−2s} on admissible pairs, 0 elsewhere."""
        weights = np.zeros_like(self.jump_lengths)
        weights[self.admissible] = self.jump_lengths[self.admissible] ** (-self.exponent)
        return weights

    @cached_property
    def weights(self) -> np.ndarray:
        """σ(x_i, x_j)|k_ij|^{−n−2s}."""
        return self.sigma.sigma * self.lattice_weights

    @cached_property
    def normalizers(self) -> np.ndarray:
        """Z(x_i) over in-box targets (exactly rounded sums)."""
        return np.array([math.fsum(row) for row in self.weights])

    @cached_property
    def transition_matrix(self) -> np.ndarray:
        """M_ij = P(x_i, k_ij); every row sums to 1."""
        return self.weights / self.normalizers[:, None]

    def node_index(self, x: NodeRef) -> int:
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < self.grid.node_count:
                raise GridError(f"node {x} outside 0..{self.grid.node_count - 1}")
            return int(x)
        return self.grid.nearest_node(x)


@dataclass(frozen=True, eq=False)
class JumpDistribution:
    """P(x, ·) over admissible offsets k, with the normalizer Z(x)."""

    node: int
    offsets: np.ndarray
    targets: np.ndarray
    probabilities: np.ndarray
    normalizer: float
    tail_bound: float

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def probability(self, offset: Sequence[int]) -> float:
        offset = np.asarray(offset, dtype=np.int64)
        if not np.any(offset):
            return 0.0
        hits = np.flatnonzero(np.all(self.offsets == offset[None, :], axis=1))
        return float(self.probabilities[hits[0]]) if hits.size else 0.0


def lattice_zeta(n: int, s: float) -> float:
    """
    ζ_{n,s} = Σ_{k ∈ ℤⁿ∖{0}} |k|^{−n−2s}.

    n = 1: 2ζ(1 + 2s). n = 2: 4ζ(1 + s)β(1 + s), with Dirichlet β from Hurwitz ζ.
    """
    if n == 1:
        return float(2.0 * zeta(1.0 + 2.0 * s))
    if n == 2:
        t = 1.0 + s
        beta = 4.0 ** (-t) * (zeta(t, 0.25) - zeta(t, 0.75))
        return float(4.0 * zeta(t) * beta)
    raise GridError(f"lattice ζ available for n ∈ {{1, 2}}, got n = {n}")


def _cube_radius(cfg: WalkConfig, node: int) -> int:
    lattice = cfg.grid.lattice_indices[node]
    radius = int(np.min(np.minimum(lattice, cfg.grid.nodes_per_axis - 1 - lattice)))
    if cfg.max_jump is not None:
        radius = min(radius, int(np.floor(cfg.max_jump / np.sqrt(cfg.grid.n) + 1e-12)))
    return radius


def _cube_sum(n: int, exponent: float, radius: int) -> float:
    if radius <= 0:
        return 0.0
    span = np.arange(-radius, radius + 1, dtype=float)
    mesh = np.meshgrid(*([span] * n), indexing='ij')
    lengths = np.sqrt(sum(axis ** 2 for axis in mesh)).reshape(-1)
    lengths = lengths[lengths > 0]
    return float(np.sum(lengths ** (-exponent)))


def tail_bound(cfg: WalkConfig, x: NodeRef) -> float:
    """
    ζ − Σ_{0 < |k|_∞ ≤ m} |k|^{−n−2s}, m the largest in-box cube radius at x.

    Bounds the mass of ℤⁿ missing from the unweighted normalizer at x.
    """
    node = cfg.node_index(x)
    n, s = cfg.grid.n, cfg.grid.s
    radius = _cube_radius(cfg, node)
    if n == 1:
        return float(2.0 * zeta(1.0 + 2.0 * s, radius + 1.0))
    return max(0.0, lattice_zeta(n, s) - _cube_sum(n, cfg.exponent, radius))


def jump_probabilities(cfg: WalkConfig, x: NodeRef) -> JumpDistribution:
    node = cfg.node_index(x)
    targets = np.flatnonzero(cfg.admissible[node])
    offsets = cfg.grid.lattice_indices[targets] - cfg.grid.lattice_indices[node]
    return JumpDistribution(
        node=node,
        offsets=offsets,
        targets=targets,
        probabilities=cfg.transition_matrix[node, targets].copy(),
        normalizer=float(cfg.normalizers[node]),
        tail_bound=tail_bound(cfg, node),
    )


def probability_defect(cfg: WalkConfig) -> float:
    """max_x |Σ_k P(x, k) − 1| with exactly rounded row sums."""
    return max(abs(math.fsum(row) - 1.0) for row in cfg.transition_matrix)


def master_step(cfg: WalkConfig, u: ScalarField) -> ScalarField:
    """u(x, t + τ) = Σ_k P(x, k) u(x + hk, t); out-of-box targets contribute 0."""
    cfg.grid.require_same(u.grid)
    return u.with_values(cfg.transition_matrix @ u.values)


def evolve(cfg: WalkConfig, u0: ScalarField, steps: int) -> List[ScalarField]:
    """[u(0), u(τ), ..., u(steps·τ)]."""
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    history = [u0]
    for _ in range(steps):
        history.append(master_step(cfg, history[-1]))
    return history


def generator_terms(cfg: WalkConfig, u: ScalarField) -> Dict[str, np.ndarray]:
    """Z(x)(u(t+τ) − u(t))/τ and hⁿ Σ σ(u_j − u_i)/|x_i − x_j|^{n+2s} per node."""
    grid = cfg.grid
    values = u.values
    walk = cfg.normalizers * (master_step(cfg, u).values - values) / cfg.tau
    kernel = np.zeros_like(cfg.jump_lengths)
    admissible = cfg.admissible
    kernel[admissible] = grid.distances[admissible] ** (-cfg.exponent)
    jumps = values[None, :] - values[:, None]
    operator = grid.weight * np.sum(cfg.sigma.sigma * kernel * jumps, axis=1)
    scale = grid.weight * np.sum(cfg.sigma.sigma * kernel * np.abs(jumps), axis=1)
    return {'walk': walk, 'operator': operator, 'scale': scale}


def generator_residual(cfg: WalkConfig, u: ScalarField) -> float:
    """max_i |walk_i − operator_i| relative to the largest absolute operator sum (0 for constant u)."""
    terms = generator_terms(cfg, u)
    scale = float(np.max(terms['scale']))
    difference = float(np.max(np.abs(terms['walk'] - terms['operator'])))
    return difference / scale if scale > 0 else difference


@dataclass(frozen=True)
class ZLimitReport:
    spacings: List[float]
    deviations: List[float]
    zeta: float
    monotone: bool

    def as_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)


def completed_normalizers(cfg: WalkConfig) -> np.ndarray:
    """Z̃(x) = ζ + Σ_{in-box} (σ − 1)|k|^{−n−2s}, taking σ = 1 off the box."""
    zeta_value = lattice_zeta(cfg.grid.n, cfg.grid.s)
    return zeta_value + np.sum((cfg.sigma.sigma - 1.0) * cfg.lattice_weights, axis=1)


def z_limit_study(sigma_at: Callable[[float], SigmaKernel], spacings: Sequence[float]) -> ZLimitReport:
    """
    max_x |Z̃_h(x) − ζ| for each spacing h, with σ sampled from one continuum kernel.

    Args:
        sigma_at: builds the σ-kernel on the lattice of spacing h
        spacings: decreasing lattice spacings
    """
    spacings = [float(h) for h in spacings]
    if len(spacings) < 2:
        raise GridError("z_limit_study needs at least two spacings")
    if any(b >= a for a, b in zip(spacings, spacings[1:])):
        raise GridError(f"spacings must decrease strictly, got {spacings}")
    deviations = []
    zeta_value = None
    for h in spacings:
        sigma = sigma_at(h)
        cfg = WalkConfig.create(sigma.grid, sigma)
        zeta_value = lattice_zeta(cfg.grid.n, cfg.grid.s)
        deviations.append(float(np.max(np.abs(completed_normalizers(cfg) - zeta_value))))
        logger.debug(f"Z-limit h={h:.4g}: deviation {deviations[-1]:.3e}")
    monotone = all(b < a for a, b in zip(deviations, deviations[1:])) or all(d == 0.0 for d in deviations)
    return ZLimitReport(spacings=spacings, deviations=deviations, zeta=float(zeta_value), monotone=monotone)


def bump(points: np.ndarray, center: Sequence[float], radius: float) -> np.ndarray:
    """exp(1 − 1/(1 − r²)) for r = |x − c|/radius < 1, else 0; equals 1 at the center."""
    offsets = (points - np.asarray(center, dtype=float)[None, :]) / radius
    r2 = np.einsum('ik,ik->i', offsets, offsets)
    values = np.zeros(points.shape[0])
    inside = r2 < 1.0
    values[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return values


def smooth_sigma(grid: Grid, amplitude: float = 1.0, center: Optional[Sequence[float]] = None,
                 radius: Optional[float] = None) -> SigmaKernel:
    """
    σ from A(x, y) = amplitude·φ(x)φ(y)(y − x) with a smooth bump φ supported in Ω.

    Defaults center the bump on the Ω nodes and shrink it to stay inside Ω.
    """
    omega_nodes = grid.nodes[grid.omega_indices]
    if center is None:
        center = omega_nodes.mean(axis=0)
    if radius is None:
        radius = float(np.min(np.abs(omega_nodes - np.asarray(center)[None, :]).max(axis=0))) + 0.5 * grid.h
    phi = bump(grid.nodes, center, radius) * grid.omega_mask
    weight = amplitude * np.outer(phi, phi)
    return sigma_from_A(antisym_parallel_field(grid, weight))


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Empirical jump frequencies against P(x, ·) with a pooled chi-square test."""

    node: int
    offsets: np.ndarray
    probabilities: np.ndarray
    counts: np.ndarray
    count: int
    chi_square: float
    degrees_of_freedom: int
    critical_value: float
    seed: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.count

    @property
    def passes(self) -> bool:
        return self.chi_square <= self.critical_value

    def as_dict(self) -> Dict[str, object]:
        return {
            'node': self.node,
            'count': self.count,
            'chi_square': self.chi_square,
            'degrees_of_freedom': self.degrees_of_freedom,
            'critical_value': self.critical_value,
            'passes': self.passes,
            'seed': self.seed,
        }


def node_generator(seed: int, node: int) -> np.random.Generator:
    """Counter-based Philox stream, one per node, derived from the run seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(node,))))


def chi_square_test(counts: np.ndarray, probabilities: np.ndarray, count: int,
                    quantile: float = 0.999) -> Dict[str, float]:
    """Pearson statistic with bins of expected count < 5 pooled into one bin."""
    expected = probabilities * count
    large = expected >= 5.0
    observed_bins = list(counts[large])
    expected_bins = list(expected[large])
    if np.any(~large):
        observed_bins.append(counts[~large].sum())
        expected_bins.append(expected[~large].sum())
    observed_bins = np.asarray(observed_bins, dtype=float)
    expected_bins = np.asarray(expected_bins, dtype=float)
    keep = expected_bins > 0
    statistic = float(np.sum((observed_bins[keep] - expected_bins[keep]) ** 2 / expected_bins[keep]))
    dof = max(int(keep.sum()) - 1, 1)
    return {'chi_square': statistic, 'dof': dof, 'critical': float(stats.chi2.ppf(quantile, dof))}


def sample_jumps(cfg: WalkConfig, x: NodeRef, count: int, quantile: float = 0.999) -> SampleTable:
    """Draw `count` offsets from P(x, ·) by inverse CDF on the node's Philox stream."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    distribution = jump_probabilities(cfg, x)
    cdf = np.cumsum(distribution.probabilities)
    cdf[-1] = 1.0
    draws = node_generator(int(cfg.rng_seed), distribution.node).random(count)
    picks = np.minimum(np.searchsorted(cdf, draws, side='right'), cdf.size - 1)
    counts = np.bincount(picks, minlength=cdf.size)
    test = chi_square_test(counts, distribution.probabilities, count, quantile)
    return SampleTable(
        node=distribution.node,
        offsets=distribution.offsets,
        probabilities=distribution.probabilities,
        counts=counts,
        count=count,
        chi_square=test['chi_square'],
        degrees_of_freedom=test['dof'],
        critical_value=test['critical'],
        seed=int(cfg.rng_seed),
    )


def sample_nodes(cfg: WalkConfig, nodes: Sequence[int], count: int, threads: int = 1,
                 quantile: float = 0.999) -> List[SampleTable]:
    """sample_jumps over several nodes; each node owns its stream, so threads do not change results."""
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(lambda node: sample_jumps(cfg, node, count, quantile), nodes))


def _row_ratio_dispersion(H: np.ndarray, rows: np.ndarray) -> float:
    """max over row pairs (i, i′) of the spread of H_ij/H_i′j across shared columns j."""
    worst = 0.0
    for a_index, i in enumerate(rows):
        for j in rows[a_index + 1:]:
            shared = (H[i] > 0) & (H[j] > 0)
            if np.count_nonzero(shared) < 2:
                continue
            ratios = H[i, shared] / H[j, shared]
            worst = max(worst, float((ratios.max() - ratios.min()) / ratios.mean()))
    return worst


@dataclass(frozen=True)
class OperatorComparison:
    """
    unit_source_dependence:     max |P·Z·|k|^{n+2s} − 1| (0 iff P(x, ·) depends only on k)
    separable_dispersion:       row-ratio spread of P·|k|^{n+2s} (0 iff reweighting is by target only)
    generic_dispersion:         the same spread for a generic σ (expected > 0)
    """

    unit_source_dependence: float
    separable_dispersion: float
    separable_source_dependence: float
    generic_dispersion: float
    generic_source_dependence: float
    interior_nodes: List[int] = field(default_factory=list)

    def as_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)


def _profile(cfg: WalkConfig) -> np.ndarray:
    H = np.zeros_like(cfg.jump_lengths)
    admissible = cfg.admissible
    H[admissible] = cfg.transition_matrix[admissible] * cfg.jump_lengths[admissible] ** cfg.exponent
    return H


def _source_dependence(cfg: WalkConfig, rows: np.ndarray) -> float:
    H = _profile(cfg) * cfg.normalizers[:, None]
    block = H[rows]
    mask = cfg.admissible[rows]
    return float(np.max(np.abs(block[mask] - 1.0))) if mask.any() else 0.0


def compare_operators(grid: Grid, sigma_generic: SigmaKernel, gamma: ScalarField) -> OperatorComparison:
    """
    Structural comparison of the jump laws for σ ≡ 1, σ = γ^{1/2}⊗γ^{1/2} and a generic σ,
    evaluated on the Ω nodes.
    """
    rows = grid.omega_indices
    unit = WalkConfig.create(grid)
    separable = WalkConfig.create(grid, separable_sigma(gamma))
    generic = WalkConfig.create(grid, sigma_generic)
    return OperatorComparison(
        unit_source_dependence=_source_dependence(unit, rows),
        separable_dispersion=_row_ratio_dispersion(_profile(separable), rows),
        separable_source_dependence=_source_dependence(separable, rows),
        generic_dispersion=_row_ratio_dispersion(_profile(generic), rows),
        generic_source_dependence=_source_dependence(generic, rows),
        interior_nodes=[int(i) for i in rows],
    )
