"""
Identifiability of (σ, Q) from Dirichlet-to-Neumann data.

The Alessandrini identity turns DN-map differences into bilinear interior sums; the
recovery system collects one such identity per pair of exterior indicators and solves
for the σ and Q differences on Ω² and Ω. Solutions of the measured-side problem come
from an oracle (the inverse-crime setting): the lab demonstrates injectivity up to ∼,
not blind inversion.

Exterior subsets (sources, sinks) are positions in `grid.exterior_indices` order, i.e.
DN row/column indices.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .exceptions import GridError
from .fields import Potentials, antisym_parallel_part, sigma_from_A
from .grid import ScalarField
from .kernels import c_ns, inverse_power
from .operators import frac_gradient
from .solver import DirichletSolver, DnMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlessandriniTerms:
    lhs: float
    rhs: float
    residual: float


def alessandrini_terms(P1: Potentials, P2: Potentials, f1: Sequence[float], f2: Sequence[float],
                       solver: Optional[DirichletSolver] = None) -> AlessandriniTerms:
    """
    LHS = f₂ᵀ(Λ₁ − Λ₂)f₁ against
    RHS = 2h²ⁿ Σ u₂(x_i)(A₁ − A₂)_{a∥}(i, j)·∇ˢu₁(i, j) + hⁿ Σ (Q₁ − Q₂)_i u₁ᵢ u₂ᵢ.
    """
    P1.grid.require_same(P2.grid)
    solver = solver or DirichletSolver()
    grid = P1.grid
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)

    lhs = f2 @ (solver.assemble_dn(P1).matrix - solver.assemble_dn(P2).matrix) @ f1

    u1 = solver.solve_dirichlet(P1, f1).u
    u2 = solver.solve_dirichlet(P2, f2).u
    apar_difference = antisym_parallel_part(P1.A).values - antisym_parallel_part(P2.A).values
    drift = np.einsum('ijk,ijk->ij', apar_difference, frac_gradient(u1).values)
    rhs = (
        2.0 * grid.weight ** 2 * float(u2.values @ drift.sum(axis=1))
        + grid.weight * float(np.sum((P1.Q.values - P2.Q.values) * u1.values * u2.values))
    )
    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + np.finfo(float).tiny)
    return AlessandriniTerms(lhs=float(lhs), rhs=float(rhs), residual=float(residual))


def alessandrini_residual(P1: Potentials, P2: Potentials, f1: Sequence[float], f2: Sequence[float],
                          solver: Optional[DirichletSolver] = None) -> float:
    return alessandrini_terms(P1, P2, f1, f2, solver).residual


@dataclass(frozen=True)
class RungeReport:
    """Rank of the exterior-data → interior-values map S = −K_II⁻¹K_IE."""

    singular_values: np.ndarray
    rank: int
    omega_nodes: int
    exterior_nodes: int
    full_rank: bool
    explanation: str = ''

    def as_dict(self) -> Dict[str, object]:
        return {
            'singular_values': self.singular_values.tolist(),
            'rank': self.rank,
            'omega_nodes': self.omega_nodes,
            'exterior_nodes': self.exterior_nodes,
            'full_rank': self.full_rank,
            'explanation': self.explanation,
        }


def runge_rank(P: Potentials, solver: Optional[DirichletSolver] = None, cutoff: float = 1e-10) -> RungeReport:
    solver = solver or DirichletSolver()
    S = solver.factorize(P).solution_operator()
    singular_values = np.linalg.svd(S, compute_uv=False)
    largest = singular_values[0] if singular_values.size else 0.0
    rank = int(np.count_nonzero(singular_values > cutoff * largest)) if largest > 0 else 0
    omega_nodes, exterior_nodes = S.shape
    full_rank = rank == omega_nodes
    explanation = ''
    if exterior_nodes < omega_nodes:
        explanation = (
            f"only {exterior_nodes} exterior nodes for {omega_nodes} Ω nodes: "
            f"rank is at most {exterior_nodes}"
        )
    elif not full_rank:
        explanation = f"numerical rank {rank} < {omega_nodes} at cutoff {cutoff:.1e}"
    if not full_rank:
        logger.warning(f"Runge rank deficient: {explanation}")
    return RungeReport(
        singular_values=singular_values, rank=rank, omega_nodes=omega_nodes,
        exterior_nodes=exterior_nodes, full_rank=full_rank, explanation=explanation,
    )


class SolutionSource(Protocol):
    def interior_solutions(self, exterior_positions: np.ndarray) -> np.ndarray:
        """Ω values of the solutions for the given exterior indicators, shape (|Ω|, |W|)."""


class InverseCrimeOracle:
    """Solutions of the measured-side problem computed from the true potentials."""

    def __init__(self, truth: Potentials, solver: Optional[DirichletSolver] = None):
        self.truth = truth
        self.solver = solver or DirichletSolver()
        self._solution_operator: Optional[np.ndarray] = None

    def interior_solutions(self, exterior_positions: np.ndarray) -> np.ndarray:
        if self._solution_operator is None:
            self._solution_operator = self.solver.factorize(self.truth).solution_operator()
        return self._solution_operator[:, exterior_positions]


def omega_pairs(omega_count: int) -> List[Tuple[int, int]]:
    """Unordered Ω-local pairs (p, q), p < q, in lexicographic order."""
    return list(combinations(range(omega_count), 2))


def _positions(selection: Optional[Sequence[int]], exterior_count: int, name: str) -> np.ndarray:
    if selection is None:
        return np.arange(exterior_count)
    positions = np.asarray(list(selection), dtype=int)
    if positions.size == 0:
        raise GridError(f"{name} subset is empty")
    if np.any(positions < 0) or np.any(positions >= exterior_count):
        raise GridError(f"{name} subset has positions outside 0..{exterior_count - 1}")
    return positions


@dataclass(frozen=True, eq=False)
class RecoverySystem:
    matrix: np.ndarray
    rhs: np.ndarray
    labels: List[str]
    pairs: List[Tuple[int, int]]
    sources: np.ndarray
    sinks: np.ndarray


def recovery_equations(dn_measured: DnMatrix, reference: Potentials, oracle: SolutionSource,
                       sources: Optional[Sequence[int]] = None, sinks: Optional[Sequence[int]] = None,
                       solver: Optional[DirichletSolver] = None) -> RecoverySystem:
    """
    One row per (a ∈ sources, b ∈ sinks):

    f_bᵀ(Λ_meas − Λ_ref)f_a = h²ⁿC Σ_{p<q} Dσ_pq (u₁ₚ − u₁_q)(u₂ₚ − u₂_q)/|x_p − x_q|^{n+2s}
                              + hⁿ Σ_p DQ_p u₁ₚ u₂ₚ,

    u₁ from the oracle with data f_a, u₂ from the reference with data f_b.
    """
    grid = reference.grid
    grid.require_same(dn_measured.grid)
    solver = solver or DirichletSolver()
    exterior_count = grid.exterior_indices.size
    sources = _positions(sources, exterior_count, 'sources')
    sinks = _positions(sinks, exterior_count, 'sinks')

    reference_S = solver.factorize(reference).solution_operator()
    U1 = np.asarray(oracle.interior_solutions(sources), dtype=float)
    U2 = reference_S[:, sinks]

    omega = grid.omega_indices
    pairs = omega_pairs(omega.size)
    first = np.array([p for p, _ in pairs], dtype=int)
    second = np.array([q for _, q in pairs], dtype=int)
    kernel = inverse_power(grid, grid.n + 2.0 * grid.s)[omega[first], omega[second]]
    constant = c_ns(grid.n, grid.s)

    jumps1 = U1[first] - U1[second]
    jumps2 = U2[first] - U2[second]
    sigma_block = grid.weight ** 2 * constant * np.einsum('k,ka,kb->abk', kernel, jumps1, jumps2)
    q_block = grid.weight * np.einsum('ia,ib->abi', U1, U2)
    matrix = np.concatenate([sigma_block, q_block], axis=2).reshape(sources.size * sinks.size, -1)

    reference_dn = solver.assemble_dn(reference).matrix
    difference = dn_measured.matrix - reference_dn
    rhs = difference[np.ix_(sinks, sources)].T.reshape(-1)

    nodes = grid.omega_indices
    labels = [f"sigma[{nodes[p]},{nodes[q]}]" for p, q in pairs] + [f"Q[{node}]" for node in nodes]
    logger.debug(f"Recovery system: {matrix.shape[0]} equations, {matrix.shape[1]} unknowns")
    return RecoverySystem(matrix=matrix, rhs=rhs, labels=labels, pairs=pairs, sources=sources, sinks=sinks)


def true_unknowns(truth: Potentials, reference: Potentials) -> np.ndarray:
    """(Dσ on Ω pairs, DQ on Ω nodes) between truth and reference."""
    grid = reference.grid
    omega = grid.omega_indices
    pairs = omega_pairs(omega.size)
    delta_sigma = sigma_from_A(truth.A).sigma - sigma_from_A(reference.A).sigma
    sigma_part = np.array([delta_sigma[omega[p], omega[q]] for p, q in pairs])
    q_part = truth.Q.values[omega] - reference.Q.values[omega]
    return np.concatenate([sigma_part, q_part])


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    """Recovered σ (all pairs) and Q (all nodes) with fit and conditioning metrics."""

    sigma: np.ndarray
    Q: ScalarField
    unknowns: np.ndarray
    labels: List[str]
    data_fit_residual: float
    condition: float
    rank: int
    reg: float
    equation_count: int
    ill_conditioned: bool
    parameter_errors: Dict[str, float] = field(default_factory=dict)

    @property
    def unknown_count(self) -> int:
        return self.unknowns.size

    def as_dict(self) -> Dict[str, object]:
        return {
            'data_fit_residual': self.data_fit_residual,
            'condition': self.condition,
            'rank': self.rank,
            'unknown_count': self.unknown_count,
            'equation_count': self.equation_count,
            'reg': self.reg,
            'ill_conditioned': self.ill_conditioned,
            'parameter_errors': dict(self.parameter_errors),
            'max_abs_delta': float(np.max(np.abs(self.unknowns))) if self.unknowns.size else 0.0,
        }


def _relative_error(estimate: np.ndarray, target: np.ndarray) -> float:
    scale = np.linalg.norm(target)
    error = np.linalg.norm(estimate - target)
    return float(error / scale) if scale > 0 else float(error)


def solve_equilibrated(matrix: np.ndarray, rhs: np.ndarray, reg: float = 0.0,
                       cutoff: float = 1e-10) -> Tuple[np.ndarray, float, int]:
    """
    Least squares with unit-norm columns: rank-cutoff pseudoinverse when reg = 0,
    Tikhonov filter s/(s² + reg) otherwise. Returns (x, condition, rank) where the
    condition and rank belong to the equilibrated matrix.
    """
    norms = np.linalg.norm(matrix, axis=0)
    norms[norms == 0.0] = 1.0
    scaled = matrix / norms
    U, singular_values, Vt = np.linalg.svd(scaled, full_matrices=False)
    largest = singular_values[0] if singular_values.size else 0.0
    keep = singular_values > cutoff * largest if largest > 0 else np.zeros_like(singular_values, dtype=bool)
    rank = int(np.count_nonzero(keep))
    smallest = singular_values[-1] if singular_values.size else 0.0
    condition = float(largest / smallest) if smallest > 0 else float('inf')

    projected = U.T @ rhs
    if reg > 0.0:
        filters = singular_values / (singular_values ** 2 + reg)
    else:
        filters = np.zeros_like(singular_values)
        filters[keep] = 1.0 / singular_values[keep]
    x = (Vt.T @ (filters * projected)) / norms
    return x, condition, rank


def recover(dn_measured: DnMatrix,
            reference: Potentials,
            oracle: SolutionSource,
            truth: Optional[Potentials] = None,
            reg: float = 0.0,
            sources: Optional[Sequence[int]] = None,
            sinks: Optional[Sequence[int]] = None,
            rank_cutoff: float = 1e-10,
            condition_limit: float = 1e8,
            solver: Optional[DirichletSolver] = None) -> RecoveryResult:
    """
    Recover σ on Ω² and Q on Ω from DN data relative to `reference`.

    Rank deficiency and ill-conditioning are reported, never raised.
    """
    if reg < 0.0:
        raise ValueError(f"regularization weight must be nonnegative, got {reg}")
    grid = reference.grid
    system = recovery_equations(dn_measured, reference, oracle, sources, sinks, solver)
    x, condition, rank = solve_equilibrated(system.matrix, system.rhs, reg, rank_cutoff)

    fit = system.matrix @ x - system.rhs
    rhs_norm = np.linalg.norm(system.rhs)
    data_fit = float(np.linalg.norm(fit) / rhs_norm) if rhs_norm > 0 else float(np.linalg.norm(fit))

    omega = grid.omega_indices
    pair_count = len(system.pairs)
    delta_sigma, delta_Q = x[:pair_count], x[pair_count:]
    sigma = sigma_from_A(reference.A).sigma.copy()
    for (p, q), value in zip(system.pairs, delta_sigma):
        sigma[omega[p], omega[q]] += value
        sigma[omega[q], omega[p]] += value
    Q_values = reference.Q.values.copy()
    Q_values[omega] += delta_Q

    unknown_count = x.size
    if rank < unknown_count:
        logger.warning(f"Recovery system rank {rank} < {unknown_count} unknowns")
    ill_conditioned = condition > condition_limit
    if ill_conditioned:
        logger.warning(f"Recovery system ill-conditioned: condition {condition:.3e} > {condition_limit:.1e}")

    errors: Dict[str, float] = {}
    if truth is not None:
        target = true_unknowns(truth, reference)
        errors = {
            'sigma': _relative_error(delta_sigma, target[:pair_count]),
            'Q': _relative_error(delta_Q, target[pair_count:]),
            'all': _relative_error(x, target),
            'equations_at_truth': float(
                np.linalg.norm(system.matrix @ target - system.rhs) / max(rhs_norm, np.finfo(float).tiny)
            ),
        }

    logger.info(f"Recovery: rank {rank}/{unknown_count}, condition {condition:.3e}, data fit {data_fit:.3e}")
    return RecoveryResult(
        sigma=sigma, Q=ScalarField(grid, Q_values), unknowns=x, labels=system.labels,
        data_fit_residual=data_fit, condition=condition, rank=rank, reg=reg,
        equation_count=system.matrix.shape[0], ill_conditioned=ill_conditioned,
        parameter_errors=errors,
    )


class RecoveryEngine:
    """
    Runs the recovery pipeline with the configured solver and cutoffs.

    Used by: the `invert` subcommand.
    """

    def __init__(self, solver: DirichletSolver, rank_cutoff: float = 1e-10, condition_limit: float = 1e8):
        self.solver = solver
        self.rank_cutoff = rank_cutoff
        self.condition_limit = condition_limit

    def recover(self, dn_measured: DnMatrix, reference: Potentials, truth: Potentials,
                reg: float = 0.0, sources: Optional[Sequence[int]] = None,
                sinks: Optional[Sequence[int]] = None) -> RecoveryResult:
        oracle = InverseCrimeOracle(truth, self.solver)
        return recover(
            dn_measured, reference, oracle, truth=truth, reg=reg, sources=sources, sinks=sinks,
            rank_cutoff=self.rank_cutoff, condition_limit=self.condition_limit, solver=self.solver,
        )
