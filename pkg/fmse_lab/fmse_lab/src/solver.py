"""
Exterior Dirichlet problem for the fractional magnetic Schrödinger equation and the
discrete Dirichlet-to-Neumann map.

Exterior nodal indicators play the role of the trace space: the exterior data f is a
vector over exterior nodes, the solution satisfies the interior rows of the stiffness
matrix K, and the DN map is the Schur complement of K onto exterior nodes.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Sequence

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

from .exceptions import FieldError, GridError, WellPosednessError
from .fields import Potentials
from .grid import Grid, ScalarField, l2_norm
from .operators import OperatorMatrix, assemble_bilinear, conductivity_matrix, reduced_potentials

logger = logging.getLogger(__name__)

DnMethod = Literal['schur', 'columns']


@dataclass(frozen=True, eq=False)
class DirichletSolution:
    """Solution on all box nodes with the diagnostics of the interior solve."""

    u: ScalarField
    f: np.ndarray
    residual: float
    condition: float
    energy_ratio: float

    def as_dict(self) -> Dict[str, float]:
        return {
            'residual': self.residual,
            'condition': self.condition,
            'energy_ratio': self.energy_ratio,
            'max_abs_u': float(np.max(np.abs(self.u.values))),
        }


@dataclass(frozen=True, eq=False)
class DnMatrix:
    """DN map on the exterior nodal basis with its provenance."""

    grid: Grid
    matrix: np.ndarray
    exterior_indices: np.ndarray
    potentials_hash: str
    grid_hash: str
    method: str = 'schur'

    def asymmetry(self) -> float:
        norm = np.linalg.norm(self.matrix)
        if norm == 0.0:
            return 0.0
        return float(np.linalg.norm(self.matrix - self.matrix.T) / norm)

    def relative_distance(self, other: "DnMatrix") -> float:
        self.grid.require_same(other.grid)
        norm = max(np.linalg.norm(self.matrix), np.finfo(float).tiny)
        return float(np.linalg.norm(self.matrix - other.matrix) / norm)

    def pairing(self, f: np.ndarray, g: np.ndarray) -> float:
        """gᵀ Λ f."""
        return float(np.asarray(g) @ self.matrix @ np.asarray(f))

    def legend(self) -> np.ndarray:
        """Node coordinates of every DN row, shape (|exterior|, n)."""
        return self.grid.nodes[self.exterior_indices]


@dataclass(frozen=True, eq=False)
class InteriorFactorization:
    """LU factors of K_II together with the blocks needed by solves."""

    stiffness: OperatorMatrix
    lu_piv: tuple
    condition: float
    interior: np.ndarray
    exterior: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.stiffness.matrix

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        return la.lu_solve(self.lu_piv, rhs)

    def solution_operator(self) -> np.ndarray:
        """S = −K_II⁻¹ K_IE, mapping exterior data to interior values."""
        return -self.solve_interior(self.K[np.ix_(self.interior, self.exterior)])


class DirichletSolver:
    """
    Dense direct solver for the exterior problem (LU with partial pivoting).

    Used by:
    - inverse (Runge rank, recovery oracle, Alessandrini identity)
    - gauge checks comparing DN maps of gauge partners
    - the `solve` / `dn` subcommands

    Note:
        No eigenvalue shift is ever applied: a numerically singular interior block
        raises WellPosednessError.
    """

    def __init__(self, condition_limit: float = 1e12, threads: int = 1):
        """
        Args:
            condition_limit: largest accepted 1-norm condition estimate of K_II
            threads: worker threads for column-by-column DN assembly
        """
        self.condition_limit = condition_limit
        self.threads = max(1, int(threads))

    def factorize(self, P: Potentials, stiffness: Optional[OperatorMatrix] = None) -> InteriorFactorization:
        """
        Factor the interior block of the stiffness matrix of P.

        Raises:
            WellPosednessError: K_II singular or condition estimate above the limit
        """
        grid = P.grid
        stiffness = stiffness if stiffness is not None else assemble_bilinear(P)
        interior = grid.omega_indices
        exterior = grid.exterior_indices
        K_II = stiffness.matrix[np.ix_(interior, interior)]

        lu, piv = la.lu_factor(K_II, check_finite=True)
        anorm = np.linalg.norm(K_II, 1)
        rcond, info = lapack.dgecon(lu, anorm, norm='1')
        condition = np.inf if rcond == 0.0 else 1.0 / rcond
        if info != 0 or not np.isfinite(condition) or condition > self.condition_limit:
            logger.error(f"Interior block is numerically singular (condition ≈ {condition:.3e})")
            raise WellPosednessError(
                "well-posedness violated: 0 is (numerically) an eigenvalue of the interior "
                f"problem, condition estimate {condition:.3e} > {self.condition_limit:.1e}",
                condition=float(condition),
            )
        logger.debug(f"K_II factorized: {interior.size} unknowns, condition ≈ {condition:.3e}")
        return InteriorFactorization(
            stiffness=stiffness, lu_piv=(lu, piv), condition=float(condition),
            interior=interior, exterior=exterior,
        )

    def solve_dirichlet(self, P: Potentials, f: Sequence[float],
                        factorization: Optional[InteriorFactorization] = None) -> DirichletSolution:
        """
        Solve (−Δ)ˢ_A u + q u = 0 in Ω with u = f on exterior nodes.

        Args:
            P: potentials
            f: values on the exterior nodes (in `grid.exterior_indices` order)

        Returns:
            DirichletSolution with u_I = −K_II⁻¹ K_IE f and u_E = f exactly
        """
        grid = P.grid
        f = np.asarray(f, dtype=float)
        if f.shape != (grid.exterior_indices.size,):
            raise FieldError(f"exterior data has shape {f.shape}, expected ({grid.exterior_indices.size},)")
        factorization = factorization or self.factorize(P)
        K = factorization.K
        interior, exterior = factorization.interior, factorization.exterior

        coupling = K[np.ix_(interior, exterior)] @ f
        u_interior = -factorization.solve_interior(coupling)
        values = np.empty(grid.node_count)
        values[exterior] = f
        values[interior] = u_interior

        defect = K[np.ix_(interior, interior)] @ u_interior + coupling
        scale = max(np.linalg.norm(coupling), np.finfo(float).tiny)
        residual = float(np.linalg.norm(defect) / scale) if np.any(coupling) else float(np.linalg.norm(defect))

        u = ScalarField(grid, values)
        data_norm = l2_norm(ScalarField.from_exterior(grid, f))
        energy_ratio = l2_norm(u) / data_norm if data_norm > 0 else 0.0
        return DirichletSolution(
            u=u, f=f, residual=residual, condition=factorization.condition, energy_ratio=float(energy_ratio),
        )

    def assemble_dn(self, P: Potentials, method: DnMethod = 'schur',
                    factorization: Optional[InteriorFactorization] = None) -> DnMatrix:
        """
        Λ = K_EE − K_EI K_II⁻¹ K_IE, either as a Schur complement or column by column.

        Column j of the `columns` route is (K u_j)_E with u_j the solution for the j-th
        exterior indicator, i.e. Λ_ij = B[u_j, e_i].
        """
        factorization = factorization or self.factorize(P)
        K = factorization.K
        interior, exterior = factorization.interior, factorization.exterior

        if method == 'schur':
            matrix = K[np.ix_(exterior, exterior)] + K[np.ix_(exterior, interior)] @ factorization.solution_operator()
        elif method == 'columns':
            basis = np.eye(exterior.size)

            def column(index: int) -> np.ndarray:
                solution = self.solve_dirichlet(P, basis[index], factorization)
                return (K @ solution.u.values)[exterior]

            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                columns = list(pool.map(column, range(exterior.size)))
            matrix = np.stack(columns, axis=1)
        else:
            raise ValueError(f"unknown DN assembly method '{method}'")

        dn = DnMatrix(
            grid=P.grid, matrix=matrix, exterior_indices=exterior.copy(),
            potentials_hash=P.digest, grid_hash=P.grid.digest, method=method,
        )
        logger.info(f"DN map assembled ({method}): {exterior.size}×{exterior.size}, asymmetry {dn.asymmetry():.2e}")
        return dn

    def solve_conductivity(self, gamma: ScalarField, P: Potentials, f: Sequence[float],
                           route: Literal['direct', 'reduction'] = 'direct') -> DirichletSolution:
        """
        Exterior problem for the fractional magnetic conductivity equation.

        `direct` factors the conductivity matrix itself; `reduction` solves the
        magnetic Schrödinger problem for (A, q′) and maps back with u = γ^{−1/2} w
        (γ = 1 outside Ω, so the exterior data is unchanged).
        """
        if route == 'direct':
            stiffness = conductivity_matrix(gamma, P)
            return self.solve_dirichlet(P, f, self.factorize(P, stiffness))
        if route == 'reduction':
            reduced = self.solve_dirichlet(reduced_potentials(gamma, P), f)
            u = reduced.u.values / np.sqrt(gamma.values)
            return DirichletSolution(
                u=ScalarField(P.grid, u), f=reduced.f, residual=reduced.residual,
                condition=reduced.condition, energy_ratio=reduced.energy_ratio,
            )
        raise ValueError(f"unknown conductivity route '{route}'")


def bilinear_form(P: Potentials, v: ScalarField, w: ScalarField) -> float:
    """B[v, w] = ⟨∇ˢ_A v, ∇ˢ_A w⟩ + ⟨q v, w⟩."""
    P.grid.require_same(v.grid)
    return assemble_bilinear(P).pair(v, w)


def form_bound(P: Potentials) -> float:
    """Smallest k with |B[v, w]| ≤ k‖v‖‖w‖ on the grid: ‖K‖₂ / hⁿ."""
    K = assemble_bilinear(P).matrix
    return float(np.linalg.norm(K, 2) / P.grid.weight)


def solve_dirichlet(P: Potentials, f: Sequence[float], condition_limit: float = 1e12) -> DirichletSolution:
    return DirichletSolver(condition_limit=condition_limit).solve_dirichlet(P, f)


def assemble_dn(P: Potentials, method: DnMethod = 'schur', condition_limit: float = 1e12,
                threads: int = 1) -> DnMatrix:
    return DirichletSolver(condition_limit=condition_limit, threads=threads).assemble_dn(P, method)


def require_same_exterior(first: DnMatrix, second: DnMatrix) -> None:
    if not first.grid.same_as(second.grid) or not np.array_equal(first.exterior_indices, second.exterior_indices):
        raise GridError("DN matrices are indexed by different exterior node sets")
