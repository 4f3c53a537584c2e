"""
Gauge relationships between potential pairs.

Two pairs are ∼-equivalent when they define the same operator, which happens exactly
when their antisymmetric-parallel parts A_{a∥} and effective potentials Q agree.
The ≈ gauge (conjugation by a positive φ equal to 1 off Ω) does not hold for this
equation; `approx_gauge_residual` measures how far a given φ is from realizing it.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FieldError, GaugeConstructionError
from .fields import (
    BivariateVectorField, Potentials, antisym_parallel_part, assemble_Q, decompose,
)
from .grid import ScalarField
from .operators import assemble_expansion
from .solver import DirichletSolver

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaugeReport:
    """Match metrics of a ∼ comparison."""

    a_apar_match: float
    q_match: float
    operator_match: float
    tolerance: float
    verdict: bool
    consistent: bool

    def as_dict(self) -> Dict[str, object]:
        return dict(self.__dict__)


def rotate_quarter_turn(A: BivariateVectorField) -> BivariateVectorField:
    """R(a₁, a₂) = (−a₂, a₁) applied to every pair."""
    if A.grid.n != 2:
        raise GaugeConstructionError(f"a π/2 rotation needs n = 2, grid has n = {A.grid.n}")
    values = A.values
    rotated = np.stack([-values[..., 1], values[..., 0]], axis=-1)
    return BivariateVectorField(A.grid, rotated)


def matching_q(P: Potentials, A_partner: BivariateVectorField) -> ScalarField:
    """q′ with Q(A′, q′) = Q(A, q)."""
    partner_Q = assemble_Q(Potentials(A_partner, ScalarField.zeros(P.grid), enforce_support=False))
    return ScalarField(P.grid, P.Q.values - partner_Q.values)


def gauge_partner(P: Potentials, rotation_plane: Optional[Tuple[int, int]] = None,
                  tolerance: float = 1e-10) -> Potentials:
    """
    A ∼-equivalent pair (A′, q′) with A′ ≠ A.

    If A has a perpendicular part, A′ = A_∥ − A_⊥; otherwise (n = 2 only)
    A′ = A_∥ + R A_∥ with R the quarter turn. q′ restores Q.

    Raises:
        GaugeConstructionError: A ≡ 0, or A purely parallel on an n = 1 grid
    """
    grid = P.grid
    if P.A.is_zero():
        raise GaugeConstructionError("A ≡ 0: the gauge partner construction needs a nonzero vector potential")
    if rotation_plane is not None and tuple(rotation_plane) != (0, 1):
        raise GaugeConstructionError(f"rotation plane {rotation_plane} unsupported, only (0, 1) exists for n ≤ 2")

    parallel = decompose(P.A, 'par')
    perpendicular = P.A - parallel
    scale = max(1.0, P.A.max_abs())
    if not perpendicular.is_zero(tolerance * scale):
        partner = parallel - perpendicular
        branch = 'flip-perpendicular'
    elif grid.n == 2:
        partner = parallel + rotate_quarter_turn(parallel)
        branch = 'rotate-parallel'
    else:
        raise GaugeConstructionError(
            "A is purely parallel on a one-dimensional grid: the perpendicular space is trivial "
            "and no partner construction is available"
        )

    q_partner = matching_q(P, partner)
    enforce = P.enforce_support and not np.any(q_partner.exterior_values != 0.0)
    logger.info(f"Gauge partner built ({branch}), |A′ − A|_max = {(partner - P.A).max_abs():.3e}")
    return Potentials(partner, q_partner, enforce_support=enforce, label=f"{P.label}-partner")


def is_sim_equivalent(P1: Potentials, P2: Potentials, tolerance: float = 1e-10) -> GaugeReport:
    """Compare A_{a∥} and Q entrywise, and cross-check against the assembled operators."""
    P1.grid.require_same(P2.grid)
    apar1 = antisym_parallel_part(P1.A)
    apar2 = antisym_parallel_part(P2.A)
    a_apar_match = (apar1 - apar2).max_abs()
    q_match = float(np.max(np.abs(P1.Q.values - P2.Q.values)))
    operator_match = assemble_expansion(P1).relative_distance(assemble_expansion(P2))

    a_scale = max(1.0, apar1.max_abs(), apar2.max_abs())
    q_scale = max(1.0, float(np.max(np.abs(P1.Q.values))), float(np.max(np.abs(P2.Q.values))))
    verdict = a_apar_match <= tolerance * a_scale and q_match <= tolerance * q_scale
    consistent = verdict == (operator_match <= tolerance)
    if not consistent:
        logger.warning(
            f"∼ verdict {verdict} disagrees with operator distance {operator_match:.3e} (tolerance {tolerance:.1e})"
        )
    return GaugeReport(
        a_apar_match=float(a_apar_match), q_match=q_match, operator_match=operator_match,
        tolerance=tolerance, verdict=bool(verdict), consistent=bool(consistent),
    )


def validate_gauge_function(phi: ScalarField) -> None:
    """φ ∈ G: positive everywhere and equal to 1 on exterior nodes."""
    if np.any(phi.values <= 0.0):
        raise FieldError("φ must be positive at every node")
    if np.any(phi.exterior_values != 1.0):
        raise FieldError("φ must equal 1 on exterior nodes")


def approx_gauge_residual(P1: Potentials, P2: Potentials, phi: ScalarField) -> float:
    """
    max_i ‖K₁Φe_i − ΦK₂e_i‖ / max_i ‖K₁e_i‖ with Φ = diag(φ).

    Zero exactly when L₁(φu) = φL₂u for every nodal u.
    """
    P1.grid.require_same(P2.grid)
    P1.grid.require_same(phi.grid)
    validate_gauge_function(phi)
    K1 = assemble_expansion(P1).matrix
    K2 = assemble_expansion(P2).matrix
    residual = K1 * phi.values[None, :] - phi.values[:, None] * K2
    scale = max(float(np.max(np.linalg.norm(K1, axis=0))), np.finfo(float).tiny)
    return float(np.max(np.linalg.norm(residual, axis=0)) / scale)


def homotopy_residuals(P1: Potentials, P2: Potentials, phi: ScalarField,
                       steps: Sequence[float] = (1.0, 0.1, 0.01)) -> Dict[float, float]:
    """approx_gauge_residual along φ_t = 1 + t(φ − 1)."""
    results = {}
    for t in steps:
        phi_t = phi.with_values(1.0 + t * (phi.values - 1.0))
        results[float(t)] = approx_gauge_residual(P1, P2, phi_t)
    return results


class GaugeInspector:
    """
    Builds a partner, verifies ∼ and compares the two DN maps.

    Used by: the `gauge` subcommand, tests of the recovery invariance.
    """

    def __init__(self, solver: DirichletSolver, tolerance: float = 1e-10):
        self.solver = solver
        self.tolerance = tolerance

    def inspect(self, P: Potentials) -> Dict[str, object]:
        partner = gauge_partner(P, tolerance=self.tolerance)
        report = is_sim_equivalent(P, partner, self.tolerance)
        dn = self.solver.assemble_dn(P)
        dn_partner = self.solver.assemble_dn(partner)
        return {
            'partner': partner,
            'report': report,
            'partner_differs': (partner.A - P.A).max_abs(),
            'dn_distance': dn.relative_distance(dn_partner),
            'dn_asymmetry': max(dn.asymmetry(), dn_partner.asymmetry()),
            'dn': dn,
            'dn_partner': dn_partner,
        }
