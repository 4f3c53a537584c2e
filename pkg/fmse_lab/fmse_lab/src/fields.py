"""
Bivariate vector fields, σ-kernels and magnetic/electric potential pairs.

A BivariateVectorField stores A(x_i, x_j) ∈ ℝⁿ for every ordered node pair as a dense
(N, N, n) array. The four decompositions (symmetric, antisymmetric, parallel to
x_j − x_i, perpendicular) are orthogonal projections, they commute, and the
antisymmetric-parallel part A_{a∥} is exactly what the σ-kernel encodes.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Literal, Optional

import numpy as np

from fmse_lab.core.utils import array_digest
from .exceptions import FieldError
from .grid import Grid, ScalarField
from .kernels import alpha_kernel, divergence_values

logger = logging.getLogger(__name__)

DecompositionKind = Literal['sym', 'antisym', 'par', 'perp']

# Relative slack for invariants that must hold up to roundoff (symmetry, unit off Ω²).
_ROUNDOFF = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BivariateVectorField:
    """ℝⁿ-valued function on ordered node pairs, values shape (N, N, n)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.grid.node_count, self.grid.node_count, self.grid.n)
        if values.shape != expected:
            raise FieldError(f"bivariate field has shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise FieldError("bivariate field contains non-finite values")
        object.__setattr__(self, 'values', _readonly(values))

    @classmethod
    def zeros(cls, grid: Grid) -> "BivariateVectorField":
        return cls(grid, np.zeros((grid.node_count, grid.node_count, grid.n)))

    @classmethod
    def from_function(cls, grid: Grid,
                      function: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "BivariateVectorField":
        """Sample function(x, y) with x, y broadcast to shape (N, N, n)."""
        x = np.broadcast_to(grid.nodes[:, None, :], (grid.node_count, grid.node_count, grid.n))
        y = np.broadcast_to(grid.nodes[None, :, :], (grid.node_count, grid.node_count, grid.n))
        return cls(grid, function(x, y))

    def __add__(self, other: "BivariateVectorField") -> "BivariateVectorField":
        self.grid.require_same(other.grid)
        return BivariateVectorField(self.grid, self.values + other.values)

    def __sub__(self, other: "BivariateVectorField") -> "BivariateVectorField":
        self.grid.require_same(other.grid)
        return BivariateVectorField(self.grid, self.values - other.values)

    def __neg__(self) -> "BivariateVectorField":
        return BivariateVectorField(self.grid, -self.values)

    def scaled(self, factor: float) -> "BivariateVectorField":
        return BivariateVectorField(self.grid, factor * self.values)

    def transposed(self) -> "BivariateVectorField":
        """(i, j) ↦ A(x_j, x_i)."""
        return BivariateVectorField(self.grid, np.swapaxes(self.values, 0, 1))

    @property
    def squared_norms(self) -> np.ndarray:
        """|A(i, j)|² per pair."""
        return np.einsum('ijk,ijk->ij', self.values, self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self, tolerance: float = 0.0) -> bool:
        return self.max_abs() <= tolerance

    def support_in_omega(self) -> bool:
        """True when A vanishes on every pair outside Ω × Ω."""
        mask = self.grid.omega_mask
        outside = ~(mask[:, None] & mask[None, :])
        return not np.any(self.values[outside] != 0.0)


def decompose(A: BivariateVectorField, kind: DecompositionKind) -> BivariateVectorField:
    """
    Symmetric, antisymmetric, parallel or perpendicular part of A.

    `par` projects A(x, y) on the line through x − y for x ≠ y and keeps A itself on
    the diagonal; `perp` is the remainder A − A_∥.
    """
    values = A.values
    if kind == 'sym':
        return BivariateVectorField(A.grid, 0.5 * (values + np.swapaxes(values, 0, 1)))
    if kind == 'antisym':
        return BivariateVectorField(A.grid, 0.5 * (values - np.swapaxes(values, 0, 1)))
    if kind in ('par', 'perp'):
        parallel = _parallel_part(A.grid, values)
        if kind == 'par':
            return BivariateVectorField(A.grid, parallel)
        return BivariateVectorField(A.grid, values - parallel)
    raise FieldError(f"unknown decomposition kind '{kind}'")


def _parallel_part(grid: Grid, values: np.ndarray) -> np.ndarray:
    differences = grid.differences
    squared = np.einsum('ijk,ijk->ij', differences, differences)
    projection = np.einsum('ijk,ijk->ij', values, differences)
    coefficient = np.zeros_like(squared)
    off_diagonal = squared > 0
    coefficient[off_diagonal] = projection[off_diagonal] / squared[off_diagonal]
    parallel = coefficient[:, :, None] * differences
    diagonal = np.arange(grid.node_count)
    parallel[diagonal, diagonal, :] = values[diagonal, diagonal, :]
    return parallel


def antisym_parallel_part(A: BivariateVectorField) -> BivariateVectorField:
    """A_{a∥}."""
    return decompose(decompose(A, 'antisym'), 'par')


def sym_parallel_part(A: BivariateVectorField) -> BivariateVectorField:
    """A_{s∥}."""
    return decompose(decompose(A, 'sym'), 'par')


def j_norm_field(A: BivariateVectorField, which: Literal['first', 'second']) -> ScalarField:
    """
    𝒥₁A(x_i) = (hⁿ Σ_j |A(x_j, x_i)|²)^{1/2}, 𝒥₂A(x_i) = (hⁿ Σ_j |A(x_i, x_j)|²)^{1/2}.
    """
    squared = A.squared_norms
    if which == 'first':
        sums = squared.sum(axis=0)
    elif which == 'second':
        sums = squared.sum(axis=1)
    else:
        raise FieldError(f"unknown 𝒥-norm variable '{which}'")
    return ScalarField(A.grid, np.sqrt(A.grid.weight * sums))


def antisym_parallel_field(grid: Grid, weight: np.ndarray) -> BivariateVectorField:
    """
    A(i, j) = w(i, j)(x_j − x_i) for a symmetric weight w.

    The result is antisymmetric and parallel, and A·(x_j − x_i) = w|x_j − x_i|², so
    (p3) holds exactly when w ≥ 0.
    """
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (grid.node_count, grid.node_count):
        raise FieldError(f"weight has shape {weight.shape}, expected square over {grid.node_count} nodes")
    weight = 0.5 * (weight + weight.T)
    return BivariateVectorField(grid, weight[:, :, None] * grid.differences)


@dataclass(frozen=True, eq=False)
class SigmaKernel:
    """
    Symmetric positive pair weight σ(x_i, x_j) of the leading operator term.

    With `unit_off_omega` (the default) σ must equal 1 on every pair outside Ω²,
    which is what supp(A) ⊆ Ω² implies.
    """

    grid: Grid
    sigma: np.ndarray
    unit_off_omega: bool = True

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        count = self.grid.node_count
        if sigma.shape != (count, count):
            raise FieldError(f"σ has shape {sigma.shape}, expected ({count}, {count})")
        if not np.all(np.isfinite(sigma)):
            raise FieldError("σ contains non-finite values")
        scale = max(1.0, float(np.max(np.abs(sigma))))
        if np.max(np.abs(sigma - sigma.T)) > _ROUNDOFF * scale:
            raise FieldError("σ is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        bad = np.argwhere(sigma <= 0.0)
        if bad.size:
            i, j = bad[0]
            raise FieldError(f"σ must be positive: σ({i}, {j}) = {sigma[i, j]:.6g} ({len(bad)} pairs)")
        if np.max(np.abs(np.diag(sigma) - 1.0)) > _ROUNDOFF * scale:
            raise FieldError("σ must equal 1 on the diagonal")
        np.fill_diagonal(sigma, 1.0)
        if self.unit_off_omega:
            mask = self.grid.omega_mask
            outside = ~(mask[:, None] & mask[None, :])
            if np.any(np.abs(sigma[outside] - 1.0) > _ROUNDOFF * scale):
                raise FieldError("σ must equal 1 on every pair outside Ω × Ω")
            sigma[outside] = 1.0
        object.__setattr__(self, 'sigma', _readonly(sigma))

    @classmethod
    def ones(cls, grid: Grid) -> "SigmaKernel":
        return cls(grid, np.ones((grid.node_count, grid.node_count)))

    def min(self) -> float:
        return float(self.sigma.min())


def sigma_from_A(A: BivariateVectorField, unit_off_omega: bool = True) -> SigmaKernel:
    """
    σ(i, j) = 1 + (√2/C_{n,s}^{1/2}) |x_j − x_i|^{n/2+s} A_{a∥}(i, j)·(x_j − x_i)/|x_j − x_i|.

    Raises FieldError (never clamps) when some pair gets σ ≤ 0.
    """
    grid = A.grid
    kernel = alpha_kernel(grid)
    apar = antisym_parallel_part(A).values
    distances = grid.distances
    projection = np.einsum('ijk,ijk->ij', apar, grid.differences)
    sigma = np.ones_like(distances)
    off_diagonal = distances > 0
    exponent = grid.n / 2.0 + grid.s - 1.0
    sigma[off_diagonal] += (np.sqrt(2.0) / np.sqrt(kernel.c_ns)) * (
        distances[off_diagonal] ** exponent * projection[off_diagonal]
    )
    non_positive = int(np.count_nonzero(sigma <= 0.0))
    if non_positive:
        logger.error(f"σ built from A has {non_positive} non-positive pairs")
    return SigmaKernel(grid, sigma, unit_off_omega=unit_off_omega)


def a_apar_from_sigma(sigma: SigmaKernel) -> BivariateVectorField:
    """A_{a∥} = α(σ − 1): antisymmetric and parallel by construction."""
    alpha = alpha_kernel(sigma.grid).alpha
    return BivariateVectorField(sigma.grid, alpha * (sigma.sigma - 1.0)[:, :, None])


def separable_sigma(gamma: ScalarField) -> SigmaKernel:
    """σ(x, y) = γ(x)^{1/2} γ(y)^{1/2}; needs γ > 0 and γ = 1 on exterior nodes."""
    validate_conductivity(gamma)
    root = np.sqrt(gamma.values)
    return SigmaKernel(gamma.grid, np.outer(root, root), unit_off_omega=False)


def validate_conductivity(gamma: ScalarField) -> None:
    if np.any(gamma.values <= 0.0):
        raise FieldError("conductivity γ must be positive at every node")
    if np.any(gamma.exterior_values != 1.0):
        raise FieldError("conductivity γ must equal 1 on exterior nodes")


@dataclass(frozen=True)
class PropertyReport:
    """Discrete status of the admissibility properties (p1)–(p5)."""

    p1_j1_norm: float
    p1_j2_norm: float
    p2_sym_parallel_norm: float
    p3_holds: bool
    p3_min_projection: float
    p4_q_norm: float
    p5_holds: bool
    p5_a_norm: float
    q_supported: bool
    exponent_p: float

    @property
    def in_class_P(self) -> bool:
        return self.p3_holds and self.p5_holds and self.q_supported

    def as_dict(self) -> Dict[str, object]:
        payload = dict(self.__dict__)
        payload['in_class_P'] = self.in_class_P
        return payload


@dataclass(frozen=True, eq=False)
class Potentials:
    """
    Pair (A, q) of real vector and scalar potentials.

    By default q must vanish on exterior nodes. Potentials produced by the
    conductivity reduction are created with `enforce_support=False`, because the
    reduced q′ picks up (−Δ)ˢγ^{1/2} terms outside Ω.
    """

    A: BivariateVectorField
    q: ScalarField
    enforce_support: bool = True
    label: str = field(default='', compare=False)

    def __post_init__(self):
        self.A.grid.require_same(self.q.grid)
        if self.enforce_support and np.any(self.q.exterior_values != 0.0):
            raise FieldError("q must vanish on exterior nodes")

    @classmethod
    def zero(cls, grid: Grid) -> "Potentials":
        return cls(BivariateVectorField.zeros(grid), ScalarField.zeros(grid), label='zero')

    @property
    def grid(self) -> Grid:
        return self.A.grid

    @property
    def p(self) -> float:
        """Integrability exponent max{2, n/(2s)} used by the norm report."""
        return max(2.0, self.grid.n / (2.0 * self.grid.s))

    @cached_property
    def Q(self) -> ScalarField:
        return assemble_Q(self)

    @cached_property
    def digest(self) -> str:
        return array_digest(self.A.values, self.q.values)

    @cached_property
    def property_report(self) -> PropertyReport:
        return check_potentials(self)

    def with_q(self, q: ScalarField, enforce_support: Optional[bool] = None) -> "Potentials":
        enforce = self.enforce_support if enforce_support is None else enforce_support
        return Potentials(self.A, q, enforce_support=enforce, label=self.label)


def assemble_Q(P: Potentials) -> ScalarField:
    """Q = q + hⁿ Σ_j |A(i, j)|² + (∇·)ˢA_{s∥}."""
    grid = P.grid
    magnetic = grid.weight * P.A.squared_norms.sum(axis=1)
    divergence = divergence_values(grid, sym_parallel_part(P.A).values)
    return ScalarField(grid, P.q.values + magnetic + divergence)


def _lp_norm(values: np.ndarray, weight: float, p: float) -> float:
    return float((weight * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def check_potentials(P: Potentials) -> PropertyReport:
    """
    (p3), (p5) and q's support as exact booleans; (p1), (p2), (p4) as discrete norms.

    On a finite grid every norm is finite, so (p1)/(p2)/(p4) are documentation values.
    """
    grid = P.grid
    p = P.p
    apar = antisym_parallel_part(P.A).values
    projection = np.einsum('ijk,ijk->ij', apar, grid.differences)
    sym_par = sym_parallel_part(P.A)
    return PropertyReport(
        p1_j1_norm=_lp_norm(j_norm_field(P.A, 'first').values, grid.weight, 2.0 * p),
        p1_j2_norm=_lp_norm(j_norm_field(P.A, 'second').values, grid.weight, 2.0 * p),
        p2_sym_parallel_norm=float(np.sqrt(grid.weight ** 2 * np.sum(sym_par.squared_norms))),
        p3_holds=bool(np.all(projection >= 0.0)),
        p3_min_projection=float(projection.min()),
        p4_q_norm=_lp_norm(P.q.omega_values, grid.weight, p),
        p5_holds=P.A.support_in_omega(),
        p5_a_norm=float(np.sqrt(grid.weight ** 2 * np.sum(P.A.squared_norms))),
        q_supported=bool(np.all(P.q.exterior_values == 0.0)),
        exponent_p=p,
    )


def field_l2_norm(A: BivariateVectorField) -> float:
    """‖A‖ in the pair inner product."""
    return float(np.sqrt(A.grid.weight ** 2 * np.sum(A.squared_norms)))


__all__ = [
    'BivariateVectorField', 'SigmaKernel', 'Potentials', 'PropertyReport',
    'decompose', 'antisym_parallel_part', 'sym_parallel_part', 'j_norm_field',
    'antisym_parallel_field', 'sigma_from_A', 'a_apar_from_sigma', 'separable_sigma',
    'validate_conductivity', 'assemble_Q', 'check_potentials', 'field_l2_norm',
]
