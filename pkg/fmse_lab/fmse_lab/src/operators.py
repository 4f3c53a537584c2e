"""
Discrete fractional and magnetic fractional operators.

All operator matrices live in the weak convention: for an assembled matrix M,
vᵀ M u is the bilinear pairing of the operator applied to u against v. Dividing the
rows by hⁿ (`OperatorMatrix.pointwise`) gives nodal values of the operator.

Four assemblies of the magnetic operator are provided:

* ``adjoint-composition``: (∇·)ˢ_A ∇ˢ_A + q built from the magnetic gradient,
* ``expansion``: (−Δ)ˢ + 2∫A_{a∥}·∇ˢ + ((∇·)ˢA_{s∥} + ∫|A|²) + q,
* ``sigma-form``: C_{n,s} Σ σ(u_i − u_j)/|x_i − x_j|^{n+2s} + Q u,
* ``conductivity``: (∇·)ˢ_A(√(γ(x)γ(y)) ∇ˢ_A u) + q u.

The first three agree to roundoff for every admissible (A, q).
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from .exceptions import FieldError, GridError
from .fields import (
    BivariateVectorField, Potentials, SigmaKernel, antisym_parallel_part,
    sym_parallel_part, validate_conductivity,
)
from .grid import Grid, ScalarField
from .kernels import alpha_kernel, c_ns, divergence_values, inverse_power

logger = logging.getLogger(__name__)

AssemblyTag = Literal['adjoint-composition', 'expansion', 'sigma-form', 'conductivity']


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator over all box nodes, in the weak (quadrature-weighted) convention."""

    grid: Grid
    matrix: np.ndarray
    tag: AssemblyTag

    def __post_init__(self):
        count = self.grid.node_count
        if self.matrix.shape != (count, count):
            raise FieldError(f"operator matrix has shape {self.matrix.shape}, expected ({count}, {count})")
        if not np.all(np.isfinite(self.matrix)):
            raise FieldError(f"{self.tag} matrix contains non-finite entries")
        self.matrix.setflags(write=False)

    def pointwise(self) -> np.ndarray:
        """Rows scaled by 1/hⁿ: the matrix of nodal operator values."""
        return self.matrix / self.grid.weight

    def apply(self, u: ScalarField) -> np.ndarray:
        """Weak vector M u (pair it with v by a plain dot product)."""
        self.grid.require_same(u.grid)
        return self.matrix @ u.values

    def apply_pointwise(self, u: ScalarField) -> ScalarField:
        """Nodal values of the operator applied to u."""
        return ScalarField(self.grid, self.apply(u) / self.grid.weight)

    def pair(self, v: ScalarField, w: ScalarField) -> float:
        """vᵀ M w."""
        return float(v.values @ self.apply(w))

    def asymmetry(self) -> float:
        """‖M − Mᵀ‖_F / ‖M‖_F (0 for the zero matrix)."""
        norm = np.linalg.norm(self.matrix)
        if norm == 0.0:
            return 0.0
        return float(np.linalg.norm(self.matrix - self.matrix.T) / norm)

    def relative_distance(self, other: "OperatorMatrix") -> float:
        """‖M − M′‖_F / max(‖M‖_F, tiny)."""
        self.grid.require_same(other.grid)
        norm = max(np.linalg.norm(self.matrix), np.finfo(float).tiny)
        return float(np.linalg.norm(self.matrix - other.matrix) / norm)


def frac_gradient(u: ScalarField) -> BivariateVectorField:
    """∇ˢu(i, j) = (u_i − u_j) α(i, j): symmetric, parallel, zero on the diagonal."""
    alpha = alpha_kernel(u.grid).alpha
    jumps = u.values[:, None] - u.values[None, :]
    return BivariateVectorField(u.grid, jumps[:, :, None] * alpha)


def frac_divergence(V: BivariateVectorField) -> ScalarField:
    """(∇·)ˢV(x_i) = 2hⁿ Σ_j V_s(i, j)·α(i, j), the adjoint of `frac_gradient`."""
    return ScalarField(V.grid, divergence_values(V.grid, V.values))


def magnetic_gradient(u: ScalarField, A: BivariateVectorField) -> BivariateVectorField:
    """∇ˢ_A u(i, j) = (u_i − u_j) α(i, j) + A(i, j) u_i."""
    u.grid.require_same(A.grid)
    gradient = frac_gradient(u).values
    return BivariateVectorField(u.grid, gradient + A.values * u.values[:, None, None])


def fractional_laplacian_pointwise(grid: Grid) -> np.ndarray:
    """Nodal matrix of (−Δ)ˢ_h: C_{n,s} hⁿ Σ_{j≠i} (u_i − u_j)/|x_i − x_j|^{n+2s}."""
    return _weighted_laplacian(grid, np.ones((grid.node_count, grid.node_count)))


def _weighted_laplacian(grid: Grid, sigma: np.ndarray) -> np.ndarray:
    weights = c_ns(grid.n, grid.s) * grid.weight * sigma * inverse_power(grid, grid.n + 2.0 * grid.s)
    np.fill_diagonal(weights, 0.0)
    return np.diag(weights.sum(axis=1)) - weights


def _composed_form(grid: Grid, A_values: np.ndarray, theta: Optional[np.ndarray]) -> np.ndarray:
    """
    h²ⁿ Σ_{i,j} θ_ij G_A(e_a)(i, j)·G_A(e_b)(i, j) as a matrix in (a, b).

    With β = α + A, G_A(u)(i, j) = u_i β_ij − u_j α_ij, so each pair contributes
    |β|² to (i, i), |α|² to (j, j) and −β·α to (i, j) and (j, i).
    """
    alpha = alpha_kernel(grid).alpha
    beta = alpha + A_values
    if theta is None:
        theta = np.ones((grid.node_count, grid.node_count))
    beta_sq = theta * np.einsum('ijk,ijk->ij', beta, beta)
    alpha_sq = theta * np.einsum('ijk,ijk->ij', alpha, alpha)
    cross = theta * np.einsum('ijk,ijk->ij', beta, alpha)
    matrix = np.diag(beta_sq.sum(axis=1) + alpha_sq.sum(axis=0)) - cross - cross.T
    return grid.weight ** 2 * matrix


def assemble_bilinear(P: Potentials) -> OperatorMatrix:
    """
    Stiffness matrix of B[u, v] = ⟨∇ˢ_A u, ∇ˢ_A v⟩ + ⟨q u, v⟩.

    The diagonal pairs (i, i) enter with their A(i, i) u_i term, consistent with
    the ∫|A|² dy term of the expansion.
    """
    grid = P.grid
    matrix = _composed_form(grid, P.A.values, None) + grid.weight * np.diag(P.q.values)
    logger.debug(f"adjoint-composition matrix assembled ({grid.node_count} nodes)")
    return OperatorMatrix(grid, matrix, 'adjoint-composition')


def assemble_expansion(P: Potentials) -> OperatorMatrix:
    """
    (−Δ)ˢ_h u + 2hⁿ Σ_j A_{a∥}·(u_i − u_j)α + ((∇·)ˢA_{s∥} + hⁿΣ_j|A|² + q) u, weak convention.
    """
    grid = P.grid
    alpha = alpha_kernel(grid).alpha
    coupling = np.einsum('ijk,ijk->ij', antisym_parallel_part(P.A).values, alpha)
    drift = 2.0 * grid.weight * (np.diag(coupling.sum(axis=1)) - coupling)

    potential = (
        divergence_values(grid, sym_parallel_part(P.A).values)
        + grid.weight * P.A.squared_norms.sum(axis=1)
        + P.q.values
    )
    pointwise = fractional_laplacian_pointwise(grid) + drift + np.diag(potential)
    return OperatorMatrix(grid, grid.weight * pointwise, 'expansion')


def assemble_sigma_form(sigma: SigmaKernel, Q: ScalarField) -> OperatorMatrix:
    """Row i: C_{n,s} hⁿ Σ_{j≠i} σ(i, j)(u_i − u_j)/|x_i − x_j|^{n+2s} + Q_i u_i, weak convention."""
    grid = sigma.grid
    grid.require_same(Q.grid)
    pointwise = _weighted_laplacian(grid, sigma.sigma) + np.diag(Q.values)
    return OperatorMatrix(grid, grid.weight * pointwise, 'sigma-form')


def conductivity_matrix(gamma: ScalarField, P: Potentials) -> OperatorMatrix:
    """u ↦ (∇·)ˢ_A(Θ ∇ˢ_A u) + q u with Θ(x, y) = √(γ(x)γ(y)), weak convention."""
    gamma.grid.require_same(P.grid)
    validate_conductivity(gamma)
    root = np.sqrt(gamma.values)
    theta = np.outer(root, root)
    grid = P.grid
    matrix = _composed_form(grid, P.A.values, theta) + grid.weight * np.diag(P.q.values)
    return OperatorMatrix(grid, matrix, 'conductivity')


def reduction_qprime(gamma: ScalarField, P: Potentials) -> ScalarField:
    """
    Potential q′ turning the conductivity equation into a magnetic Schrödinger one.

    With g = γ^{1/2}:
    q′ = q/γ − (∇·)ˢA_{s∥} + (∇·)ˢ(A g(y))/g(x) − (−Δ)ˢg/g
         + hⁿ Σ_j (−∇ˢg·A/g(x) + |A|²(g(y)/g(x) − 1)).
    """
    gamma.grid.require_same(P.grid)
    validate_conductivity(gamma)
    grid = P.grid
    g = np.sqrt(gamma.values)
    root = ScalarField(grid, g)
    A = P.A.values

    grad_g = frac_gradient(root)
    laplacian_g = frac_divergence(grad_g).values
    weighted = divergence_values(grid, A * g[None, :, None])
    sym_par = divergence_values(grid, sym_parallel_part(P.A).values)
    cross = np.einsum('ijk,ijk->ij', grad_g.values, A)
    ratio = g[None, :] / g[:, None]
    pair_sum = grid.weight * np.sum(-cross / g[:, None] + P.A.squared_norms * (ratio - 1.0), axis=1)

    qprime = P.q.values / gamma.values - sym_par + weighted / g - laplacian_g / g + pair_sum
    return ScalarField(grid, qprime)


def reduced_potentials(gamma: ScalarField, P: Potentials) -> Potentials:
    """(A, q′) for the conductivity reduction; q′ may be nonzero outside Ω."""
    return Potentials(P.A, reduction_qprime(gamma, P), enforce_support=False, label=f"{P.label}-reduced")


def reduction_identity_residual(gamma: ScalarField, P: Potentials, w: ScalarField) -> float:
    """
    Relative mismatch of C(γ^{−1/2}w) + qγ^{−1/2}w against γ^{1/2}((−Δ)ˢ_A + q′)w, weak form.
    """
    g = np.sqrt(gamma.values)
    lhs = conductivity_matrix(gamma, P).matrix @ (w.values / g)
    rhs = g * (assemble_expansion(reduced_potentials(gamma, P)).matrix @ w.values)
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), np.finfo(float).tiny)
    return float(np.linalg.norm(lhs - rhs) / scale)


@dataclass(frozen=True)
class FourierFitReport:
    """Least-squares fit of the pairwise-gradient transform against the symbol model."""

    k_fit: float
    residual: float
    N: int
    s: float
    box: Tuple[float, float]
    real_fraction: float
    diagonal: str

    def as_dict(self) -> dict:
        return {
            'k_fit': self.k_fit, 'residual': self.residual, 'N': self.N, 's': self.s,
            'box': list(self.box), 'real_fraction': self.real_fraction, 'diagonal': self.diagonal,
        }


def fourier_symbol_check(s: float,
                         N: int,
                         box: Tuple[float, float] = (-8.0, 8.0),
                         n: int = 1) -> FourierFitReport:
    """
    Fit ℱ(∇ˢu)(ξ, η) ≈ i·k·(ξ|ξ|^{s−3/2} + η|η|^{s−3/2}) ℱu(ξ + η) for the unit Gaussian.

    The transform uses the continuum phase and weight, F = h² e^{−i x₀(ξ+η)} DFT(G), on
    frequencies ξ_a = 2πa/(Nh). For a real, even u the transform is purely imaginary,
    hence the model carries the factor i and k is a real scalar. Pairs with ξ = 0 or
    η = 0 are excluded. For s = 1/2 the pairwise gradient has the finite diagonal
    limit −C^{1/2}/√2 · u′(x), which is used in place of the zero diagonal.
    """
    if n != 1:
        raise GridError("the Fourier symbol check is implemented for n = 1 only")
    if N < 4 or N & (N - 1):
        raise GridError(f"N={N} must be a power of two")
    if not (0.0 < s < 1.0):
        raise GridError(f"fractional order s={s} must lie strictly inside (0, 1)")

    lower, upper = float(box[0]), float(box[1])
    x = np.linspace(lower, upper, N)
    h = (upper - lower) / (N - 1)
    u = np.exp(-0.5 * x ** 2)
    scale = np.sqrt(c_ns(1, s) / 2.0)

    difference = x[None, :] - x[:, None]
    distance = np.abs(difference)
    np.fill_diagonal(distance, 1.0)
    alpha = scale * difference / distance ** (s + 1.5)
    np.fill_diagonal(alpha, 0.0)
    G = (u[:, None] - u[None, :]) * alpha
    diagonal = 'zero'
    if np.isclose(s, 0.5):
        np.fill_diagonal(G, scale * x * u)
        diagonal = 'limit'

    frequencies = 2.0 * np.pi * np.fft.fftfreq(N, d=h)
    xi, eta = np.meshgrid(frequencies, frequencies, indexing='ij')
    transform = h ** 2 * np.exp(-1j * lower * (xi + eta)) * np.fft.fft2(G)

    mask = (xi != 0.0) & (eta != 0.0)
    u_hat = np.sqrt(2.0 * np.pi) * np.exp(-0.5 * (xi + eta) ** 2)
    model = np.zeros_like(xi)
    model[mask] = (
        np.sign(xi[mask]) * np.abs(xi[mask]) ** (s - 0.5)
        + np.sign(eta[mask]) * np.abs(eta[mask]) ** (s - 0.5)
    ) * u_hat[mask]

    data = transform[mask]
    basis = model[mask]
    k_fit = float(np.sum(basis * data.imag) / np.sum(basis ** 2))
    data_norm = np.linalg.norm(data)
    residual = float(np.linalg.norm(data - 1j * k_fit * basis) / data_norm)
    real_fraction = float(np.linalg.norm(data.real) / data_norm)
    logger.info(f"Fourier symbol fit: s={s}, N={N}, box={box}, k={k_fit:.6g}, residual={residual:.3e}")
    return FourierFitReport(
        k_fit=k_fit, residual=residual, N=N, s=s, box=(lower, upper),
        real_fraction=real_fraction, diagonal=diagonal,
    )
