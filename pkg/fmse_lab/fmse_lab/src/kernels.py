"""
The α kernel and the normalization constant C_{n,s}.

α(x, y) = (C_{n,s}^{1/2}/√2)(y − x)/|y − x|^{n/2+s+1}, zero on the diagonal.
Everything pairwise in the lab (gradient, divergence, σ, walk weights) is built on it.
"""
import logging
import weakref
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_function

from .grid import Grid

logger = logging.getLogger(__name__)

_ALPHA_CACHE: "weakref.WeakKeyDictionary[Grid, AlphaKernel]" = weakref.WeakKeyDictionary()


def c_ns(n: int, s: float) -> float:
    """C_{n,s} = 4ˢ Γ(n/2+s) / (π^{n/2} |Γ(−s)|), the constant giving (−Δ)ˢ the symbol |ξ|^{2s}."""
    return float(4.0 ** s * gamma_function(n / 2.0 + s) / (np.pi ** (n / 2.0) * abs(gamma_function(-s))))


@dataclass(frozen=True, eq=False)
class AlphaKernel:
    """α(i, j) for every ordered node pair, shape (N, N, n)."""

    grid: Grid
    alpha: np.ndarray
    c_ns: float

    @property
    def squared(self) -> np.ndarray:
        """|α(i, j)|² = C_{n,s} / (2|x_i − x_j|^{n+2s}), zero on the diagonal."""
        return np.einsum('ijk,ijk->ij', self.alpha, self.alpha)

    def singular_weights(self) -> np.ndarray:
        """1/|x_i − x_j|^{n+2s} off the diagonal, 0 on it."""
        return inverse_power(self.grid, self.grid.n + 2.0 * self.grid.s)


def inverse_power(grid: Grid, exponent: float) -> np.ndarray:
    """|x_i − x_j|^{−exponent} with the diagonal set to zero."""
    distances = grid.distances
    weights = np.zeros_like(distances)
    off_diagonal = distances > 0
    weights[off_diagonal] = distances[off_diagonal] ** (-exponent)
    return weights


def alpha_kernel(grid: Grid) -> AlphaKernel:
    """α on `grid`, cached per grid object."""
    kernel = _ALPHA_CACHE.get(grid)
    if kernel is None:
        constant = c_ns(grid.n, grid.s)
        scale = np.sqrt(constant) / np.sqrt(2.0)
        weights = inverse_power(grid, grid.n / 2.0 + grid.s + 1.0)
        alpha = scale * grid.differences * weights[:, :, None]
        alpha.setflags(write=False)
        kernel = AlphaKernel(grid=grid, alpha=alpha, c_ns=constant)
        _ALPHA_CACHE[grid] = kernel
        logger.debug(f"α kernel assembled for {grid.node_count} nodes (C_ns={constant:.6g})")
    return kernel


def divergence_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """
    (∇·)ˢV at every node: 2hⁿ Σ_j V_s(i, j)·α(i, j).

    Exact adjoint of the pairwise gradient under the rectangle-rule inner products.
    """
    alpha = alpha_kernel(grid).alpha
    symmetric = values + np.swapaxes(values, 0, 1)
    return grid.weight * np.einsum('ijk,ijk->i', symmetric, alpha)
