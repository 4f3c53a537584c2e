"""
Truncated computational lattice for the FMSE lab.

The box B stands in for ℝⁿ: every integral over ℝⁿ becomes a rectangle-rule sum over
the box nodes with the uniform weight hⁿ, and every integral over ℝ²ⁿ a double sum with
weight h²ⁿ. With this quadrature the discrete gradient/divergence pair is exactly
adjoint, so the operator identities checked elsewhere hold as finite-sum identities.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from fmse_lab.core.utils import array_digest
from .exceptions import GridError, FieldError

logger = logging.getLogger(__name__)

# Smallest lattice that leaves a nonempty Ω inside a collar of exterior nodes on every axis.
MIN_NODES_PER_AXIS = 6

OmegaPredicate = Callable[[np.ndarray], np.ndarray]


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Uniform lattice on the box B with the Ω / exterior node partition.

    Nodes are ordered lexicographically (first axis slowest). `omega_mask` marks
    nodes strictly inside the open set Ω; all other nodes are exterior.
    """

    n: int
    s: float
    box_min: np.ndarray
    box_max: np.ndarray
    nodes_per_axis: int
    h: float
    nodes: np.ndarray
    omega_mask: np.ndarray

    @property
    def exterior_mask(self) -> np.ndarray:
        return ~self.omega_mask

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def weight(self) -> float:
        """Quadrature weight hⁿ of a single node."""
        return self.h ** self.n

    @cached_property
    def omega_indices(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.omega_mask))

    @cached_property
    def exterior_indices(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.exterior_mask))

    @cached_property
    def lattice_indices(self) -> np.ndarray:
        """Integer lattice coordinates of every node, shape (node_count, n)."""
        return _readonly(np.rint((self.nodes - self.box_min) / self.h).astype(np.int64))

    @cached_property
    def differences(self) -> np.ndarray:
        """x_j − x_i for every ordered pair, shape (N, N, n)."""
        return _readonly(self.nodes[None, :, :] - self.nodes[:, None, :])

    @cached_property
    def distances(self) -> np.ndarray:
        """|x_i − x_j|, zero on the diagonal."""
        return _readonly(np.linalg.norm(self.differences, axis=-1))

    @cached_property
    def digest(self) -> str:
        return array_digest(
            np.array([self.n, self.nodes_per_axis]), np.array([self.s, self.h]),
            self.box_min, self.box_max, self.omega_mask,
        )

    def same_as(self, other: "Grid") -> bool:
        return self is other or self.digest == other.digest

    def require_same(self, other: "Grid") -> None:
        """Raise GridError unless `other` describes the same lattice."""
        if not self.same_as(other):
            raise GridError("objects live on different grids")

    def axis_coordinates(self, axis: int = 0) -> np.ndarray:
        return np.linspace(self.box_min[axis], self.box_max[axis], self.nodes_per_axis)

    def nearest_node(self, point: Sequence[float]) -> int:
        """Index of the node closest to `point`."""
        offsets = self.nodes - np.asarray(point, dtype=float)[None, :]
        return int(np.argmin(np.einsum('ik,ik->i', offsets, offsets)))

    def describe(self) -> dict:
        return {
            'n': self.n,
            's': self.s,
            'box': [[float(a), float(b)] for a, b in zip(self.box_min, self.box_max)],
            'nodes_per_axis': self.nodes_per_axis,
            'h': self.h,
            'node_count': self.node_count,
            'omega_nodes': int(self.omega_mask.sum()),
            'exterior_nodes': int(self.exterior_mask.sum()),
            'grid_hash': self.digest,
        }


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real value per grid node (u, f, q, w, γ, φ ...)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise FieldError(
                f"scalar field has shape {values.shape}, grid has {self.grid.node_count} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise FieldError("scalar field contains non-finite values")
        object.__setattr__(self, 'values', _readonly(values))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.node_count, float(value)))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls.constant(grid, 0.0)

    @classmethod
    def from_function(cls, grid: Grid, function: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Sample a vectorized function of the node coordinates (shape (N, n))."""
        return cls(grid, function(grid.nodes))

    @classmethod
    def from_exterior(cls, grid: Grid, exterior_values: Sequence[float]) -> "ScalarField":
        """Extend exterior data by zero into Ω."""
        values = np.zeros(grid.node_count)
        exterior_values = np.asarray(exterior_values, dtype=float)
        if exterior_values.shape != (grid.exterior_indices.size,):
            raise FieldError(
                f"expected {grid.exterior_indices.size} exterior values, got {exterior_values.shape}"
            )
        values[grid.exterior_indices] = exterior_values
        return cls(grid, values)

    @property
    def exterior_values(self) -> np.ndarray:
        return self.values[self.grid.exterior_indices]

    @property
    def omega_values(self) -> np.ndarray:
        return self.values[self.grid.omega_indices]

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


def _omega_membership(nodes: np.ndarray, h: float, omega: Union[Mapping, OmegaPredicate]) -> np.ndarray:
    # Points within eps of ∂Ω are exterior (Ω is open).
    eps = 1e-9 * h
    if callable(omega):
        return np.asarray(omega(nodes), dtype=bool)

    if 'box' in omega:
        bounds = np.asarray(omega['box'], dtype=float)
        if bounds.shape != (nodes.shape[1], 2):
            raise GridError(f"omega box must have {nodes.shape[1]} [min, max] pairs")
        lower, upper = bounds[:, 0], bounds[:, 1]
        return np.all((nodes > lower + eps) & (nodes < upper - eps), axis=1)

    if 'ball' in omega:
        ball = omega['ball']
        center = np.asarray(ball['center'], dtype=float)
        radius = float(ball['radius'])
        if center.shape != (nodes.shape[1],) or radius <= 0:
            raise GridError("omega ball needs an n-dimensional center and a positive radius")
        return np.linalg.norm(nodes - center, axis=1) < radius - eps

    raise GridError("omega must be {'box': ...}, {'ball': ...} or a predicate")


def make_grid(n: int,
              s: float,
              box: Sequence[Sequence[float]],
              nodes_per_axis: int,
              omega: Union[Mapping, OmegaPredicate]) -> Grid:
    """
    Build a Grid from plain arguments.

    Args:
        n: dimension, 1 or 2
        s: fractional order in the open interval (0, 1)
        box: [[min, max], ...] per axis; every axis must give the same spacing
        nodes_per_axis: N ≥ 6
        omega: {'box': [[min, max], ...]}, {'ball': {'center': [...], 'radius': r}}
               or a vectorized predicate over node coordinates

    Raises:
        GridError: any precondition of the lattice is violated
    """
    if n not in (1, 2):
        raise GridError(f"dimension n={n} not supported (n must be 1 or 2)")
    if not (0.0 < s < 1.0):
        raise GridError(f"fractional order s={s} must lie strictly inside (0, 1)")
    if nodes_per_axis < MIN_NODES_PER_AXIS:
        raise GridError(
            f"nodes_per_axis={nodes_per_axis}: at least {MIN_NODES_PER_AXIS} are needed "
            "for a collar of exterior nodes around Ω"
        )

    bounds = np.asarray(box, dtype=float)
    if bounds.shape != (n, 2):
        raise GridError(f"box must list {n} [min, max] pairs, got shape {bounds.shape}")
    box_min, box_max = bounds[:, 0], bounds[:, 1]
    if np.any(box_max <= box_min):
        raise GridError("box max must exceed box min on every axis")

    spacings = (box_max - box_min) / (nodes_per_axis - 1)
    if not np.allclose(spacings, spacings[0], rtol=1e-12, atol=0.0):
        raise GridError(f"box axes give different spacings {spacings.tolist()}")
    h = float(spacings[0])

    axes = [np.linspace(box_min[k], box_max[k], nodes_per_axis) for k in range(n)]
    mesh = np.meshgrid(*axes, indexing='ij')
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)

    omega_mask = _omega_membership(nodes, h, omega)
    if not omega_mask.any():
        raise GridError("Ω contains no grid nodes")
    if omega_mask.all():
        raise GridError("exterior of Ω contains no grid nodes")

    lattice = np.rint((nodes - box_min) / h).astype(np.int64)
    on_boundary = np.any((lattice == 0) | (lattice == nodes_per_axis - 1), axis=1)
    if np.any(omega_mask & on_boundary):
        raise GridError("Ω touches the box boundary: a collar of at least one exterior node is required")

    grid = Grid(
        n=n,
        s=float(s),
        box_min=_readonly(box_min),
        box_max=_readonly(box_max),
        nodes_per_axis=int(nodes_per_axis),
        h=h,
        nodes=_readonly(nodes),
        omega_mask=_readonly(omega_mask),
    )
    logger.debug(
        f"Grid built: n={n}, s={s}, N={nodes_per_axis}, h={h:.4g}, "
        f"{int(omega_mask.sum())} Ω nodes / {int((~omega_mask).sum())} exterior nodes"
    )
    return grid


def build_grid(config) -> Grid:
    """
    Build a Grid from a grid configuration (JSON mapping or GridSettings model).

    The JSON form is {"n", "s", "box", "nodes_per_axis", "omega": {"box"|"ball"}}.
    """
    from .schemas import GridSettings

    settings = config if isinstance(config, GridSettings) else GridSettings.parse_mapping(config)
    return make_grid(
        n=settings.n,
        s=settings.s,
        box=settings.box,
        nodes_per_axis=settings.nodes_per_axis,
        omega=settings.omega_mapping(),
    )


def inner_product(u: ScalarField, v: ScalarField) -> float:
    """⟨u, v⟩ = hⁿ Σ_i u_i v_i over all box nodes."""
    u.grid.require_same(v.grid)
    return float(u.grid.weight * np.dot(u.values, v.values))


def pair_inner_product(V, W) -> float:
    """
    ⟨V, W⟩ = h²ⁿ Σ_{i,j} V_ij · W_ij for bivariate vector fields.

    The diagonal i = j is included; gradient-type fields vanish there.
    """
    V.grid.require_same(W.grid)
    weight = V.grid.weight ** 2
    return float(weight * np.einsum('ijk,ijk->', V.values, W.values))


def l2_norm(u: ScalarField) -> float:
    return float(np.sqrt(inner_product(u, u)))
