"""Truncated quadrature grids over R^d and the finite weighted measure mu.

The domain R^d is replaced by the box [-R, R]^d carrying a tensor-product
quadrature rule. On top of the grid sits the measure

    d mu(x) = (1 + |x|^2)^-(M + (d+1)/2) dx,

finite for every M >= 0, whose L^2 space hosts the Karhunen-Loeve step. Grids
and measures are immutable once built and are shared read-only by every other
module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy.special import roots_legendre

from gespfactor.errors import DegenerateGrid, DimensionUnsupported, ShapeMismatch

logger = logging.getLogger(__name__)

RULES = ("gauss-legendre", "trapezoid")
MAX_DIMENSION = 3
MIN_POINTS = 2
DEFAULT_HALFWIDTH = 20.0
DEFAULT_POINTS = 256
DEFAULT_RULE = "gauss-legendre"

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product quadrature grid on [-R, R]^d.

    Nodes are stored node-major with the first axis varying slowest
    (``numpy.meshgrid(..., indexing="ij")`` order), which is also the order
    used when a field is reshaped to ``shape`` for the FFT stage.
    """

    dimension: int
    halfwidth: float
    points_per_axis: int
    rule: str
    axis_nodes: np.ndarray
    axis_weights: np.ndarray
    nodes: np.ndarray
    lebesgue_weights: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def is_uniform(self) -> bool:
        return self.rule == "trapezoid"

    @property
    def spacing(self) -> float:
        """Node spacing of a uniform grid (nan for Gauss-Legendre)."""
        if not self.is_uniform:
            return float("nan")
        return 2.0 * self.halfwidth / (self.points_per_axis - 1)

    @property
    def squared_radius(self) -> np.ndarray:
        return np.sum(self.nodes ** 2, axis=1)

    def conform(self, samples: ArrayLike, name: str = "samples") -> np.ndarray:
        """Return samples as a float array whose first axis runs over the nodes.

        Scalars broadcast to a constant field. Anything else must have
        ``node_count`` rows.
        """
        arr = np.asarray(samples, dtype=float)
        if arr.ndim == 0:
            return np.full(self.node_count, float(arr))
        if arr.shape[0] != self.node_count:
            raise ShapeMismatch(
                f"{name} has {arr.shape[0]} rows, grid has {self.node_count} nodes",
                details={"rows": int(arr.shape[0]), "nodes": self.node_count},
            )
        return arr


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """The finite measure mu evaluated at the nodes of a grid.

    With ``lebesgue=True`` the density is identically 1 (plain Lebesgue
    quadrature), which is admissible for kernels supported on a compact set.
    """

    M: int
    dimension: int
    density: np.ndarray
    effective_weights: np.ndarray
    lebesgue: bool = False
    grid: Grid = field(repr=False, default=None)

    @property
    def exponent(self) -> float:
        """Exponent e of mu's density (1+|x|^2)^-e; zero under the Lebesgue override."""
        if self.lebesgue:
            return 0.0
        return density_exponent(self.M, self.dimension)

    @property
    def weight_exponent(self) -> float:
        """Exponent p of the weight multiplication L_M, with (1+|x|^2)^(-2p) = density."""
        return self.exponent / 2.0

    @property
    def growth_order(self) -> int:
        """Polynomial growth order a kernel may have against this measure."""
        return 0 if self.lebesgue else self.M

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.effective_weights))


def density_exponent(M: int, d: int) -> float:
    return M + (d + 1) / 2.0


def weight_exponent(M: int, d: int) -> float:
    """p = M/2 + (d+1)/4, the exponent of L_M."""
    return M / 2.0 + (d + 1) / 4.0


def _axis_rule(R: float, P: int, rule: str) -> Tuple[np.ndarray, np.ndarray]:
    if rule == "gauss-legendre":
        x, w = roots_legendre(P)
        return R * x, R * w
    x = np.linspace(-R, R, P)
    h = 2.0 * R / (P - 1)
    w = np.full(P, h)
    w[0] = w[-1] = h / 2.0
    return x, w


def build_grid(d: int, R: float = DEFAULT_HALFWIDTH, P: int = DEFAULT_POINTS,
               rule: str = DEFAULT_RULE) -> Grid:
    """Build the tensor-product grid of P^d nodes on [-R, R]^d."""
    if not isinstance(d, (int, np.integer)) or d < 1 or d > MAX_DIMENSION:
        raise DimensionUnsupported(f"dimension {d} not supported; expected 1..{MAX_DIMENSION}",
                                   details={"dimension": d})
    if rule not in RULES:
        raise DegenerateGrid(f"unknown quadrature rule {rule!r}; expected one of {', '.join(RULES)}",
                             details={"rule": rule})
    if not (R > 0) or not np.isfinite(R):
        raise DegenerateGrid(f"halfwidth must be positive, got {R}", details={"halfwidth": R})
    if P < MIN_POINTS:
        raise DegenerateGrid(f"points_per_axis must be >= {MIN_POINTS}, got {P}",
                             details={"points_per_axis": P})

    axis_x, axis_w = _axis_rule(float(R), int(P), rule)
    mesh = np.meshgrid(*([axis_x] * d), indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    weights = axis_w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, axis_w)
    weights = np.asarray(weights).reshape(-1)

    for arr in (axis_x, axis_w, nodes, weights):
        arr.setflags(write=False)

    logger.debug("grid d=%d R=%g P=%d rule=%s nodes=%d", d, R, P, rule, nodes.shape[0])
    return Grid(
        dimension=int(d),
        halfwidth=float(R),
        points_per_axis=int(P),
        rule=rule,
        axis_nodes=axis_x,
        axis_weights=axis_w,
        nodes=nodes,
        lebesgue_weights=weights,
    )


def mu_density(x: ArrayLike, M: int, d: int) -> ArrayLike:
    """(1 + |x|^2)^-(M + (d+1)/2).

    For d = 1, ``x`` may be a scalar or an array of scalar points; for d > 1
    the last axis of ``x`` holds coordinates.
    """
    arr = np.asarray(x, dtype=float)
    if d == 1 and not (arr.ndim == 2 and arr.shape[-1] == 1):
        r2 = arr ** 2
    elif d == 1:
        r2 = arr[..., 0] ** 2
    else:
        r2 = np.sum(arr ** 2, axis=-1)
    value = (1.0 + r2) ** (-density_exponent(M, d))
    if np.ndim(value) == 0:
        return float(value)
    return value


def build_measure(grid: Grid, M: int = 0, lebesgue: bool = False) -> WeightedMeasure:
    """Evaluate mu on the grid; ``lebesgue=True`` replaces the density by 1."""
    if M < 0 or int(M) != M:
        raise DegenerateGrid(f"growth order M must be a non-negative integer, got {M}",
                             precondition="M >= 0 integer", details={"M": M})
    if lebesgue:
        density = np.ones(grid.node_count)
    else:
        density = (1.0 + grid.squared_radius) ** (-density_exponent(int(M), grid.dimension))
    effective = grid.lebesgue_weights * density
    density.setflags(write=False)
    effective.setflags(write=False)
    return WeightedMeasure(
        M=int(M),
        dimension=grid.dimension,
        density=density,
        effective_weights=effective,
        lebesgue=bool(lebesgue),
        grid=grid,
    )


def weighted_inner(f_samples: ArrayLike, g_samples: ArrayLike, grid: Grid,
                   measure: WeightedMeasure) -> float:
    """Quadrature approximation of (f, g) in L^2(R^d, mu): sum_i f_i g_i v_i."""
    f = grid.conform(f_samples, "f_samples")
    g = grid.conform(g_samples, "g_samples")
    if f.ndim != 1 or g.ndim != 1:
        raise ShapeMismatch("weighted_inner expects one field per argument; use weighted_gram")
    return float(np.sum(f * g * measure.effective_weights))


def weighted_gram(A: np.ndarray, B: np.ndarray, grid: Grid, measure: WeightedMeasure) -> np.ndarray:
    """Matrix of mu-inner products between the columns of A and B."""
    A = grid.conform(A, "A")
    B = grid.conform(B, "B")
    return A.T @ (B * measure.effective_weights[:, None])


def lebesgue_inner(f_samples: ArrayLike, g_samples: ArrayLike, grid: Grid) -> float:
    """Discrete L^2(R^d) inner product with the plain quadrature weights."""
    f = grid.conform(f_samples, "f_samples")
    g = grid.conform(g_samples, "g_samples")
    return float(np.sum(f * g * grid.lebesgue_weights))


def lebesgue_gram(A: np.ndarray, B: np.ndarray, grid: Grid) -> np.ndarray:
    A = grid.conform(A, "A")
    B = grid.conform(B, "B")
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    return A.T @ (B * grid.lebesgue_weights[:, None])


def embedding_bound(phi_samples: ArrayLike, grid: Grid, measure: WeightedMeasure) -> dict:
    """Compare ||phi||_{L^2(mu)} with sqrt(mu total mass) * max |phi|.

    The Schwartz space embeds continuously in L^2(mu) because mu is finite;
    this is the grid-level form of that bound.
    """
    phi = grid.conform(phi_samples, "phi_samples")
    lhs = float(np.sqrt(max(weighted_inner(phi, phi, grid, measure), 0.0)))
    rhs = float(np.sqrt(measure.total_mass) * np.max(np.abs(phi)))
    return {"norm_mu": lhs, "bound": rhs, "holds": lhs <= rhs * (1.0 + 1e-12)}
