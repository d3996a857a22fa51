"""Covariance kernels C(x, y) and the builtin kernel table.

A kernel carries its evaluator plus the growth bound it asserts,

    |C(x, y)| <= bound * (1 + |x|^2)^(M/2) * (1 + |y|^2)^(M/2),

which kl_engine checks at the grid nodes against the measure in use.
Builtins are looked up by name; ``grid-file`` reads a node-major CSV matrix
already sampled on the run's grid.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from gespfactor.errors import ParseError, ShapeMismatch, ValidationError
from gespfactor.grid_measure import Grid

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CovarianceKernel:
    """Symmetric covariance kernel with a declared polynomial growth bound."""

    name: str
    evaluator: Optional[Evaluator]
    bound: float
    growth_order: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    matrix_samples: Optional[np.ndarray] = field(default=None, repr=False)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Matrix C(x_i, y_j) for point sets x (n, d) and y (m, d)."""
        if self.evaluator is None:
            raise ValidationError(f"kernel {self.name!r} is only known at its grid nodes",
                                  module="kl_engine", precondition="kernel has an evaluator")
        return self.evaluator(np.atleast_2d(x), np.atleast_2d(y))

    def matrix(self, grid: Grid) -> np.ndarray:
        if self.matrix_samples is not None:
            if self.matrix_samples.shape != (grid.node_count, grid.node_count):
                raise ShapeMismatch(
                    f"grid-file kernel is {self.matrix_samples.shape[0]}x{self.matrix_samples.shape[1]}, "
                    f"grid has {grid.node_count} nodes",
                    details={"shape": list(self.matrix_samples.shape), "nodes": grid.node_count},
                )
            return np.array(self.matrix_samples, dtype=float)
        return self.evaluate(grid.nodes, grid.nodes)

    def to_record(self) -> Dict[str, Any]:
        record = {"name": self.name, "bound": float(self.bound), "growth_order": int(self.growth_order)}
        record.update(self.params)
        return record


# -- builtin evaluators ------------------------------------------------------

def _gaussian(variance: float, length_scale: float) -> Evaluator:
    def evaluate(x, y):
        sq = cdist(x, y, "sqeuclidean")
        return variance * np.exp(-sq / (2.0 * length_scale ** 2))
    return evaluate


def _exponential(variance: float, length_scale: float) -> Evaluator:
    def evaluate(x, y):
        return variance * np.exp(-cdist(x, y, "euclidean") / length_scale)
    return evaluate


def _brownian() -> Evaluator:
    def evaluate(x, y):
        out = np.ones((x.shape[0], y.shape[0]))
        for axis in range(x.shape[1]):
            s = x[:, axis][:, None]
            t = y[:, axis][None, :]
            inside = (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
            out *= np.where(inside, np.minimum(s, t), 0.0)
        return out
    return evaluate


def _ground_state(points: np.ndarray) -> np.ndarray:
    return np.prod(math.pi ** -0.25 * np.exp(-0.5 * points ** 2), axis=1)


def _rank1(amplitude: float) -> Evaluator:
    def evaluate(x, y):
        return amplitude * np.outer(_ground_state(x), _ground_state(y))
    return evaluate


def _zero() -> Evaluator:
    def evaluate(x, y):
        return np.zeros((x.shape[0], y.shape[0]))
    return evaluate


def _polynomial_growth(length_scale: float) -> Evaluator:
    def evaluate(x, y):
        sq = cdist(x, y, "sqeuclidean")
        return (1.0 + x @ y.T) ** 2 * np.exp(-sq / (2.0 * length_scale ** 2))
    return evaluate


def _positive(name: str, value: Any, kernel: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        number = float("nan")
    if not (number > 0) or not math.isfinite(number):
        raise ValidationError(f"kernel {kernel!r}: {name} must be a positive number, got {value!r}",
                              module="kl_engine", precondition=f"{name} > 0",
                              details={"kernel": kernel, "field": name})
    return number


def gaussian_kernel(variance: float = 1.0, length_scale: float = 1.0) -> CovarianceKernel:
    variance = _positive("variance", variance, "gaussian")
    length_scale = _positive("length_scale", length_scale, "gaussian")
    return CovarianceKernel("gaussian", _gaussian(variance, length_scale), bound=variance,
                            params={"variance": variance, "length_scale": length_scale})


def exponential_kernel(variance: float = 1.0, length_scale: float = 1.0) -> CovarianceKernel:
    variance = _positive("variance", variance, "exponential")
    length_scale = _positive("length_scale", length_scale, "exponential")
    return CovarianceKernel("exponential", _exponential(variance, length_scale), bound=variance,
                            params={"variance": variance, "length_scale": length_scale})


def brownian_kernel() -> CovarianceKernel:
    """prod_k min(s_k, t_k) on [0, 1]^d, zero outside the unit cube."""
    return CovarianceKernel("brownian", _brownian(), bound=1.0)


def rank1_kernel(amplitude: float = 1.0, dimension: int = 1) -> CovarianceKernel:
    """amplitude * phi(x) phi(y) with phi the ground-state Hermite function."""
    amplitude = float(amplitude)
    if amplitude < 0 or not math.isfinite(amplitude):
        raise ValidationError(f"kernel 'rank1': amplitude must be >= 0, got {amplitude!r}",
                              module="kl_engine", precondition="amplitude >= 0",
                              details={"kernel": "rank1", "field": "amplitude"})
    return CovarianceKernel("rank1", _rank1(amplitude), bound=amplitude * math.pi ** (-dimension / 2.0),
                            params={"amplitude": amplitude})


def zero_kernel() -> CovarianceKernel:
    return CovarianceKernel("zero", _zero(), bound=0.0)


def polynomial_growth_kernel(length_scale: float = 1.0) -> CovarianceKernel:
    """(1 + x.y)^2 exp(-|x-y|^2 / 2l^2); grows like |x|^2 |y|^2 off the diagonal band, so M = 2."""
    length_scale = _positive("length_scale", length_scale, "polynomial-growth-demo")
    return CovarianceKernel("polynomial-growth-demo", _polynomial_growth(length_scale), bound=1.0,
                            growth_order=2, params={"length_scale": length_scale})


def load_matrix_csv(path: Union[str, Path]) -> np.ndarray:
    """Read a square float matrix from CSV, one row per line."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"kernel file not found: {path}", module="kl_engine",
                              precondition="grid-file path exists", details={"path": str(path)})
    rows = []
    with path.open(newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(f"{path}: line {line_no}: {exc}", line=line_no, field="kernel.path") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ParseError(f"{path}: expected a square matrix, got {len(rows)} rows", field="kernel.path")
    return np.asarray(rows, dtype=float)


def grid_file_kernel(path: Union[str, Path], bound: Optional[float] = None,
                     growth_order: int = 0) -> CovarianceKernel:
    matrix = load_matrix_csv(path)
    matrix.setflags(write=False)
    declared = float(np.max(np.abs(matrix))) if bound is None else float(bound)
    return CovarianceKernel("grid-file", None, bound=declared, growth_order=int(growth_order),
                            params={"path": str(path)}, matrix_samples=matrix)


BUILTIN_KERNELS = ("gaussian", "exponential", "brownian", "rank1", "zero",
                   "polynomial-growth-demo", "grid-file")

_FACTORIES: Dict[str, Callable[..., CovarianceKernel]] = {
    "gaussian": gaussian_kernel,
    "exponential": exponential_kernel,
    "brownian": brownian_kernel,
    "rank1": rank1_kernel,
    "zero": zero_kernel,
    "polynomial-growth-demo": polynomial_growth_kernel,
    "grid-file": grid_file_kernel,
}


def make_kernel(spec: Union[str, Mapping[str, Any]], dimension: int = 1) -> CovarianceKernel:
    """Resolve a config kernel entry (a name, or ``{name, ...params}``) into a kernel."""
    if isinstance(spec, str):
        name, params = spec, {}
    elif isinstance(spec, Mapping):
        params = dict(spec)
        name = params.pop("name", None)
    else:
        raise ValidationError(f"kernel must be a name or an object, got {type(spec).__name__}",
                              module="kl_engine", precondition="kernel spec is a name or object")
    if name not in _FACTORIES:
        raise ValidationError(
            f"unknown kernel {name!r}; builtins are: {', '.join(BUILTIN_KERNELS)}",
            module="kl_engine", precondition="kernel name is a builtin",
            details={"kernel": name, "builtins": list(BUILTIN_KERNELS)},
        )
    if name == "rank1":
        params.setdefault("dimension", dimension)
    try:
        kernel = _FACTORIES[name](**params)
    except TypeError as exc:
        raise ValidationError(f"kernel {name!r}: bad parameters {sorted(params)}: {exc}",
                              module="kl_engine", precondition="kernel parameters are recognised",
                              details={"kernel": name}) from exc
    logger.debug("kernel %s params=%s", name, kernel.params)
    return kernel
