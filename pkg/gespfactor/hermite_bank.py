"""Orthonormal Hermite functions and the test-function bank built from them.

The Hermite functions h_n(x) = (2^n n! sqrt(pi))^-1/2 H_n(x) exp(-x^2/2) form
an orthonormal basis of L^2(R) made of Schwartz functions. They serve twice:
as the default bank of test functions every verification pairs against, and
as the target basis the whitening step relabels positive KL modes onto.

Values come from the normalized three-term recurrence

    h_n(x) = x sqrt(2/n) h_{n-1}(x) - sqrt((n-1)/n) h_{n-2}(x),

which never forms H_n or n! and therefore stays finite for large n (far tails
underflow to zero, which is accepted).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from gespfactor.errors import UnderResolved, ValidationError
from gespfactor.grid_measure import Grid, lebesgue_gram

logger = logging.getLogger(__name__)

GRAM_TOLERANCE = 1e-6
PI_QUARTER = math.pi ** -0.25


@dataclass(frozen=True, eq=False)
class TestFunctionBank:
    """The first K tensor Hermite functions sampled on a grid.

    ``samples`` is node-major: column j holds member j at every node.
    """

    __test__ = False  # not a pytest class

    count: int
    samples: np.ndarray
    labels: Tuple[Tuple[int, ...], ...]
    gram_l2: np.ndarray
    grid: Grid

    @property
    def gram_error(self) -> float:
        return float(np.max(np.abs(self.gram_l2 - np.eye(self.count))))

    def member(self, j: int) -> np.ndarray:
        return self.samples[:, j]


def hermite_table(n_max: int, x: Union[float, np.ndarray]) -> np.ndarray:
    """All Hermite functions h_0..h_{n_max} at x; shape (n_max + 1,) + shape(x)."""
    x = np.asarray(x, dtype=float)
    table = np.empty((n_max + 1,) + x.shape)
    table[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if n_max >= 1:
        table[1] = math.sqrt(2.0) * x * table[0]
    for n in range(2, n_max + 1):
        table[n] = x * math.sqrt(2.0 / n) * table[n - 1] - math.sqrt((n - 1) / n) * table[n - 2]
    return table


def hermite_function(n: int, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """h_n(x), the L^2(R)-orthonormal Hermite function of order n."""
    if n < 0 or int(n) != n:
        raise ValidationError(f"Hermite order must be a non-negative integer, got {n}",
                              module="hermite_bank", precondition="n >= 0")
    value = hermite_table(int(n), x)[int(n)]
    if np.ndim(value) == 0:
        return float(value)
    return value


def _graded_key(index: Tuple[int, ...]) -> Tuple:
    return (sum(index), max(index), tuple(-c for c in index))


def multi_indices(count: int, d: int) -> List[Tuple[int, ...]]:
    """First ``count`` multi-indices in graded order.

    Order is by total degree, then by the largest single-axis order, then
    earlier axes first, so for d=2 the sequence starts
    (0,0), (1,0), (0,1), (1,1), (2,0), (0,2), (2,1), (1,2), ...
    """
    if d == 1:
        return [(n,) for n in range(count)]
    found: List[Tuple[int, ...]] = []
    degree = 0
    while len(found) < count:
        shell = [idx for idx in itertools.product(range(degree + 1), repeat=d) if sum(idx) == degree]
        found.extend(sorted(shell, key=_graded_key))
        degree += 1
    return found[:count]


def hermite_samples(count: int, grid: Grid) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    """Samples (nodes x count) of the first ``count`` tensor Hermite functions."""
    labels = multi_indices(count, grid.dimension)
    top = max(max(idx) for idx in labels) if labels else 0
    axis_table = hermite_table(top, grid.nodes)  # (top+1, nodes, d)
    columns = np.empty((grid.node_count, count))
    for j, idx in enumerate(labels):
        col = np.ones(grid.node_count)
        for axis, order in enumerate(idx):
            col = col * axis_table[order, :, axis]
        columns[:, j] = col
    return columns, labels


def build_bank(K: int, grid: Grid, check: bool = True) -> TestFunctionBank:
    """Sample the first K Hermite functions on ``grid`` and attach their L^2 Gram.

    Raises UnderResolved when the discrete Gram matrix deviates from the
    identity by more than 1e-6 (the grid cannot tell the members apart).
    """
    if K < 1:
        raise ValidationError(f"bank size must be >= 1, got {K}", module="hermite_bank",
                              precondition="K >= 1")
    samples, labels = hermite_samples(int(K), grid)
    gram = lebesgue_gram(samples, samples, grid)
    samples.setflags(write=False)
    gram.setflags(write=False)
    bank = TestFunctionBank(count=int(K), samples=samples, labels=tuple(labels), gram_l2=gram, grid=grid)
    if check and bank.gram_error > GRAM_TOLERANCE:
        raise UnderResolved(
            f"Hermite bank of size {K} is under-resolved on this grid "
            f"(max |G - I| = {bank.gram_error:.3e}); increase P or R",
            details={"K": int(K), "gram_error": bank.gram_error,
                     "halfwidth": grid.halfwidth, "points_per_axis": grid.points_per_axis},
        )
    logger.debug("bank K=%d gram_error=%.3e", K, bank.gram_error)
    return bank


def projection_error(target: np.ndarray, bank: TestFunctionBank) -> float:
    """L^2 norm of target minus its projection on the bank members."""
    grid = bank.grid
    coeffs = lebesgue_gram(bank.samples, target, grid)[:, 0]
    residual = target - bank.samples @ coeffs
    return float(np.sqrt(max(lebesgue_gram(residual, residual, grid)[0, 0], 0.0)))
