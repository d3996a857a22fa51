"""Generalized stochastic processes in series form.

A process Z is held as the truncated expansion

    Z(phi) = sum_n sqrt(lambda_n) c_n <T_n, phi>,

with uncorrelated unit-variance coefficients c_n. Every component T_n is a
tempered distribution in factored form: base samples b_n on the grid plus a
FactoredOperator shared by all components, paired with a test function as

    <T_n, phi> = sum_i b_n(x_i) (Op phi)(x_i) w_i

with the plain Lebesgue weights w_i. Z is never sampled pointwise; it is only
observed through its pairings with test functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Union

import numpy as np

from gespfactor.errors import ValidationError
from gespfactor.grid_measure import Grid, WeightedMeasure
from gespfactor.hermite_bank import TestFunctionBank
from gespfactor.kl_engine import KLDecomposition
from gespfactor.mc_verify import LAWS, coefficient_block
from gespfactor.operator_kit import BesselPotential, FactoredOperator, apply_to_test_function, compose, identity

logger = logging.getLogger(__name__)

TestFunctions = Union[np.ndarray, TestFunctionBank]


@dataclass(frozen=True, eq=False)
class TemperedComponent:
    """One T_n: base samples and the operator moved onto test functions."""

    base: np.ndarray
    operator: FactoredOperator
    grid: Grid = field(repr=False)


@dataclass(frozen=True, eq=False)
class GespExpansion:
    variances: np.ndarray
    base: np.ndarray
    operator: FactoredOperator
    grid: Grid = field(repr=False)
    N: int = 0
    M: int = 0
    law: str = "gaussian"
    measure: Optional[WeightedMeasure] = field(default=None, repr=False)
    null_mask: Optional[np.ndarray] = None
    label: str = "Z"

    def __post_init__(self):
        variances = np.asarray(self.variances, dtype=float).reshape(-1)
        if np.any(variances < 0) or not np.all(np.isfinite(variances)):
            raise ValidationError("expansion variances must be finite and >= 0", module="gsp_model",
                                  precondition="lambda_n >= 0")
        base = self.grid.conform(self.base, "base")
        if base.ndim == 1:
            base = base[:, None]
        if base.shape[1] != variances.size:
            raise ValidationError(f"{base.shape[1]} base columns for {variances.size} variances",
                                  module="gsp_model", precondition="one base column per mode")
        if self.law not in LAWS:
            raise ValidationError(f"unknown coefficient law {self.law!r}", module="gsp_model",
                                  precondition="law in {gaussian, rademacher}")
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "base", base)

    @property
    def n_modes(self) -> int:
        return int(self.variances.size)

    @property
    def variance_sq_sum(self) -> float:
        return float(np.sum(self.variances ** 2))

    def component(self, n: int) -> TemperedComponent:
        return TemperedComponent(base=self.base[:, n], operator=self.operator, grid=self.grid)

    def to_record(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "modes": self.n_modes,
            "N": self.N,
            "M": self.M,
            "law": self.law,
            "variances": [float(v) for v in self.variances],
            "variance_sq_sum": self.variance_sq_sum,
            "operator": self.operator.describe(),
        }


@dataclass(frozen=True, eq=False)
class RealizationBatch:
    """``draws`` are the unit-variance coefficients, ``coefficients`` the sqrt(lambda)-scaled ones."""

    draws: np.ndarray
    coefficients: np.ndarray
    evaluations: np.ndarray
    seed: int
    law: str
    stream: str = "data"

    @property
    def realizations(self) -> int:
        return int(self.evaluations.shape[0])

    def seed_record(self) -> Dict[str, Any]:
        return {"seed": self.seed, "law": self.law, "stream": self.stream, "realizations": self.realizations}


def _samples(test_functions: TestFunctions) -> np.ndarray:
    return test_functions.samples if isinstance(test_functions, TestFunctionBank) else test_functions


def evaluate_pairing(component: TemperedComponent, phi: np.ndarray, grid: Optional[Grid] = None,
                     measure: Optional[WeightedMeasure] = None,
                     diagnostics: Optional[dict] = None) -> float:
    """<T_n, phi> = sum_i b_n(x_i) (Op phi)(x_i) w_i.

    ``measure`` is accepted for symmetry with the KL side and ignored: pairings
    are taken against Lebesgue quadrature.
    """
    grid = grid or component.grid
    moved = apply_to_test_function(component.operator, phi, grid, diagnostics)
    return float(np.sum(component.base * moved * grid.lebesgue_weights))


def pairing_matrix(expansion: GespExpansion, test_functions: TestFunctions,
                   diagnostics: Optional[dict] = None) -> np.ndarray:
    """P[n, j] = <T_n, phi_j> for every mode n and test function j."""
    grid = expansion.grid
    phi = grid.conform(_samples(test_functions), "test_functions")
    if phi.ndim == 1:
        phi = phi[:, None]
    moved = apply_to_test_function(expansion.operator, phi, grid, diagnostics)
    return expansion.base.T @ (moved * grid.lebesgue_weights[:, None])


def covariance(expansion: GespExpansion, phi: np.ndarray, psi: np.ndarray) -> float:
    """sum_n lambda_n <T_n, phi> <T_n, psi>."""
    P = pairing_matrix(expansion, np.column_stack([phi, psi]))
    return float(np.sum(expansion.variances * P[:, 0] * P[:, 1]))


def covariance_matrix(expansion: GespExpansion, test_functions: TestFunctions,
                      diagnostics: Optional[dict] = None) -> np.ndarray:
    P = pairing_matrix(expansion, test_functions, diagnostics)
    return P.T @ (expansion.variances[:, None] * P)


def apply_adjoint(expansion: GespExpansion, op: FactoredOperator, label: Optional[str] = None) -> GespExpansion:
    """The process phi -> Z(op phi): same variances and bases, op composed onto every T_n."""
    if op.is_identity:
        return replace(expansion, label=label or expansion.label)
    return replace(expansion, operator=compose(op, expansion.operator), label=label or expansion.label)


def realize(expansion: GespExpansion, seed: int, test_functions: TestFunctions, R: int,
            stream: str = "data", diagnostics: Optional[dict] = None) -> RealizationBatch:
    """Draw R realizations and evaluate them on the test functions.

    Evaluations are Z_r(phi_j) = sum_n sqrt(lambda_n) c_{r,n} <T_n, phi_j>.
    """
    if R < 1:
        raise ValidationError(f"R must be >= 1, got {R}", module="gsp_model", precondition="R >= 1")
    draws = coefficient_block(seed, expansion.law, R, expansion.n_modes, stream)
    scaled = draws * np.sqrt(expansion.variances)[None, :]
    P = pairing_matrix(expansion, test_functions, diagnostics)
    evaluations = scaled @ P
    logger.debug("realize %s R=%d modes=%d seed=%d stream=%s", expansion.label, R, expansion.n_modes,
                 seed, stream)
    return RealizationBatch(draws=draws, coefficients=scaled, evaluations=evaluations, seed=int(seed),
                            law=expansion.law, stream=stream)


def expansion_from_decomposition(decomp: KLDecomposition, N: int = 0, M: int = 0,
                                 law: str = "gaussian", label: str = "Z") -> GespExpansion:
    """Z = sum_n sqrt(lambda_n) c_n (1 - Laplacian)^(N/2) f_n, with N0 modes at variance 0."""
    if N < 0 or int(N) != N:
        raise ValidationError(f"regularity order N must be a non-negative integer, got {N}",
                              module="gsp_model", precondition="N >= 0 integer")
    variances = np.where(decomp.null_mask, 0.0, decomp.eigenvalues)
    op = FactoredOperator((BesselPotential(N / 2.0),)) if N else identity()
    return GespExpansion(variances=variances, base=decomp.f, operator=op, grid=decomp.grid, N=int(N),
                         M=int(M), law=law, measure=decomp.measure, null_mask=decomp.null_mask, label=label)
