"""Coloring (Z = L W) and whitening (L_w Z = W) of generalized processes.

Coloring starts from a covariance kernel C_Y, decomposes its operator on
L^2(mu_M) and builds

    L = (1 - Laplacian)^(N/2) o L_M o L_Q,    L_M = (1+|x|^2)^p, p = M/2 + (d+1)/4,

with L_Q the spectral diagonal sum_n sqrt(lambda_n) (., g_n) g_n. The white
noise W takes the data coefficients of Z on the positive modes and
independent fill draws on N0. Because L_Q g_n = 0 on N0, the fill never
reaches L W.

Whitening relabels the positive modes onto Hermite functions,

    L_w = R_gamma o L_M^-1 o (1 - Laplacian)^(-N/2),

where R_gamma sends the RKHS basis h_n = sqrt(lambda_n) g_n to the Hermite
function of index gamma(n). It needs at least K_target positive modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from gespfactor.errors import BasisNotOrthonormal, FiniteRank, ValidationError
from gespfactor.grid_measure import Grid, WeightedMeasure, build_measure, lebesgue_gram
from gespfactor.hermite_bank import TestFunctionBank, build_bank, hermite_samples
from gespfactor.kernels import CovarianceKernel
from gespfactor.kl_engine import DEFAULT_ZERO_TOL, KLDecomposition, decompose, project_field
from gespfactor.gsp_model import (
    GespExpansion,
    RealizationBatch,
    apply_adjoint,
    covariance_matrix,
    expansion_from_decomposition,
    realize,
)
from gespfactor.mc_verify import (
    DEFAULT_Z_THRESHOLD,
    coefficient_block,
    compare,
    empirical_covariance,
    max_cross_correlation,
)
from gespfactor.operator_kit import (
    BesselPotential,
    CoefficientRelabel,
    FactoredOperator,
    SpectralDiagonal,
    WeightMultiply,
    apply_to_test_function,
    identity,
)

logger = logging.getLogger(__name__)

ORTHONORMALITY_TOLERANCE = 1e-8
MATRIX_TOLERANCE = 1e-8
PIPELINE_TOLERANCE = 1e-10


# -- white noise --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WhiteNoiseModel:
    """W(phi) = sum_n c_n (phi, g_n) over an L^2-orthonormal basis.

    Modes flagged in ``data_mask`` take their coefficients from data: either
    ``data_coefficients`` (R x n, e.g. whitened observations) or the seeded
    "data" stream shared with the colored process. Every other mode draws
    from the independent "fill" stream.
    """

    basis: np.ndarray
    grid: Grid = field(repr=False)
    data_mask: np.ndarray = None
    seed: int = 0
    law: str = "gaussian"
    data_coefficients: Optional[np.ndarray] = field(default=None, repr=False)
    orthonormality_error: float = 0.0

    @property
    def n_modes(self) -> int:
        return int(self.basis.shape[1])

    @property
    def fill_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.data_mask)

    @property
    def data_indices(self) -> np.ndarray:
        return np.flatnonzero(self.data_mask)

    def coefficients(self, R: int, fill: bool = True) -> np.ndarray:
        """R x n unit-variance coefficients; ``fill=False`` zeroes the fill modes."""
        if self.data_coefficients is not None:
            data = np.asarray(self.data_coefficients, dtype=float)
            if data.shape[0] < R:
                raise ValidationError(f"only {data.shape[0]} data realizations for R={R}",
                                      module="factorization", precondition="R <= data realizations")
            data = data[:R]
        else:
            data = coefficient_block(self.seed, self.law, R, self.n_modes, "data")
        out = np.where(self.data_mask[None, :], data, 0.0)
        if fill and self.fill_indices.size:
            drawn = coefficient_block(self.seed, self.law, R, self.n_modes, "fill")
            out[:, self.fill_indices] = drawn[:, self.fill_indices]
        return out

    def as_expansion(self, label: str = "W") -> GespExpansion:
        return GespExpansion(variances=np.ones(self.n_modes), base=self.basis, operator=identity(),
                             grid=self.grid, law=self.law, label=label)

    def to_record(self) -> Dict[str, Any]:
        return {
            "modes": self.n_modes,
            "data_modes": [int(i) for i in self.data_indices],
            "fill_modes": [int(i) for i in self.fill_indices],
            "seed": self.seed,
            "law": self.law,
            "orthonormality_error": self.orthonormality_error,
            "data_source": "observed" if self.data_coefficients is not None else "stream",
        }


def build_white_noise(basis: np.ndarray, grid: Grid, data_coefficients: Optional[np.ndarray] = None,
                      data_mask: Optional[np.ndarray] = None, seed: int = 0,
                      law: str = "gaussian") -> WhiteNoiseModel:
    """White noise over any discretely L^2-orthonormal basis."""
    basis = grid.conform(basis, "basis")
    if basis.ndim == 1:
        basis = basis[:, None]
    gram = lebesgue_gram(basis, basis, grid)
    error = float(np.max(np.abs(gram - np.eye(basis.shape[1]))))
    if error > ORTHONORMALITY_TOLERANCE:
        raise BasisNotOrthonormal(f"basis deviates from L^2-orthonormality by {error:.3e}",
                                  details={"error": error})
    n = basis.shape[1]
    if data_mask is None:
        data_mask = np.full(n, data_coefficients is not None)
    data_mask = np.asarray(data_mask, dtype=bool)
    if data_mask.shape != (n,):
        raise ValidationError(f"data_mask has shape {data_mask.shape}, basis has {n} members",
                              module="factorization", precondition="one mask entry per basis member")
    if data_coefficients is not None and np.shape(data_coefficients)[1] != n:
        raise ValidationError("data coefficients need one column per basis member",
                              module="factorization", precondition="data coefficients R x n")
    return WhiteNoiseModel(basis=basis, grid=grid, data_mask=data_mask, seed=int(seed), law=law,
                           data_coefficients=data_coefficients, orthonormality_error=error)


def realize_white_noise(model: WhiteNoiseModel, test_functions: Any, R: int,
                        fill: bool = True) -> RealizationBatch:
    grid = model.grid
    phi = test_functions.samples if isinstance(test_functions, TestFunctionBank) else test_functions
    draws = model.coefficients(R, fill=fill)
    P = lebesgue_gram(model.basis, phi, grid)
    return RealizationBatch(draws=draws, coefficients=draws, evaluations=draws @ P, seed=model.seed,
                            law=model.law, stream="data+fill")


# -- RKHS ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RkhsBasis:
    """h_n = sqrt(lambda_n) g_n over the positive modes, with the H inner product."""

    decomposition: KLDecomposition = field(repr=False)
    modes: np.ndarray = None
    gamma: Tuple[int, ...] = ()

    @property
    def variances(self) -> np.ndarray:
        return self.decomposition.eigenvalues[self.modes]

    @property
    def g(self) -> np.ndarray:
        return self.decomposition.g[:, self.modes]

    @property
    def samples(self) -> np.ndarray:
        return self.g * np.sqrt(self.variances)[None, :]

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        """(x, y)_H = sum_n (x, g_n)(y, g_n) / lambda_n over the positive modes."""
        grid = self.decomposition.grid
        cx = lebesgue_gram(self.g, x, grid)[:, 0]
        cy = lebesgue_gram(self.g, y, grid)[:, 0]
        return float(np.sum(cx * cy / self.variances))

    def gram(self) -> np.ndarray:
        grid = self.decomposition.grid
        coeffs = lebesgue_gram(self.g, self.samples, grid)
        return coeffs.T @ (coeffs / self.variances[:, None])

    def l2_representers(self) -> np.ndarray:
        """Samples r_n with (x, r_n)_{L^2} = (x, h_n)_H, i.e. g_n / sqrt(lambda_n)."""
        return self.g / np.sqrt(self.variances)[None, :]


# -- coloring -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Coloring:
    operator: FactoredOperator
    white_noise: WhiteNoiseModel
    expansion: GespExpansion
    decomposition: KLDecomposition = field(repr=False)
    measure: WeightedMeasure = field(repr=False)

    @property
    def spectral_values(self) -> np.ndarray:
        return np.sqrt(self.expansion.variances)

    def __iter__(self):
        return iter((self.operator, self.white_noise, self.expansion))


def color_factorize(kernel: CovarianceKernel, N: int, M: int, grid: Grid, n_modes: int, seed: int = 0,
                    law: str = "gaussian", zero_tol: float = DEFAULT_ZERO_TOL,
                    lebesgue: bool = False) -> Coloring:
    """Build L, W and the induced expansion of Z = L W for the kernel C_Y."""
    if N < 0 or int(N) != N:
        raise ValidationError(f"regularity order N must be a non-negative integer, got {N}",
                              module="factorization", precondition="N >= 0 integer")
    measure = build_measure(grid, M, lebesgue=lebesgue)
    decomp = decompose(kernel, grid, measure, n_modes, zero_tol)
    expansion = expansion_from_decomposition(decomp, N=N, M=M, law=law, label="Z")
    sigma = np.sqrt(expansion.variances)
    L = FactoredOperator((
        BesselPotential(N / 2.0),
        WeightMultiply(measure.weight_exponent),
        SpectralDiagonal(sigma, decomp.g, "g"),
    ))
    W = build_white_noise(decomp.g, grid, data_mask=~decomp.null_mask, seed=seed, law=law)
    logger.info("colored %s: modes=%d rank=%d n0=%d N=%d M=%d", kernel.name, decomp.n_modes,
                decomp.rank, decomp.n0_size, N, M)
    return Coloring(operator=L, white_noise=W, expansion=expansion, decomposition=decomp, measure=measure)


def colored_expansion(coloring: Coloring) -> GespExpansion:
    """L W as an expansion: white noise over g_n with L moved onto the test functions."""
    return apply_adjoint(coloring.white_noise.as_expansion(), coloring.operator, label="LW")


def _pre_spectral(coloring: Coloring, test_functions: np.ndarray,
                  diagnostics: Optional[dict] = None) -> np.ndarray:
    """Coefficient rows sigma_n (L_M B phi, g_n): the spectral stage written in coefficient space."""
    pre = FactoredOperator(coloring.operator.stages[:-1])
    moved = apply_to_test_function(pre, test_functions, coloring.decomposition.grid, diagnostics)
    coeffs = lebesgue_gram(coloring.decomposition.g, moved, coloring.decomposition.grid)
    return coloring.spectral_values[:, None] * coeffs


def coloring_checks(coloring: Coloring, bank: TestFunctionBank,
                    diagnostics: Optional[dict] = None) -> Dict[str, Any]:
    """Deterministic coloring identities on the bank.

    - pipeline covariance of L W against sum_n lambda_n <T_n, .><T_n, .>
    - coefficient-space covariance against the pipeline one
    - zeroing the fill variances changes no covariance entry (bitwise)
    """
    mercer = covariance_matrix(coloring.expansion, bank, diagnostics)
    pipeline = covariance_matrix(colored_expansion(coloring), bank, diagnostics)
    S = _pre_spectral(coloring, bank.samples, diagnostics)
    unit = np.ones(coloring.white_noise.n_modes)
    without_fill = np.where(coloring.white_noise.data_mask, 1.0, 0.0)
    full = S.T @ (unit[:, None] * S)
    data_only = S.T @ (without_fill[:, None] * S)
    coloring_error = float(np.max(np.abs(pipeline - mercer)))
    coefficient_error = float(np.max(np.abs(full - pipeline)))
    null_identical = bool(np.array_equal(full, data_only))
    return {
        "coloring_error": coloring_error,
        "coefficient_path_error": coefficient_error,
        "null_modes_inert": null_identical,
        "pass": {
            "coloring": coloring_error <= MATRIX_TOLERANCE,
            "coefficient_path": coefficient_error <= PIPELINE_TOLERANCE,
            "null_modes_inert": null_identical,
        },
    }


def realize_colored(coloring: Coloring, bank: Any, R: int, fill: bool = True,
                    diagnostics: Optional[dict] = None) -> RealizationBatch:
    """Sample L W on the bank: W's coefficients paired with L^T phi."""
    model = coloring.white_noise
    phi = bank.samples if isinstance(bank, TestFunctionBank) else bank
    moved = apply_to_test_function(coloring.operator, phi, model.grid, diagnostics)
    draws = model.coefficients(R, fill=fill)
    P = lebesgue_gram(model.basis, moved, model.grid)
    return RealizationBatch(draws=draws, coefficients=draws, evaluations=draws @ P, seed=model.seed,
                            law=model.law, stream="data+fill")


# -- whitening ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Whitening:
    operator: FactoredOperator
    expansion: GespExpansion
    rkhs: RkhsBasis
    gamma: Tuple[int, ...]
    u_operator: FactoredOperator
    K_target: int

    @property
    def gamma_is_identity(self) -> bool:
        return tuple(self.gamma) == tuple(range(len(self.gamma)))

    def __iter__(self):
        return iter((self.operator, self.expansion))


def whiten_factorize(expansion: GespExpansion, decomp: KLDecomposition, K_target: int,
                     zero_tol: Optional[float] = None) -> Whitening:
    """Build L_w with L_w Z white, plus W' = sum_k (Y_k / sqrt(lambda_k)) h_gamma(k)."""
    if K_target < 1:
        raise ValidationError(f"K_target must be >= 1, got {K_target}", module="factorization",
                              precondition="K_target >= 1")
    mask = decomp.null_mask
    if zero_tol is not None:
        mask = decomp.eigenvalues <= zero_tol * decomp.lambda_max
    positive = np.flatnonzero(~mask)
    if positive.size < K_target:
        raise FiniteRank(
            f"only {positive.size} modes have a positive variance but K_target={K_target}; whitening "
            "needs infinitely many nonzero variances (at least K_target at this resolution)",
            details={"rank": int(positive.size), "K_target": int(K_target)},
        )
    grid = decomp.grid
    gamma = tuple(range(positive.size))
    rkhs = RkhsBasis(decomposition=decomp, modes=positive, gamma=gamma)
    hermite, _ = hermite_samples(positive.size, grid)
    p = decomp.measure.weight_exponent
    relabel = CoefficientRelabel(gamma, rkhs.l2_representers(), hermite, "rkhs", "hermite")
    Lw = FactoredOperator((relabel, WeightMultiply(-p), BesselPotential(-expansion.N / 2.0)))
    U_op = FactoredOperator((WeightMultiply(-p), BesselPotential(-expansion.N / 2.0)))

    aligned = np.zeros((grid.node_count, expansion.n_modes))
    aligned[:, positive] = hermite[:, list(gamma)]
    variances = np.zeros(expansion.n_modes)
    variances[positive] = 1.0
    whitened = GespExpansion(variances=variances, base=aligned, operator=identity(), grid=grid,
                             law=expansion.law, null_mask=mask, label="W'")
    logger.info("whitened: %d positive modes relabelled onto Hermite 0..%d", positive.size, positive.size - 1)
    return Whitening(operator=Lw, expansion=whitened, rkhs=rkhs, gamma=gamma, u_operator=U_op,
                     K_target=int(K_target))


def whitening_checks(expansion: GespExpansion, whitening: Whitening,
                     diagnostics: Optional[dict] = None) -> Dict[str, Any]:
    """Gram of L_w Z on Hermite 0..K_target-1, and the U process and its bound."""
    decomp = whitening.rkhs.decomposition
    grid = decomp.grid
    bank = build_bank(whitening.K_target, grid)
    gram = covariance_matrix(apply_adjoint(expansion, whitening.operator), bank, diagnostics)
    gram_error = float(np.max(np.abs(gram - np.eye(whitening.K_target))))
    prime_error = float(np.max(np.abs(covariance_matrix(whitening.expansion, bank) - np.eye(whitening.K_target))))

    U = apply_adjoint(expansion, whitening.u_operator, label="U")
    cov_u = covariance_matrix(U, bank, diagnostics)
    G = lebesgue_gram(decomp.g, bank.samples, grid)
    variances = np.where(decomp.null_mask, 0.0, decomp.eigenvalues)
    expected_u = G.T @ (variances[:, None] * G)
    u_error = float(np.max(np.abs(cov_u - expected_u)))
    norms = np.sqrt(np.clip(np.diag(bank.gram_l2), 0.0, None))
    u_bound = decomp.lambda_max * np.outer(norms, norms)
    u_bound_holds = bool(np.all(np.abs(cov_u) <= u_bound * (1.0 + 1e-12) + 1e-15))
    rkhs_error = float(np.max(np.abs(whitening.rkhs.gram() - np.eye(len(whitening.gamma)))))
    return {
        "whitening_gram_error": gram_error,
        "whitened_expansion_error": prime_error,
        "u_covariance_error": u_error,
        "u_bound_holds": u_bound_holds,
        "rkhs_gram_error": rkhs_error,
        "gamma_is_identity": whitening.gamma_is_identity,
        "rank": len(whitening.gamma),
        "pass": {
            "whitening_gram": gram_error <= MATRIX_TOLERANCE,
            "u_covariance": u_error <= MATRIX_TOLERANCE,
            "u_bound": u_bound_holds,
        },
    }


def whiten_observed(decomp: KLDecomposition, field_samples: np.ndarray,
                    zero_tol: Optional[float] = None) -> np.ndarray:
    """Whitened KL coefficients Y_n / sqrt(lambda_n) of observed fields on the positive modes.

    No denoising or regularisation is applied.
    """
    mask = decomp.null_mask if zero_tol is None else decomp.eigenvalues <= zero_tol * decomp.lambda_max
    positive = np.flatnonzero(~mask)
    coeffs = project_field(decomp, field_samples)
    scale = np.sqrt(decomp.eigenvalues[positive])
    return coeffs[positive] / scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))


# -- roundtrip ----------------------------------------------------------------

def roundtrip_check(kernel: CovarianceKernel, N: int, M: int, grid: Grid, n_modes: int, K_target: int,
                    seed: int, R: int, law: str = "gaussian", zero_tol: float = DEFAULT_ZERO_TOL,
                    lebesgue: bool = False, bank_size: int = 8,
                    z_threshold: float = DEFAULT_Z_THRESHOLD,
                    artifacts: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Color, then whiten, and check both deterministically and by Monte-Carlo.

    When ``artifacts`` is given it receives the colored batch and both Monte-Carlo
    comparisons under "colored", "mc_coloring" and "mc_whitening".
    """
    diagnostics: Dict[str, float] = {}
    coloring = color_factorize(kernel, N, M, grid, n_modes, seed, law, zero_tol, lebesgue)
    decomp = coloring.decomposition
    bank = build_bank(bank_size, grid)
    color = coloring_checks(coloring, bank, diagnostics)

    colored = realize_colored(coloring, bank, R, diagnostics=diagnostics)
    mc_color = compare(empirical_covariance(colored), covariance_matrix(coloring.expansion, bank),
                       z_threshold, seed)

    data_draws = coefficient_block(seed, law, R, decomp.n_modes, "data")
    fill_draws = coefficient_block(seed, law, R, decomp.n_modes, "fill")
    independence = max_cross_correlation(fill_draws[:, decomp.null_indices],
                                         data_draws[:, decomp.positive_indices]) if R >= 2 else 0.0
    independence_band = 4.0 / np.sqrt(R)

    whitening = whiten_factorize(coloring.expansion, decomp, K_target)
    white = whitening_checks(coloring.expansion, whitening, diagnostics)
    target_bank = build_bank(K_target, grid)
    whitened = realize(apply_adjoint(coloring.expansion, whitening.operator), seed, target_bank, R,
                       diagnostics=diagnostics)
    mc_white = compare(empirical_covariance(whitened), np.eye(K_target), z_threshold, seed)
    if artifacts is not None:
        artifacts.update(colored=colored, mc_coloring=mc_color, mc_whitening=mc_white)

    passes = {
        **{f"coloring.{k}": v for k, v in color["pass"].items()},
        **{f"whitening.{k}": v for k, v in white["pass"].items()},
        "mc.coloring": mc_color.passed,
        "mc.whitening": mc_white.passed,
        "fill_independence": independence <= independence_band,
    }
    return {
        "kernel": kernel.to_record(),
        "N": int(N),
        "M": int(M),
        "modes": decomp.n_modes,
        "rank": decomp.rank,
        "n0_size": decomp.n0_size,
        "K_target": int(K_target),
        "bank_size": int(bank_size),
        "seed": int(seed),
        "law": law,
        "realizations": int(R),
        "coloring_error": color["coloring_error"],
        "coefficient_path_error": color["coefficient_path_error"],
        "null_modes_inert": color["null_modes_inert"],
        "whitening_gram_error": white["whitening_gram_error"],
        "u_covariance_error": white["u_covariance_error"],
        "u_bound_holds": white["u_bound_holds"],
        "gamma_is_identity": white["gamma_is_identity"],
        "mc_errors": {
            "coloring": mc_color.to_dict(),
            "whitening": mc_white.to_dict(),
            "fill_cross_correlation": independence,
            "fill_cross_correlation_band": float(independence_band),
        },
        "diagnostics": {k: float(v) for k, v in sorted(diagnostics.items())},
        "pass": passes,
    }
