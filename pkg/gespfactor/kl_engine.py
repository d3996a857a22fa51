"""Karhunen-Loeve decomposition of a covariance operator on L^2(mu).

The covariance operator (Q f)(x) = int C(x, y) f(y) d mu(y) is discretized
by the Nystrom method on the grid: with effective weights v_i and
S = diag(sqrt(v)), the symmetric matrix B = S K S has the same spectrum as
the quadrature operator, and its orthonormal eigenvectors u_n give

    f_n(x_i) = u_n,i / sqrt(v_i)      (mu-orthonormal eigenfunctions)
    g_n(x_i) = sqrt(m_i) f_n(x_i)     (L^2-orthonormal system)

Rules kept here:
  - eigenvalues are sorted descending with a stable sort; each eigenvector
    has its first non-negligible component made positive
  - raw eigenvalues below -1e-8 * lambda_max mean the kernel is not a
    covariance at this resolution; smaller negatives are clipped to 0
  - N0 (the null modes) is {n : lambda_n <= zero_tol * lambda_max}
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy.linalg import eigh

from gespfactor.errors import GrowthBoundViolated, NotPositiveSemiDefinite, TooManyModes, ValidationError
from gespfactor.grid_measure import Grid, WeightedMeasure
from gespfactor.kernels import CovarianceKernel

logger = logging.getLogger(__name__)

GROWTH_SLACK = 1.01
NEGATIVE_TOLERANCE = 1e-8
DEFAULT_ZERO_TOL = 1e-10
ORTHONORMALITY_TOLERANCE = 1e-8
TRACE_TOLERANCE = 1e-8
HS_TOLERANCE = 1e-6
SIGN_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class KLDecomposition:
    eigenvalues: np.ndarray
    f: np.ndarray
    g: np.ndarray
    null_mask: np.ndarray
    zero_tol: float
    grid: Grid = field(repr=False)
    measure: WeightedMeasure = field(repr=False)
    trace_estimate: float = 0.0
    hs_estimate: float = 0.0
    spectrum_sum: float = 0.0
    spectrum_sq_sum: float = 0.0
    min_raw_eigenvalue: float = 0.0
    clipped_count: int = 0
    kernel_name: str = ""

    @property
    def n_modes(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0]) if self.eigenvalues.size else 0.0

    @property
    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.null_mask)

    @property
    def null_indices(self) -> np.ndarray:
        return np.flatnonzero(self.null_mask)

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(~self.null_mask))

    @property
    def n0_size(self) -> int:
        return int(np.count_nonzero(self.null_mask))

    @property
    def mu_orthonormality_error(self) -> float:
        gram = self.f.T @ (self.f * self.measure.effective_weights[:, None])
        return float(np.max(np.abs(gram - np.eye(self.n_modes))))

    @property
    def l2_orthonormality_error(self) -> float:
        gram = self.g.T @ (self.g * self.grid.lebesgue_weights[:, None])
        return float(np.max(np.abs(gram - np.eye(self.n_modes))))

    @property
    def trace_error(self) -> float:
        """|sum of the full spectrum - sum_i C(x_i, x_i) v_i| / trace."""
        if self.trace_estimate == 0:
            return abs(self.spectrum_sum)
        return abs(self.spectrum_sum - self.trace_estimate) / abs(self.trace_estimate)

    @property
    def retained_fraction(self) -> float:
        if self.trace_estimate == 0:
            return 1.0
        return float(np.sum(self.eigenvalues)) / self.trace_estimate

    @property
    def hilbert_schmidt_holds(self) -> bool:
        return self.spectrum_sq_sum <= self.hs_estimate * (1.0 + HS_TOLERANCE) + 1e-300

    def to_report(self) -> Dict[str, Any]:
        mu_err = self.mu_orthonormality_error
        l2_err = self.l2_orthonormality_error
        return {
            "kernel": self.kernel_name,
            "modes": self.n_modes,
            "rank": self.rank,
            "n0_size": self.n0_size,
            "zero_tol": self.zero_tol,
            "lambda_max": self.lambda_max,
            "lambda_last": float(self.eigenvalues[-1]) if self.n_modes else 0.0,
            "trace_estimate": self.trace_estimate,
            "spectrum_sum": self.spectrum_sum,
            "trace_error": self.trace_error,
            "retained_fraction": self.retained_fraction,
            "hs_estimate": self.hs_estimate,
            "spectrum_sq_sum": self.spectrum_sq_sum,
            "min_raw_eigenvalue": self.min_raw_eigenvalue,
            "clipped_negatives": self.clipped_count,
            "mu_orthonormality_error": mu_err,
            "l2_orthonormality_error": l2_err,
            "pass": {
                "trace": self.trace_error <= TRACE_TOLERANCE,
                "hilbert_schmidt": self.hilbert_schmidt_holds,
                "mu_orthonormal": mu_err <= ORTHONORMALITY_TOLERANCE,
                "l2_orthonormal": l2_err <= ORTHONORMALITY_TOLERANCE,
            },
        }


def _growth_envelope(grid: Grid, order: int) -> np.ndarray:
    return (1.0 + grid.squared_radius) ** (order / 2.0)


def assemble_covariance_matrix(kernel: CovarianceKernel, grid: Grid,
                               measure: Optional[WeightedMeasure] = None) -> np.ndarray:
    """K_ij = C(x_i, x_j), symmetrized and checked against the growth bound.

    The bound is tested with the growth order of ``measure`` (or the kernel's
    own order when no measure is given): a kernel growing faster than the
    measure decays is rejected with GrowthBoundViolated.
    """
    raw = kernel.matrix(grid)
    K = 0.5 * (raw + raw.T)
    order = measure.growth_order if measure is not None else kernel.growth_order
    envelope = np.outer(_growth_envelope(grid, order), _growth_envelope(grid, order))
    limit = GROWTH_SLACK * kernel.bound * envelope
    over = np.abs(K) > limit
    if np.any(over):
        i, j = np.unravel_index(np.argmax(np.where(over, np.abs(K) - limit, -np.inf)), K.shape)
        ratio = float(abs(K[i, j]) / (kernel.bound * envelope[i, j])) if kernel.bound > 0 else math.inf
        raise GrowthBoundViolated(
            f"kernel {kernel.name!r} exceeds its growth bound (bound {kernel.bound:g}, M={order}) "
            f"by a factor {ratio:.3g} at nodes ({i}, {j}); the measure's M is too small",
            details={"kernel": kernel.name, "M": order, "bound": kernel.bound, "ratio": ratio,
                     "node_pair": [int(i), int(j)]},
        )
    K.setflags(write=False)
    return K


def _fix_signs(U: np.ndarray) -> np.ndarray:
    out = U.copy()
    for n in range(out.shape[1]):
        col = out[:, n]
        scale = np.max(np.abs(col))
        if scale == 0:
            continue
        first = int(np.argmax(np.abs(col) > SIGN_FLOOR * scale))
        if col[first] < 0:
            out[:, n] = -col
    return out


def nystrom_eigendecompose(K: np.ndarray, grid: Grid, measure: WeightedMeasure, n_modes: int,
                           zero_tol: float = DEFAULT_ZERO_TOL, kernel_name: str = "") -> KLDecomposition:
    """Top ``n_modes`` KL eigenpairs of the quadrature covariance operator.

    ``zero_tol`` is relative to lambda_max.
    """
    nodes = grid.node_count
    if int(n_modes) != n_modes or n_modes < 1 or n_modes > nodes:
        raise TooManyModes(f"modes must be in 1..{nodes} (node count), got {n_modes}",
                           details={"modes": n_modes, "nodes": nodes})
    n_modes = int(n_modes)
    if not (zero_tol > 0):
        raise ValidationError(f"zero_tol must be > 0, got {zero_tol}", module="kl_engine",
                              precondition="zero_tol > 0", details={"zero_tol": zero_tol})
    K = grid.conform(K, "K")
    v = measure.effective_weights
    s = np.sqrt(v)
    B = s[:, None] * K * s[None, :]
    B = 0.5 * (B + B.T)

    raw, U = eigh(B)
    order = np.argsort(-raw, kind="stable")
    raw = raw[order]
    U = U[:, order]

    lam_max = max(float(raw[0]), 0.0)
    lam_min = float(raw[-1])
    if lam_min < -NEGATIVE_TOLERANCE * lam_max:
        raise NotPositiveSemiDefinite(
            f"most negative eigenvalue {lam_min:.3e} is below -1e-8 * lambda_max ({lam_max:.3e}); "
            "the kernel is not a covariance at this resolution",
            details={"min_eigenvalue": lam_min, "lambda_max": lam_max},
        )

    kept = raw[:n_modes]
    clipped = int(np.count_nonzero(kept < 0))
    eigenvalues = np.where(kept < 0, 0.0, kept)
    if clipped:
        logger.debug("clipped %d small negative eigenvalues (min %.3e)", clipped, float(kept.min()))

    U = _fix_signs(U[:, :n_modes])
    f = U / s[:, None]
    g = np.sqrt(measure.density)[:, None] * f
    null_mask = eigenvalues <= zero_tol * lam_max

    diag = np.diag(K)
    trace_estimate = float(np.sum(diag * v))
    hs_estimate = float(np.sum(B * B))

    for arr in (eigenvalues, f, g, null_mask):
        arr.setflags(write=False)

    decomp = KLDecomposition(
        eigenvalues=eigenvalues, f=f, g=g, null_mask=null_mask, zero_tol=float(zero_tol),
        grid=grid, measure=measure, trace_estimate=trace_estimate, hs_estimate=hs_estimate,
        spectrum_sum=float(np.sum(raw)), spectrum_sq_sum=float(np.sum(raw ** 2)),
        min_raw_eigenvalue=lam_min, clipped_count=clipped, kernel_name=kernel_name,
    )
    logger.debug("nystrom modes=%d rank=%d n0=%d lambda_max=%.4e trace_error=%.2e",
                 n_modes, decomp.rank, decomp.n0_size, lam_max, decomp.trace_error)
    return decomp


def decompose(kernel: CovarianceKernel, grid: Grid, measure: WeightedMeasure, n_modes: int,
              zero_tol: float = DEFAULT_ZERO_TOL) -> KLDecomposition:
    K = assemble_covariance_matrix(kernel, grid, measure)
    return nystrom_eigendecompose(K, grid, measure, n_modes, zero_tol, kernel_name=kernel.name)


def mercer_reconstruct_error(decomp: KLDecomposition, kernel: Union[CovarianceKernel, np.ndarray],
                             grid: Grid, measure: WeightedMeasure, m: int) -> float:
    """||K - sum_{n<=m} lambda_n f_n f_n^T|| / ||K|| in the v-weighted Frobenius norm."""
    if int(m) != m or m < 1 or m > decomp.n_modes:
        raise TooManyModes(f"m must be in 1..{decomp.n_modes}, got {m}", precondition="1 <= m <= n_modes",
                           details={"m": m, "modes": decomp.n_modes})
    K = kernel if isinstance(kernel, np.ndarray) else assemble_covariance_matrix(kernel, grid, measure)
    s = np.sqrt(measure.effective_weights)
    B = s[:, None] * K * s[None, :]
    norm = float(np.linalg.norm(B))
    if norm == 0:
        return 0.0
    U = decomp.f[:, :m] * s[:, None]
    approx = (U * decomp.eigenvalues[:m]) @ U.T
    return float(np.linalg.norm(B - approx) / norm)


def mercer_profile(decomp: KLDecomposition, kernel: Union[CovarianceKernel, np.ndarray],
                   grid: Grid, measure: WeightedMeasure) -> List[Dict[str, float]]:
    """Truncation error at m = 1, 2, 4, ... and at the full mode count."""
    K = kernel if isinstance(kernel, np.ndarray) else assemble_covariance_matrix(kernel, grid, measure)
    sizes = []
    m = 1
    while m < decomp.n_modes:
        sizes.append(m)
        m *= 2
    sizes.append(decomp.n_modes)
    return [{"m": m, "error": mercer_reconstruct_error(decomp, K, grid, measure, m)} for m in sizes]


def project_field(decomp: KLDecomposition, field_samples: np.ndarray) -> np.ndarray:
    """KL coefficients Y_n = sum_i Y(x_i) f_n(x_i) v_i of node-major field samples."""
    Y = decomp.grid.conform(field_samples, "field_samples")
    v = decomp.measure.effective_weights
    flat = Y.reshape(decomp.grid.node_count, -1)
    coeffs = decomp.f.T @ (flat * v[:, None])
    return coeffs.reshape((decomp.n_modes,) + Y.shape[1:])
