"""Monte-Carlo coefficient streams and covariance comparison.

Coefficients come from numpy's Philox counter-based generator. Each
realization r owns its own generator, keyed by (seed, stream) and started at
counter [0, r, 0, 0], so draw (r, n) depends only on (seed, stream, law, r, n):
batches of any size agree on their common prefix, and realizations can be
generated in any order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from gespfactor.errors import InsufficientSamples, ShapeMismatch, ValidationError

logger = logging.getLogger(__name__)

LAWS = ("gaussian", "rademacher")
STREAMS = {"data": 0, "fill": 1}
DEFAULT_Z_THRESHOLD = 4.0
EXACT_TOLERANCE = 1e-12


def _check_law(law: str) -> None:
    if law not in LAWS:
        raise ValidationError(f"unknown coefficient law {law!r}; expected one of {', '.join(LAWS)}",
                              module="mc_verify", precondition="law in {gaussian, rademacher}",
                              details={"law": law})


def _stream_key(seed: int, stream: str) -> np.ndarray:
    if stream not in STREAMS:
        raise ValidationError(f"unknown coefficient stream {stream!r}", module="mc_verify",
                              precondition=f"stream in {sorted(STREAMS)}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream],))
    return sequence.generate_state(2, dtype=np.uint64)


def _realization_generator(key: np.ndarray, r: int) -> np.random.Generator:
    counter = np.array([0, r, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _draw(rng: np.random.Generator, law: str, n: int) -> np.ndarray:
    if law == "gaussian":
        return rng.standard_normal(n)
    return np.where(rng.random(n) < 0.5, -1.0, 1.0)


def coefficient_block(seed: int, law: str, realizations: int, modes: int,
                      stream: str = "data") -> np.ndarray:
    """Unit-variance draws, shape (realizations, modes)."""
    _check_law(law)
    if realizations < 0 or modes < 0:
        raise ValidationError("realizations and modes must be >= 0", module="mc_verify",
                              precondition="non-negative block shape")
    key = _stream_key(seed, stream)
    block = np.empty((int(realizations), int(modes)))
    for r in range(int(realizations)):
        block[r] = _draw(_realization_generator(key, r), law, int(modes))
    return block


def coefficient_stream(seed: int, law: str, r: int, n: int, stream: str = "data") -> float:
    """Draw number n of realization r; equals ``coefficient_block(...)[r, n]``."""
    _check_law(law)
    key = _stream_key(seed, stream)
    return float(_draw(_realization_generator(key, int(r)), law, int(n) + 1)[int(n)])


@dataclass(frozen=True, eq=False)
class EmpiricalCovariance:
    matrix: np.ndarray
    standard_error: np.ndarray
    realizations: int


def empirical_covariance(evaluations: Any) -> EmpiricalCovariance:
    """Unbiased sample covariance of the columns of an (R, K) evaluation matrix.

    Accepts a RealizationBatch as well. The standard error of entry (j, k) is
    estimated from fourth moments: sqrt((E[dx_j^2 dx_k^2] - cov_jk^2) / R).
    """
    values = getattr(evaluations, "evaluations", evaluations)
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    R = X.shape[0]
    if R < 2:
        raise InsufficientSamples(f"need at least 2 realizations, got {R}", details={"realizations": R})
    centered = X - X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    cov = 0.5 * (cov + cov.T)
    sq = centered ** 2
    fourth = (sq.T @ sq) / R
    se = np.sqrt(np.maximum(fourth - cov ** 2, 0.0) / R)
    return EmpiricalCovariance(matrix=cov, standard_error=se, realizations=int(R))


@dataclass(frozen=True, eq=False)
class CovarianceReport:
    empirical: np.ndarray
    analytic: np.ndarray
    standard_error: np.ndarray
    z_scores: np.ndarray
    z_threshold: float
    realizations: int
    seed: Optional[int] = None

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z_scores))) if self.z_scores.size else 0.0

    @property
    def max_abs_error(self) -> float:
        diff = self.empirical - self.analytic
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= self.z_threshold

    def to_dict(self) -> Dict[str, Any]:
        return {
            "realizations": self.realizations,
            "seed": self.seed,
            "z_threshold": self.z_threshold,
            "max_abs_z": self.max_abs_z,
            "max_abs_error": self.max_abs_error,
            "max_standard_error": float(np.max(self.standard_error)) if self.standard_error.size else 0.0,
            "pass": self.passed,
        }


def compare(empirical: Union[EmpiricalCovariance, np.ndarray], analytic: np.ndarray,
            z_threshold: float = DEFAULT_Z_THRESHOLD, seed: Optional[int] = None) -> CovarianceReport:
    """Entrywise z-scores of empirical against analytic covariance.

    Where the standard error is zero the entry passes only if it matches to
    1e-12 (z = 0), otherwise its z-score is infinite.
    """
    if isinstance(empirical, EmpiricalCovariance):
        emp, se, R = empirical.matrix, empirical.standard_error, empirical.realizations
    else:
        emp = np.atleast_2d(np.asarray(empirical, dtype=float))
        se, R = np.zeros_like(emp), 0
    analytic = np.atleast_2d(np.asarray(analytic, dtype=float))
    if emp.shape != analytic.shape:
        raise ShapeMismatch(f"empirical {emp.shape} and analytic {analytic.shape} differ",
                            module="mc_verify", precondition="matrices have the same shape",
                            details={"empirical": list(emp.shape), "analytic": list(analytic.shape)})
    diff = emp - analytic
    safe = np.where(se > 0, se, 1.0)
    z = np.where(se > 0, diff / safe, np.where(np.abs(diff) <= EXACT_TOLERANCE, 0.0, np.inf))
    report = CovarianceReport(empirical=emp, analytic=analytic, standard_error=se, z_scores=z,
                              z_threshold=float(z_threshold), realizations=int(R), seed=seed)
    logger.debug("compare R=%d max|z|=%.3f pass=%s", R, report.max_abs_z, report.passed)
    return report


def max_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Largest |sample correlation| between any column of ``a`` and any column of ``b``."""
    A = np.asarray(a, dtype=float)
    B = np.asarray(b, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ShapeMismatch("cross-correlation needs the same number of realizations",
                            module="mc_verify", precondition="same realization count")
    if A.shape[0] < 2:
        raise InsufficientSamples(f"need at least 2 realizations, got {A.shape[0]}")
    if A.shape[1] == 0 or B.shape[1] == 0:
        return 0.0
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    norm_a = np.sqrt(np.sum(A ** 2, axis=0))
    norm_b = np.sqrt(np.sum(B ** 2, axis=0))
    denom = np.outer(norm_a, norm_b)
    corr = np.divide(A.T @ B, denom, out=np.zeros((A.shape[1], B.shape[1])), where=denom > 0)
    return float(np.max(np.abs(corr)))
