"""Linear operators acting on grid-sampled test functions.

Operators on processes are never applied to sample paths. An operator L is
applied to a process Z through its adjoint, (L Z)(phi) = Z(L^T phi), so every
operator here only needs a *forward* action on test functions. A
FactoredOperator is an ordered list of stages written in the same order as
the composition it denotes; its forward action applies the stages left to
right. For L = A o B o C acting on a process, the stage list is [A, B, C]
and the test function first meets A^T.

All four stage kinds are symmetric for the discrete L^2 pairing except the
relabelling stage, whose forward action is given explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft

from gespfactor.errors import BasisMissing, NonUniformGrid, SpectralLeakage, ValidationError
from gespfactor.grid_measure import Grid

logger = logging.getLogger(__name__)

LEAKAGE_BAND = 0.9
LEAKAGE_TOLERANCE = 1e-3
IMAG_TOLERANCE = 1e-9


def _invalid(message: str, **details) -> ValidationError:
    return ValidationError(message, module="operator_kit",
                           precondition="stage parameters finite; spectral values >= 0; gamma injective",
                           details=details)


# -- stage types -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BesselPotential:
    """(1 - Laplacian)^alpha, the Fourier multiplier (1 + |xi|^2)^alpha."""

    alpha: float
    pad_factor: int = 1
    kind: str = field(default="bessel", init=False)

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise _invalid(f"BesselPotential alpha must be finite, got {self.alpha}", alpha=self.alpha)
        if int(self.pad_factor) != self.pad_factor or self.pad_factor < 1:
            raise _invalid(f"pad_factor must be a positive integer, got {self.pad_factor}")

    def forward(self, samples: np.ndarray, grid: Grid, diagnostics: Optional[dict] = None) -> np.ndarray:
        return bessel_potential(samples, self.alpha, grid, pad_factor=self.pad_factor,
                                diagnostics=diagnostics)

    def to_record(self) -> Dict[str, Any]:
        record = {"stage": self.kind, "alpha": float(self.alpha)}
        if self.pad_factor != 1:
            record["pad_factor"] = int(self.pad_factor)
        return record


@dataclass(frozen=True, eq=False)
class WeightMultiply:
    """Pointwise multiplication by (1 + |x|^2)^p."""

    p: float
    kind: str = field(default="weight", init=False)

    def __post_init__(self):
        if not np.isfinite(self.p):
            raise _invalid(f"WeightMultiply exponent must be finite, got {self.p}", p=self.p)

    def forward(self, samples: np.ndarray, grid: Grid, diagnostics: Optional[dict] = None) -> np.ndarray:
        return weight_multiply(samples, self.p, grid)

    def to_record(self) -> Dict[str, Any]:
        return {"stage": self.kind, "p": float(self.p)}


@dataclass(frozen=True, eq=False)
class SpectralDiagonal:
    """phi -> sum_n sigma_n (phi, g_n) g_n over an L^2-orthonormal basis g_n."""

    values: np.ndarray
    basis: Optional[np.ndarray] = None
    basis_name: str = "g"
    kind: str = field(default="spectral", init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise _invalid("SpectralDiagonal values must be finite")
        if np.any(values < 0):
            raise _invalid("SpectralDiagonal values must be non-negative", minimum=float(values.min()))
        object.__setattr__(self, "values", values)
        if self.basis is not None and np.shape(self.basis)[1] != values.size:
            raise _invalid(f"basis has {np.shape(self.basis)[1]} columns for {values.size} values")

    def forward(self, samples: np.ndarray, grid: Grid, diagnostics: Optional[dict] = None) -> np.ndarray:
        if self.basis is None:
            raise BasisMissing(f"SpectralDiagonal stage has no basis samples attached ({self.basis_name!r})")
        return spectral_diagonal(samples, self.values, self.basis, grid)

    def to_record(self) -> Dict[str, Any]:
        return {"stage": self.kind, "values": [float(v) for v in self.values], "basis": self.basis_name}


@dataclass(frozen=True, eq=False)
class CoefficientRelabel:
    """phi -> sum_n (phi, target_gamma(n)) source_n for an injective gamma."""

    gamma: Tuple[int, ...]
    source: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    source_name: str = "h"
    target_name: str = "hermite"
    kind: str = field(default="relabel", init=False)

    def __post_init__(self):
        gamma = tuple(int(g) for g in self.gamma)
        if any(g < 0 for g in gamma):
            raise _invalid("gamma must map to non-negative target indices")
        if len(set(gamma)) != len(gamma):
            raise _invalid("gamma must be injective", gamma=list(gamma))
        object.__setattr__(self, "gamma", gamma)
        if self.source is not None and np.shape(self.source)[1] != len(gamma):
            raise _invalid(f"source has {np.shape(self.source)[1]} columns for {len(gamma)} labels")
        if self.target is not None and gamma and max(gamma) >= np.shape(self.target)[1]:
            raise _invalid(f"gamma reaches target index {max(gamma)} but target has "
                           f"{np.shape(self.target)[1]} members")

    def forward(self, samples: np.ndarray, grid: Grid, diagnostics: Optional[dict] = None) -> np.ndarray:
        if self.source is None or self.target is None:
            raise BasisMissing("CoefficientRelabel stage needs both source and target samples "
                               f"({self.source_name!r} -> {self.target_name!r})")
        return coefficient_relabel(samples, self.gamma, self.source, self.target, grid)

    def to_record(self) -> Dict[str, Any]:
        return {"stage": self.kind, "gamma": list(self.gamma),
                "source": self.source_name, "target": self.target_name}


Stage = Union[BesselPotential, WeightMultiply, SpectralDiagonal, CoefficientRelabel]


@dataclass(frozen=True, eq=False)
class FactoredOperator:
    stages: Tuple[Stage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def is_identity(self) -> bool:
        return not self.stages

    def describe(self) -> List[Dict[str, Any]]:
        return [stage.to_record() for stage in self.stages]

    def __len__(self) -> int:
        return len(self.stages)


def compose(*operators: FactoredOperator) -> FactoredOperator:
    """Written-order composition: compose(A, B) is A o B."""
    stages: List[Stage] = []
    for op in operators:
        stages.extend(op.stages)
    return FactoredOperator(tuple(stages))


def identity() -> FactoredOperator:
    return FactoredOperator(())


# -- stage actions -----------------------------------------------------------

def _angular_frequencies(n: int, h: float) -> np.ndarray:
    return 2.0 * np.pi * scipy.fft.fftfreq(n, d=h)


def bessel_potential(field_samples: np.ndarray, alpha: float, grid: Grid, pad_factor: int = 1,
                     diagnostics: Optional[dict] = None) -> np.ndarray:
    """Apply (1 - Laplacian)^alpha to samples on a uniform grid.

    The P samples per axis are one period of a periodic field (zero padded to
    ``pad_factor * P`` when asked). The discrete spectrum is multiplied by
    (1 + |xi|^2)^alpha with xi = 2 pi fftfreq(n, h), and transformed back.

    The period is n * h, which for P trapezoid nodes spanning [-R, R] is
    2R * P / (P - 1), not 2R: xi_k = 2 pi k / (n h). A plane wave is an exact
    eigenfunction only when it repeats over that period; cos(pi k x / R) is not.
    alpha = 0 returns the input unchanged without touching the grid.
    """
    arr = grid.conform(field_samples, "field_samples")
    if alpha == 0:
        return arr.copy()
    if not grid.is_uniform:
        raise NonUniformGrid(f"BesselPotential needs a uniform grid; got rule {grid.rule!r}",
                             details={"rule": grid.rule})

    d = grid.dimension
    P = grid.points_per_axis
    n = P * int(pad_factor)
    h = grid.spacing
    batch = arr.shape[1:]
    cube = arr.reshape(grid.shape + batch)
    axes = tuple(range(d))

    spectrum = scipy.fft.fftn(cube, s=(n,) * d, axes=axes)
    xi = _angular_frequencies(n, h)
    xi_sq = np.zeros((n,) * d)
    for axis in range(d):
        shape = [1] * d
        shape[axis] = n
        xi_sq = xi_sq + (xi ** 2).reshape(shape)
    expand = (slice(None),) * d + (None,) * len(batch)

    if alpha > 0:
        power = np.abs(spectrum) ** 2
        radius = np.sqrt(xi_sq)
        band = (radius >= LEAKAGE_BAND * radius.max())[expand]
        total = np.sum(power, axis=axes)
        top = np.sum(np.where(band, power, 0.0), axis=axes)
        fraction = np.divide(top, total, out=np.zeros_like(top), where=total > 0)
        worst = float(np.max(fraction)) if np.size(fraction) else 0.0
        if diagnostics is not None:
            diagnostics["leakage_fraction"] = max(worst, diagnostics.get("leakage_fraction", 0.0))
        if worst > LEAKAGE_TOLERANCE:
            raise SpectralLeakage(
                f"{worst:.2e} of the input spectral energy sits in the top frequency band; "
                f"(1 - Laplacian)^{alpha} of it is unreliable on this grid",
                details={"fraction": worst, "alpha": alpha},
            )

    multiplier = (1.0 + xi_sq) ** alpha
    result = scipy.fft.ifftn(spectrum * multiplier[expand], axes=axes)
    crop = tuple(slice(0, P) for _ in range(d))
    result = result[crop]

    scale = float(np.max(np.abs(result.real))) if result.size else 0.0
    residue = float(np.max(np.abs(result.imag)) / scale) if scale > 0 else 0.0
    if diagnostics is not None:
        diagnostics["imag_residue"] = max(residue, diagnostics.get("imag_residue", 0.0))
    if residue > IMAG_TOLERANCE:
        logger.warning("bessel alpha=%g discarded imaginary residue %.2e (relative)", alpha, residue)
    else:
        logger.debug("bessel alpha=%g imaginary residue %.2e", alpha, residue)
    return np.ascontiguousarray(result.real).reshape((grid.node_count,) + batch)


def weight_multiply(field_samples: np.ndarray, p: float, grid: Grid) -> np.ndarray:
    """Pointwise product with (1 + |x|^2)^p."""
    arr = grid.conform(field_samples, "field_samples")
    weight = (1.0 + grid.squared_radius) ** p
    return arr * weight.reshape((-1,) + (1,) * (arr.ndim - 1))


def spectral_diagonal(field_samples: np.ndarray, values: np.ndarray, basis: np.ndarray,
                      grid: Grid) -> np.ndarray:
    arr = grid.conform(field_samples, "field_samples")
    basis = grid.conform(basis, "basis")
    flat = arr.reshape(grid.node_count, -1)
    coeffs = basis.T @ (flat * grid.lebesgue_weights[:, None])
    out = basis @ (np.asarray(values)[:, None] * coeffs)
    return out.reshape(arr.shape)


def coefficient_relabel(field_samples: np.ndarray, gamma: Sequence[int], source: np.ndarray,
                        target: np.ndarray, grid: Grid) -> np.ndarray:
    arr = grid.conform(field_samples, "field_samples")
    source = grid.conform(source, "source")
    target = grid.conform(target, "target")
    flat = arr.reshape(grid.node_count, -1)
    picked = target[:, list(gamma)]
    coeffs = picked.T @ (flat * grid.lebesgue_weights[:, None])
    out = source @ coeffs
    return out.reshape(arr.shape)


def apply_to_test_function(op: FactoredOperator, phi: np.ndarray, grid: Grid,
                           diagnostics: Optional[dict] = None) -> np.ndarray:
    """Forward action of ``op`` on test-function samples (one column per function)."""
    out = grid.conform(phi, "phi")
    for stage in op.stages:
        out = stage.forward(out, grid, diagnostics)
    return out


# -- records -----------------------------------------------------------------

STAGE_KINDS = ("bessel", "weight", "spectral", "relabel")


def stage_from_record(record: Mapping[str, Any],
                      bases: Optional[Mapping[str, np.ndarray]] = None) -> Stage:
    """Build a stage from its config/report record; named bases are looked up in ``bases``."""
    bases = bases or {}
    kind = record.get("stage")
    if kind == "bessel":
        return BesselPotential(float(record["alpha"]), int(record.get("pad_factor", 1)))
    if kind == "weight":
        return WeightMultiply(float(record["p"]))
    if kind == "spectral":
        name = record.get("basis", "g")
        return SpectralDiagonal(np.asarray(record["values"], dtype=float), bases.get(name), name)
    if kind == "relabel":
        src = record.get("source", "h")
        tgt = record.get("target", "hermite")
        return CoefficientRelabel(tuple(record["gamma"]), bases.get(src), bases.get(tgt), src, tgt)
    raise _invalid(f"unknown stage {kind!r}; expected one of {', '.join(STAGE_KINDS)}", stage=kind)


def operator_from_records(records: Sequence[Mapping[str, Any]],
                          bases: Optional[Mapping[str, np.ndarray]] = None) -> FactoredOperator:
    return FactoredOperator(tuple(stage_from_record(r, bases) for r in records))
