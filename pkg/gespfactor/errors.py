"""Error types for gespfactor.

Every error names the module whose precondition failed and the precondition
itself, so the CLI can emit a machine-readable error record without parsing
messages. Validation errors (bad inputs) exit with code 2; numerical failures
exit with code 3.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class GespError(Exception):
    """Base class for every error raised by gespfactor."""

    exit_code = EXIT_NUMERIC
    module = "gespfactor"
    precondition = ""

    def __init__(self, message: str, *, module: Optional[str] = None,
                 precondition: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        if module:
            self.module = module
        if precondition:
            self.precondition = precondition
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "precondition": self.precondition,
            "message": self.message,
            "details": self.details,
        }


class ValidationError(GespError):
    """Inputs violate a documented precondition."""

    exit_code = EXIT_VALIDATION


class NumericalFailure(GespError):
    """The computation ran but its numerical contract cannot be met."""

    exit_code = EXIT_NUMERIC


# -- grid_measure ------------------------------------------------------------

class DimensionUnsupported(ValidationError):
    module = "grid_measure"
    precondition = "d in {1, 2, 3}"


class DegenerateGrid(ValidationError):
    module = "grid_measure"
    precondition = "R > 0 and P >= 2"


class ShapeMismatch(ValidationError):
    module = "grid_measure"
    precondition = "sample arrays conform to the grid node count"


# -- hermite_bank ------------------------------------------------------------

class UnderResolved(NumericalFailure):
    module = "hermite_bank"
    precondition = "grid resolves the highest Hermite function of the bank"


# -- operator_kit ------------------------------------------------------------

class NonUniformGrid(ValidationError):
    module = "operator_kit"
    precondition = "BesselPotential requires a uniform (trapezoid) grid"


class SpectralLeakage(NumericalFailure):
    module = "operator_kit"
    precondition = "input spectrum negligible in the top decade of frequencies when alpha > 0"


class BasisMissing(ValidationError):
    module = "operator_kit"
    precondition = "SpectralDiagonal/CoefficientRelabel stages carry their basis samples"


# -- kl_engine ---------------------------------------------------------------

class GrowthBoundViolated(NumericalFailure):
    module = "kl_engine"
    precondition = "|C(x,y)| <= Cbound (1+|x|^2)^(M/2) (1+|y|^2)^(M/2) at grid nodes"


class NotPositiveSemiDefinite(NumericalFailure):
    module = "kl_engine"
    precondition = "most negative eigenvalue >= -1e-8 * lambda_max"


class TooManyModes(ValidationError):
    module = "kl_engine"
    precondition = "1 <= n_modes <= node count"


# -- factorization -----------------------------------------------------------

class BasisNotOrthonormal(NumericalFailure):
    module = "factorization"
    precondition = "basis discretely L2-orthonormal to 1e-8"


class FiniteRank(NumericalFailure):
    module = "factorization"
    precondition = "number of modes with lambda_n > eps_zero >= K_target (infinitely many nonzero variances)"


# -- mc_verify ---------------------------------------------------------------

class InsufficientSamples(ValidationError):
    module = "mc_verify"
    precondition = "R >= 2 realizations"


# -- cli ---------------------------------------------------------------------

class ParseError(ValidationError):
    module = "cli"
    precondition = "config file is well-formed JSON"

    def __init__(self, message: str, *, line: Optional[int] = None, column: Optional[int] = None,
                 field: Optional[str] = None, **kwargs):
        details = dict(kwargs.pop("details", None) or {})
        details.update({"line": line, "column": column, "field": field})
        super().__init__(message, details=details, **kwargs)
        self.line = line
        self.column = column
        self.field = field


class ConfigValidationError(ValidationError):
    module = "cli"
    precondition = "config values satisfy module preconditions"

    def __init__(self, message: str, *, field: Optional[str] = None, **kwargs):
        details = dict(kwargs.pop("details", None) or {})
        details["field"] = field
        super().__init__(message, details=details, **kwargs)
        self.field = field
