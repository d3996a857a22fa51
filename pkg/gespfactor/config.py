"""Run configuration: JSON schema, defaults and validation.

All keys are optional except ``kernel``. Unknown keys are rejected so a typo
never silently falls back to a default. Values are checked against the
preconditions of the modules that will consume them, so a bad config fails
before any numerical work starts.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from gespfactor.errors import ConfigValidationError, GespError, ParseError, TooManyModes
from gespfactor.grid_measure import MAX_DIMENSION, MIN_POINTS, RULES, Grid, WeightedMeasure, build_grid, build_measure
from gespfactor.kernels import CovarianceKernel, make_kernel
from gespfactor.mc_verify import LAWS
from gespfactor.operator_kit import operator_from_records

logger = logging.getLogger(__name__)

DEFAULT_DOMAIN = {"halfwidth": 20.0, "points_per_axis": 256, "rule": "gauss-legendre"}
MEASURES = ("weighted", "lebesgue")
UNIFORM_ADJOINT_CHECKS = [
    [{"stage": "bessel", "alpha": 1.0}],
    [{"stage": "bessel", "alpha": -1.0}],
    [{"stage": "weight", "p": 1.0}],
    [{"stage": "weight", "p": -1.0}],
]
KNOWN_KEYS = (
    "kernel", "dimension", "domain", "measure", "N", "M", "modes", "zero_tol", "bank_size",
    "K_target", "realizations", "seed", "coefficient_law", "z_threshold", "adjoint_checks", "output",
)
MAX_SEED = 2 ** 64 - 1


@dataclass(frozen=True)
class RunConfig:
    kernel: Union[str, Dict[str, Any]]
    dimension: int = 1
    halfwidth: float = 20.0
    points_per_axis: int = 256
    rule: str = "gauss-legendre"
    measure: str = "weighted"
    N: int = 0
    M: int = 0
    modes: int = 64
    zero_tol: float = 1e-10
    bank_size: int = 8
    K_target: int = 8
    realizations: int = 10000
    seed: int = 0
    coefficient_law: str = "gaussian"
    z_threshold: float = 4.0
    adjoint_checks: List[List[Dict[str, Any]]] = field(default_factory=list)
    output: str = "out"
    base_dir: str = field(default=".", compare=False)

    @property
    def lebesgue(self) -> bool:
        return self.measure == "lebesgue"

    def build_grid(self) -> Grid:
        return build_grid(self.dimension, self.halfwidth, self.points_per_axis, self.rule)

    def build_measure(self, grid: Grid) -> WeightedMeasure:
        return build_measure(grid, self.M, lebesgue=self.lebesgue)

    def build_kernel(self) -> CovarianceKernel:
        return make_kernel(_resolve_kernel_paths(self.kernel, self.base_dir), self.dimension)

    def to_dict(self) -> Dict[str, Any]:
        """Canonical form embedded in reports (no filesystem context)."""
        data = asdict(self)
        data.pop("base_dir")
        data["domain"] = {
            "halfwidth": data.pop("halfwidth"),
            "points_per_axis": data.pop("points_per_axis"),
            "rule": data.pop("rule"),
        }
        return data


def _resolve_kernel_paths(kernel: Any, base_dir: str) -> Any:
    if isinstance(kernel, Mapping) and kernel.get("name") == "grid-file" and "path" in kernel:
        path = Path(kernel["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        resolved = dict(kernel)
        resolved["path"] = str(path)
        return resolved
    return kernel


def _int_field(raw: Mapping[str, Any], key: str, default: int, minimum: int,
               maximum: Optional[int] = None) -> int:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigValidationError(f"{key} must be an integer, got {value!r}", field=key)
    if value < minimum or (maximum is not None and value > maximum):
        bounds = f">= {minimum}" if maximum is None else f"in {minimum}..{maximum}"
        raise ConfigValidationError(f"{key} must be {bounds}, got {value}", field=key)
    return value


def _float_field(raw: Mapping[str, Any], key: str, default: float, positive: bool = True) -> float:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigValidationError(f"{key} must be a finite number, got {value!r}", field=key)
    if positive and value <= 0:
        raise ConfigValidationError(f"{key} must be > 0, got {value}", field=key)
    return float(value)


def _choice(raw: Mapping[str, Any], key: str, default: str, choices) -> str:
    value = raw.get(key, default)
    if value not in choices:
        raise ConfigValidationError(f"{key} must be one of {', '.join(choices)}, got {value!r}", field=key)
    return value


def validate_config(raw: Mapping[str, Any], base_dir: Union[str, Path] = ".") -> RunConfig:
    """Fill defaults and check every value; returns an immutable RunConfig."""
    if not isinstance(raw, Mapping):
        raise ConfigValidationError("config must be a JSON object", field="")
    unknown = sorted(set(raw) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigValidationError(f"unknown config key(s): {', '.join(unknown)}", field=unknown[0])
    if "kernel" not in raw:
        raise ConfigValidationError("config needs a 'kernel' entry", field="kernel")

    dimension = _int_field(raw, "dimension", 1, 1, MAX_DIMENSION)
    domain = raw.get("domain", {})
    if not isinstance(domain, Mapping):
        raise ConfigValidationError("domain must be an object", field="domain")
    unknown_domain = sorted(set(domain) - set(DEFAULT_DOMAIN))
    if unknown_domain:
        raise ConfigValidationError(f"unknown domain key(s): {', '.join(unknown_domain)}",
                                    field=f"domain.{unknown_domain[0]}")
    try:
        halfwidth = _float_field(domain, "halfwidth", DEFAULT_DOMAIN["halfwidth"])
        points = _int_field(domain, "points_per_axis", DEFAULT_DOMAIN["points_per_axis"], MIN_POINTS)
        rule = _choice(domain, "rule", DEFAULT_DOMAIN["rule"], RULES)
    except ConfigValidationError as exc:
        raise ConfigValidationError(exc.message, field=f"domain.{exc.field}") from exc

    measure = _choice(raw, "measure", "weighted", MEASURES)
    N = _int_field(raw, "N", 0, 0)
    M = _int_field(raw, "M", 0, 0)
    if N > 0 and rule != "trapezoid":
        raise ConfigValidationError("N > 0 applies (1 - Laplacian)^(N/2), which needs domain.rule "
                                    "'trapezoid' (a uniform grid)", field="N")
    modes = _int_field(raw, "modes", 64, 1)
    nodes = points ** dimension
    if modes > nodes:
        raise TooManyModes(f"modes={modes} exceeds the node count {nodes} (points_per_axis^dimension)",
                           details={"modes": modes, "nodes": nodes, "field": "modes"})
    zero_tol = _float_field(raw, "zero_tol", 1e-10)
    bank_size = _int_field(raw, "bank_size", 8, 1)
    K_target = _int_field(raw, "K_target", bank_size, 1)
    realizations = _int_field(raw, "realizations", 10000, 2)
    seed = _int_field(raw, "seed", 0, 0, MAX_SEED)
    law = _choice(raw, "coefficient_law", "gaussian", LAWS)
    z_threshold = _float_field(raw, "z_threshold", 4.0)
    output = raw.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigValidationError("output must be a non-empty path string", field="output")

    default_checks = UNIFORM_ADJOINT_CHECKS if rule == "trapezoid" else [
        c for c in UNIFORM_ADJOINT_CHECKS if c[0]["stage"] != "bessel"]
    checks = raw.get("adjoint_checks", default_checks)
    if not isinstance(checks, list) or not all(isinstance(c, list) for c in checks):
        raise ConfigValidationError("adjoint_checks must be a list of stage-record lists",
                                    field="adjoint_checks")
    for i, records in enumerate(checks):
        try:
            operator_from_records(records)
        except (GespError, KeyError, TypeError, ValueError) as exc:
            message = exc.message if isinstance(exc, GespError) else f"bad stage record: {exc}"
            raise ConfigValidationError(message, field=f"adjoint_checks[{i}]") from exc

    config = RunConfig(
        kernel=raw["kernel"], dimension=dimension, halfwidth=halfwidth, points_per_axis=points, rule=rule,
        measure=measure, N=N, M=M, modes=modes, zero_tol=zero_tol, bank_size=bank_size, K_target=K_target,
        realizations=realizations, seed=seed, coefficient_law=law, z_threshold=z_threshold,
        adjoint_checks=[list(c) for c in checks], output=output, base_dir=str(base_dir),
    )
    config.build_kernel()
    return config


def parse_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}", field="config") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}",
                         line=exc.lineno, column=exc.colno) from exc
    logger.debug("config %s loaded", path)
    return validate_config(raw, base_dir=path.parent)


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Flag values beat config values; ``None`` means the flag was not given."""
    given = {k: v for k, v in overrides.items() if v is not None}
    if not given:
        return config
    raw = config.to_dict()
    raw.update(given)
    return validate_config(raw, base_dir=config.base_dir)
