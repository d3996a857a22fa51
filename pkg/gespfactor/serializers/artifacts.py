"""CSV and JSON artifact writers.

Every subcommand writes through here so re-running with the same config and
seed reproduces the same bytes: JSON keys are sorted, floats are written
with ``repr`` (shortest round-tripping form), and nothing time-dependent is
ever recorded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import numpy as np

from gespfactor.grid_measure import Grid, WeightedMeasure
from gespfactor.gsp_model import RealizationBatch
from gespfactor.hermite_bank import TestFunctionBank
from gespfactor.kl_engine import KLDecomposition
from gespfactor.mc_verify import CovarianceReport


def _json_value(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _finite(value: Any) -> Any:
    """JSON has no inf/nan; write them as strings."""
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def dumps_json(payload: Any) -> str:
    normalized = json.loads(json.dumps(payload, default=_json_value))
    return json.dumps(_finite(normalized), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(payload), encoding="utf-8")
    return path


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(headers)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path: Path) -> List[List[str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh)]


def _coordinate_headers(grid: Grid) -> List[str]:
    return [f"x{k}" for k in range(grid.dimension)]


def eigs_rows(decomp: KLDecomposition):
    headers = ["n", "lambda", "null"]
    rows = [(n, float(lam), bool(null)) for n, (lam, null) in enumerate(zip(decomp.eigenvalues, decomp.null_mask))]
    return headers, rows


def modes_rows(decomp: KLDecomposition):
    """Node-major eigenfunction samples: coordinates, weight v_i, then f_0 .. f_{m-1}."""
    grid = decomp.grid
    headers = ["node"] + _coordinate_headers(grid) + ["v"] + [f"f{n}" for n in range(decomp.n_modes)]
    v = decomp.measure.effective_weights
    rows = (
        [i] + list(grid.nodes[i]) + [v[i]] + list(decomp.f[i])
        for i in range(grid.node_count)
    )
    return headers, rows


def bank_rows(bank: TestFunctionBank):
    grid = bank.grid
    labels = ["h" + "_".join(str(k) for k in label) for label in bank.labels]
    headers = ["node"] + _coordinate_headers(grid) + ["w"] + labels
    w = grid.lebesgue_weights
    rows = (
        [i] + list(grid.nodes[i]) + [w[i]] + list(bank.samples[i])
        for i in range(grid.node_count)
    )
    return headers, rows


def matrix_rows(matrix: np.ndarray, prefix: str = "c"):
    matrix = np.atleast_2d(matrix)
    headers = ["row"] + [f"{prefix}{j}" for j in range(matrix.shape[1])]
    rows = ([i] + list(matrix[i]) for i in range(matrix.shape[0]))
    return headers, rows


def grid_rows(measure: WeightedMeasure):
    """index, coordinates, lebesgue_weight, mu_density; one row per node."""
    grid = measure.grid
    headers = ["index"] + _coordinate_headers(grid) + ["lebesgue_weight", "mu_density"]
    w = grid.lebesgue_weights
    rows = (
        [i] + list(grid.nodes[i]) + [w[i], measure.density[i]]
        for i in range(grid.node_count)
    )
    return headers, rows


def batch_rows(batch: RealizationBatch):
    """Realization-major: one row per realization r, one column per test function."""
    evaluations = np.atleast_2d(batch.evaluations)
    headers = ["r"] + [f"phi{j}" for j in range(evaluations.shape[1])]
    rows = ([r] + list(evaluations[r]) for r in range(evaluations.shape[0]))
    return headers, rows


def write_covariance_csvs(out_dir: Path, report: CovarianceReport, stem: str = "cov") -> List[Path]:
    out_dir = Path(out_dir)
    return [
        write_csv(out_dir / f"{stem}_empirical.csv", *matrix_rows(report.empirical)),
        write_csv(out_dir / f"{stem}_analytic.csv", *matrix_rows(report.analytic)),
    ]
