#!/usr/bin/env python3
"""
cli.py: gespfactor batch front-end

Runs one pipeline per subcommand over a JSON config (or a bundled preset)
and writes CSV/JSON artifacts into the output directory. stdout carries one
JSON document (the run summary or the error record); logs go to stderr.

Usage:
    python run.py kl --config run.json             # eigs.csv, grid.csv, modes.csv, kl_report.json
    python run.py color --preset gaussian          # operator.json, wn_model.json, cov_check.json, cov_*.csv, colored_batch.csv
    python run.py whiten --preset gaussian         # whiten_report.json, cov_whitened_*.csv, whitened_batch.csv
    python run.py roundtrip --config run.json      # roundtrip_report.json, cov_*.csv, colored_batch.csv
    python run.py bank --config run.json           # bank.csv, grid.csv
    python run.py verify --config run.json         # replay roundtrip_report.json bit-for-bit

Exit codes: 0 every pass flag true; 2 invalid input; 3 numerical failure or
any pass flag false.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gespfactor import configure_logging
from gespfactor.config import RunConfig, apply_overrides, parse_config, validate_config
from gespfactor.errors import EXIT_NUMERIC, ConfigValidationError, GespError
from gespfactor.factorization import (
    coloring_checks,
    color_factorize,
    realize_colored,
    roundtrip_check,
    whiten_factorize,
    whitening_checks,
)
from gespfactor.grid_measure import embedding_bound
from gespfactor.gsp_model import apply_adjoint, covariance_matrix, realize
from gespfactor.hermite_bank import build_bank, hermite_samples
from gespfactor.kl_engine import assemble_covariance_matrix, mercer_profile, nystrom_eigendecompose
from gespfactor.mc_verify import compare, empirical_covariance
from gespfactor.operator_kit import apply_to_test_function, operator_from_records
from gespfactor.presets import load_preset
from gespfactor.serializers.artifacts import (
    bank_rows,
    batch_rows,
    dumps_json,
    eigs_rows,
    grid_rows,
    modes_rows,
    write_covariance_csvs,
    write_csv,
    write_json,
)
from gespfactor.serializers.workbook import export_workbook
from gespfactor.version import APP_DISPLAY_VERSION, APP_VERSION

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("kl", "color", "whiten", "roundtrip", "bank", "verify")
ADJOINT_TOLERANCE = 1e-10
ROUNDTRIP_REPORT = "roundtrip_report.json"


# ── Helpers ───────────────────────────────────────────────────────────────────

def _header(command: str, config: RunConfig) -> Dict[str, Any]:
    return {"version": APP_VERSION, "command": command, "config": config.to_dict()}


def _collect_passes(payload: Any, prefix: str = "") -> Dict[str, bool]:
    """Every boolean found under a "pass" key, flattened to dotted names."""
    found: Dict[str, bool] = {}
    if isinstance(payload, dict):
        for key, value in payload.items():
            name = f"{prefix}.{key}" if prefix else key
            if key == "pass":
                if isinstance(value, dict):
                    for flag, ok in value.items():
                        found[f"{prefix}.{flag}" if prefix else flag] = bool(ok)
                else:
                    found[prefix or "pass"] = bool(value)
            else:
                found.update(_collect_passes(value, name))
    elif isinstance(payload, list):
        for i, item in enumerate(payload):
            found.update(_collect_passes(item, f"{prefix}[{i}]"))
    return found


# ── Subcommands ───────────────────────────────────────────────────────────────

def _run_kl(config: RunConfig, out: Path) -> Tuple[Dict[str, Any], List[Path]]:
    grid = config.build_grid()
    measure = config.build_measure(grid)
    kernel = config.build_kernel()
    K = assemble_covariance_matrix(kernel, grid, measure)
    decomp = nystrom_eigendecompose(K, grid, measure, config.modes, config.zero_tol, kernel_name=kernel.name)
    report = decomp.to_report()
    payload = _header("kl", config)
    payload["decomposition"] = {k: v for k, v in report.items() if k != "pass"}
    payload["mercer_profile"] = mercer_profile(decomp, K, grid, measure)
    payload["pass"] = report["pass"]
    files = [
        write_csv(out / "eigs.csv", *eigs_rows(decomp)),
        write_csv(out / "grid.csv", *grid_rows(measure)),
        write_csv(out / "modes.csv", *modes_rows(decomp)),
        write_json(out / "kl_report.json", payload),
    ]
    logger.info("kl: %d modes, rank %d, trace error %.2e", decomp.n_modes, decomp.rank, decomp.trace_error)
    return payload, files


def adjoint_checks(config: RunConfig, coloring, bank) -> List[Dict[str, Any]]:
    """Seeded sample-level and covariance-level adjoint identities for each configured operator."""
    decomp = coloring.decomposition
    grid = decomp.grid
    expansion = coloring.expansion
    hermite, _ = hermite_samples(decomp.n_modes, grid)
    bases = {"g": decomp.g, "f": decomp.f, "hermite": hermite}
    results = []
    for records in config.adjoint_checks:
        op = operator_from_records(records, bases)
        moved = apply_to_test_function(op, bank.samples, grid)
        lhs = realize(apply_adjoint(expansion, op), config.seed, bank, config.realizations).evaluations
        rhs = realize(expansion, config.seed, moved, config.realizations).evaluations
        scale = max(1.0, float(np.max(np.abs(rhs)))) if rhs.size else 1.0
        sample_error = float(np.max(np.abs(lhs - rhs))) / scale if rhs.size else 0.0
        cov_lhs = covariance_matrix(apply_adjoint(expansion, op), bank)
        cov_rhs = covariance_matrix(expansion, moved)
        cov_scale = max(1.0, float(np.max(np.abs(cov_rhs))))
        cov_error = float(np.max(np.abs(cov_lhs - cov_rhs))) / cov_scale
        results.append({
            "operator": op.describe(),
            "sample_error": sample_error,
            "covariance_error": cov_error,
            "pass": sample_error <= ADJOINT_TOLERANCE and cov_error <= ADJOINT_TOLERANCE,
        })
    return results


def _run_color(config: RunConfig, out: Path) -> Tuple[Dict[str, Any], List[Path]]:
    grid = config.build_grid()
    kernel = config.build_kernel()
    coloring = color_factorize(kernel, config.N, config.M, grid, config.modes, config.seed,
                               config.coefficient_law, config.zero_tol, config.lebesgue)
    bank = build_bank(config.bank_size, grid)
    checks = coloring_checks(coloring, bank)
    colored = realize_colored(coloring, bank, config.realizations)
    mc = compare(empirical_covariance(colored), covariance_matrix(coloring.expansion, bank),
                 config.z_threshold, config.seed)

    operator_payload = _header("color", config)
    operator_payload.update({
        "stages": coloring.operator.describe(),
        "weight_exponent": coloring.measure.weight_exponent,
        "expansion": coloring.expansion.to_record(),
    })
    wn_payload = _header("color", config)
    wn_payload["white_noise"] = coloring.white_noise.to_record()
    cov_payload = _header("color", config)
    cov_payload.update({
        "coloring": checks,
        "adjoint": adjoint_checks(config, coloring, bank),
        "mc": mc.to_dict(),
    })
    files = [
        write_json(out / "operator.json", operator_payload),
        write_json(out / "wn_model.json", wn_payload),
        write_json(out / "cov_check.json", cov_payload),
    ]
    files += write_covariance_csvs(out, mc)
    files.append(write_csv(out / "colored_batch.csv", *batch_rows(colored)))
    return cov_payload, files


def _run_whiten(config: RunConfig, out: Path) -> Tuple[Dict[str, Any], List[Path]]:
    grid = config.build_grid()
    kernel = config.build_kernel()
    coloring = color_factorize(kernel, config.N, config.M, grid, config.modes, config.seed,
                               config.coefficient_law, config.zero_tol, config.lebesgue)
    whitening = whiten_factorize(coloring.expansion, coloring.decomposition, config.K_target)
    checks = whitening_checks(coloring.expansion, whitening)
    target_bank = build_bank(config.K_target, grid)
    batch = realize(apply_adjoint(coloring.expansion, whitening.operator), config.seed, target_bank,
                    config.realizations)
    mc = compare(empirical_covariance(batch), np.eye(config.K_target), config.z_threshold, config.seed)

    payload = _header("whiten", config)
    payload.update({
        "gamma": list(whitening.gamma),
        "stages": whitening.operator.describe(),
        "whitening": checks,
        "mc": mc.to_dict(),
    })
    files = [write_json(out / "whiten_report.json", payload)]
    files += write_covariance_csvs(out, mc, stem="cov_whitened")
    files.append(write_csv(out / "whitened_batch.csv", *batch_rows(batch)))
    return payload, files


def _roundtrip_payload(config: RunConfig, artifacts: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    grid = config.build_grid()
    kernel = config.build_kernel()
    report = roundtrip_check(kernel, config.N, config.M, grid, config.modes, config.K_target, config.seed,
                             config.realizations, config.coefficient_law, config.zero_tol, config.lebesgue,
                             config.bank_size, config.z_threshold, artifacts=artifacts)
    payload = _header("roundtrip", config)
    payload.update(report)
    return payload


def _run_roundtrip(config: RunConfig, out: Path) -> Tuple[Dict[str, Any], List[Path]]:
    artifacts: Dict[str, Any] = {}
    payload = _roundtrip_payload(config, artifacts)
    files = [write_json(out / ROUNDTRIP_REPORT, payload)]
    files += write_covariance_csvs(out, artifacts["mc_coloring"])
    files += write_covariance_csvs(out, artifacts["mc_whitening"], stem="cov_whitened")
    files.append(write_csv(out / "colored_batch.csv", *batch_rows(artifacts["colored"])))
    return payload, files


def _run_bank(config: RunConfig, out: Path) -> Tuple[Dict[str, Any], List[Path]]:
    grid = config.build_grid()
    measure = config.build_measure(grid)
    bank = build_bank(config.bank_size, grid)
    bounds = [embedding_bound(bank.member(j), grid, measure) for j in range(bank.count)]
    payload = _header("bank", config)
    payload.update({
        "gram_error": bank.gram_error,
        "labels": [list(label) for label in bank.labels],
        "embedding": bounds,
        "pass": {"embedding_bound": all(b["holds"] for b in bounds)},
    })
    files = [
        write_csv(out / "bank.csv", *bank_rows(bank)),
        write_csv(out / "grid.csv", *grid_rows(measure)),
    ]
    return payload, files


def _run_verify(config: RunConfig, out: Path, report_path: Optional[Path] = None) -> Tuple[Dict[str, Any], List[Path]]:
    path = Path(report_path) if report_path else out / ROUNDTRIP_REPORT
    if not path.is_file():
        raise ConfigValidationError(f"no roundtrip report to verify at {path}", field="report")
    stored_text = path.read_text(encoding="utf-8")
    stored = json.loads(stored_text)
    if "config" in stored:
        replay = validate_config(stored["config"], base_dir=config.base_dir)
    else:
        replay = config
    replay = apply_overrides(replay, seed=stored.get("seed", config.seed))
    regenerated = dumps_json(_roundtrip_payload(replay))
    identical = regenerated == stored_text
    payload = {
        "version": APP_VERSION,
        "command": "verify",
        "report": str(path),
        "seed": replay.seed,
        "identical": identical,
        "pass": {"bit_identical": identical},
    }
    logger.info("verify: %s %s", path, "identical" if identical else "DIFFERS")
    return payload, []


RUNNERS: Dict[str, Callable[[RunConfig, Path], Tuple[Dict[str, Any], List[Path]]]] = {
    "kl": _run_kl,
    "color": _run_color,
    "whiten": _run_whiten,
    "roundtrip": _run_roundtrip,
    "bank": _run_bank,
}


def run(subcommand: str, config: RunConfig, workbook: bool = False,
        report_path: Optional[Path] = None) -> Tuple[int, Dict[str, Any]]:
    """Run one subcommand; returns (exit code, summary). Module errors propagate."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigValidationError(f"unknown subcommand {subcommand!r}; expected one of "
                                    f"{', '.join(SUBCOMMANDS)}", field="subcommand")
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    logger.info("%s %s -> %s", APP_DISPLAY_VERSION, subcommand, out)
    if subcommand == "verify":
        payload, files = _run_verify(config, out, report_path)
    else:
        payload, files = RUNNERS[subcommand](config, out)
    passes = _collect_passes(payload)
    if workbook:
        files.append(export_workbook(out, subcommand, passes))
    code = 0 if all(passes.values()) else EXIT_NUMERIC
    summary = {
        "command": subcommand,
        "exit_code": code,
        "output": str(out),
        "artifacts": sorted(p.name for p in files),
        "pass": passes,
    }
    return code, summary


# ── CLI ───────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gespfactor",
                                     description="Coloring and whitening of generalized stochastic processes")
    parser.add_argument("--version", action="version", version=APP_DISPLAY_VERSION)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", type=Path, help="JSON run config")
        source.add_argument("--preset", help="bundled config name (gespfactor/presets/<name>.json)")
        p.add_argument("--out", help="output directory (overrides config 'output')")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--modes", type=int, help="override config modes")
        p.add_argument("--realizations", type=int, help="override config realizations")
        p.add_argument("--workbook", action="store_true", help="also write artifacts.xlsx")
        p.add_argument("--verbose", action="store_true", help="debug logging on stderr")
        if name == "verify":
            p.add_argument("--report", type=Path, help="report to replay (default <out>/roundtrip_report.json)")
    return parser


def _load_config(args) -> RunConfig:
    if args.preset:
        config = validate_config(load_preset(args.preset, args.subcommand))
    else:
        config = parse_config(args.config)
    return apply_overrides(config, output=args.out, seed=args.seed, modes=args.modes,
                           realizations=args.realizations)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    out_dir = Path(args.out) if args.out else None
    try:
        config = _load_config(args)
        out_dir = Path(config.output)
        code, summary = run(args.subcommand, config, workbook=args.workbook,
                            report_path=getattr(args, "report", None))
    except GespError as exc:
        record = exc.to_dict()
        record["exit_code"] = exc.exit_code
        target = out_dir or Path("out")
        try:
            write_json(target / "error.json", record)
        except OSError as io_exc:
            logger.error("could not write %s: %s", target / "error.json", io_exc)
        logger.error("%s in %s: %s", record["error"], record["module"], exc.message)
        sys.stdout.write(dumps_json(record))
        return exc.exit_code
    sys.stdout.write(dumps_json(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
