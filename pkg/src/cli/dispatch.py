"""
This module is the command-line harness: it parses arguments, loads and validates the scenario,
runs it (optionally as a parameter sweep) and maps failures to exit codes.

Exit codes: 0 success, 1 validation error, 2 runtime integration error, 3 usage error.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Sequence

from src.cli.runner import run_scenario
from src.common.config import OUT_DIR
from src.common.errors import (
    ClassificationError,
    DegenerateSpectrum,
    FrameMismatch,
    IntegrationError,
    ParseError,
    SchemaError,
)
from src.reporting.findings import generate_run_findings
from src.scenarios.loader import load_scenario
from src.scenarios.validation import ValidationReport, validate_or_report, validate_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="feedback-adiabatics", description="Closed-loop adiabatic dynamics harness.")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    subparsers.required = True

    for name, help_text in (
        ("run", "run a scenario in its declared mode"),
        ("compare", "run exact and reduced dynamics and report their deviation"),
        ("validate", "check the spectrum and regime of a scenario"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("scenario", help="path to a scenario document")
        sub.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                         help="set a dotted scenario key (repeatable)")
        if name != "validate":
            sub.add_argument("--out", default=OUT_DIR, help=f"output directory (default: {OUT_DIR})")
            sub.add_argument("--seed", type=int, default=0, help="seed of the randomized diagnostics")
            sub.add_argument("--sweep", default=None, metavar="KEY=V1,V2,...",
                             help="run once per value, each into its own directory")
        sub.set_defaults(command=name)
    return parser


def parse_sweep(text: str):
    """'key=v1,v2' -> (key, ['v1', 'v2'])."""
    key, sep, values = text.partition("=")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not sep or not key or not items:
        raise UsageError(f"--sweep expects key=v1,v2,..., got {text!r}")
    return key, items


# --- printing ---

def print_validation(report: ValidationReport) -> None:
    print("=" * 50)
    print(f"Scenario Validation: {report.name}")
    print("=" * 50)
    print("--- [ SPECTRUM ] ---")
    print(f"  Min gap:        {report.min_gap:.6g} (at R={report.min_gap_r:.4g})")
    print(f"  Adiabaticity:   {report.adiabaticity:.3e}")
    print(f"  Feedback bound: {report.feedback_bound:.6g}")
    print(f"  Resonances:     {len(report.resonances)}")
    if report.warnings:
        print("\n--- [ WARNINGS ] ---")
        for message in report.warnings:
            print(f"  >>> {message}")
    if report.errors:
        print("\n--- [ ERRORS ] ---")
        for message in report.errors:
            print(f"  !!! {message}")
    print("=" * 50)
    print("Validation " + ("PASSED." if report.ok else "FAILED."))
    print("=" * 50)


def print_run(report, findings: list) -> None:
    print("=" * 50)
    print(f"Run Report: {report.scenario_name} ({report.mode})")
    print("=" * 50)
    print("--- [ DIAGNOSTICS ] ---")
    for key, value in report.diagnostics.items():
        if isinstance(value, float):
            print(f"  {key}: {value:.6g}")
        elif isinstance(value, dict):
            print(f"  {key}: {value.get('kind', value)}")
        elif value is not None and not hasattr(value, "__len__"):
            print(f"  {key}: {value}")
    print("\n--- [ ARTIFACTS ] ---")
    for path in report.artifact_paths:
        print(f"  {path}")
    print("\n--- [ FINDINGS ] ---")
    for finding in findings:
        prefix = "!!!" if finding["priority"] == "HIGH" else ">>>"
        print(f"  {prefix} [{finding['priority']}] {finding['recommendation']}")
        print(f"      {finding['metric']}")
    print("=" * 50)
    print(f"Completed in {report.wall_time_seconds:.2f}s.")
    print("=" * 50)


# --- commands ---

def _load(scenario: str, overrides: Sequence[str]):
    """Returns (cfg, None) or (None, exit code) after printing the failure."""
    try:
        return load_scenario(scenario, overrides), None
    except FileNotFoundError as exc:
        print(f"Error: file not found: {scenario}", file=sys.stderr)
        logger.debug("%s", exc)
        return None, EXIT_USAGE
    except (ParseError, SchemaError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return None, EXIT_USAGE
    except ValueError as exc:
        print(f"Validation error: {exc}", file=sys.stderr)
        return None, EXIT_VALIDATION


def _execute(scenario: str, overrides: Sequence[str], out_dir: str, seed: int, quiet: bool = False) -> int:
    # 1. Load
    cfg, code = _load(scenario, overrides)
    if cfg is None:
        return code

    # 2. Validate
    try:
        validation = validate_scenario(cfg)
    except (DegenerateSpectrum, ValueError) as exc:
        print(f"Validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    # 3. Run
    try:
        report = run_scenario(cfg, os.path.join(out_dir, cfg.name), seed)
    except (IntegrationError, ClassificationError, FrameMismatch, DegenerateSpectrum) as exc:
        print(f"Runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"Validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if not quiet:
        print_run(report, generate_run_findings(report, cfg.epsilon, validation.warnings))
    return EXIT_OK


def _sweep_worker(job) -> tuple:
    scenario, overrides, out_dir, seed, label = job
    return label, _execute(scenario, overrides, out_dir, seed, quiet=True)


def _sweep(args, extra_overrides: List[str]) -> int:
    key, values = parse_sweep(args.sweep)
    cfg, code = _load(args.scenario, args.override + extra_overrides)
    if cfg is None:
        return code
    name = cfg.name

    jobs = []
    for value in values:
        label = f"{name}__{key}={value}"
        overrides = args.override + extra_overrides + [f"{key}={value}", f"name={label}"]
        jobs.append((args.scenario, overrides, args.out, args.seed, label))

    # Each job writes to its own directory
    with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
        results = list(pool.map(_sweep_worker, jobs))

    print("=" * 50)
    print(f"Sweep over {key}: {len(results)} runs")
    print("=" * 50)
    for label, code in results:
        marker = ">>>" if code == EXIT_OK else "!!!"
        print(f"  {marker} {label}: exit {code}")
    return max(code for _, code in results)


def command_validate(args) -> int:
    cfg, code = _load(args.scenario, args.override)
    if cfg is None:
        return code
    report = validate_or_report(cfg)
    print_validation(report)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def command_run(args, extra_overrides: Sequence[str] = ()) -> int:
    if args.sweep:
        return _sweep(args, list(extra_overrides))
    return _execute(args.scenario, list(args.override) + list(extra_overrides), args.out, args.seed)


def command_compare(args) -> int:
    return command_run(args, ["run.mode=compare"])


COMMANDS = {"run": command_run, "compare": command_compare, "validate": command_validate}


def dispatch(argv: Sequence[str]) -> int:
    """
    Runs one command-line invocation.

    Args:
        argv: Arguments without the program name, e.g. ["validate", "scenarios/rps3.scn"].

    Returns:
        int: The exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"Usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
