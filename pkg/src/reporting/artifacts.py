"""
This module writes run artifacts: CSV series with a commented provenance header and the JSON run report.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd

from src.common.config import TOOL_VERSION

logger = logging.getLogger(__name__)

HEADER_FIELDS = ("tool_version", "scenario", "scenario_sha256", "mode", "series", "dim", "epsilon", "columns")
FLOAT_FORMAT = "%.17g"

# Diagnostics each mode must report
REQUIRED_DIAGNOSTICS = {
    "exact": ("norm_drift_max",),
    "reduced": ("tamo_residual_max", "classification"),
    "mixed": ("trace_drift_max",),
    "compare": ("sup_norm_deviation",),
}


def _ensure_directory(filepath: str) -> None:
    directory = os.path.dirname(filepath)
    if directory and not os.path.exists(directory):
        os.makedirs(directory, exist_ok=True)
        logger.debug("Created directory: %s", directory)


def save_series_csv(df: pd.DataFrame, filepath: str, header: dict) -> str:
    """
    Saves a series DataFrame as CSV behind an 8-line commented header.

    Numbers are written with 17 significant digits and LF line endings so identical runs produce
    identical files.

    Args:
        df (pd.DataFrame): The series, one row per sample.
        filepath (str): Destination path; missing directories are created.
        header (dict): Values for the header fields except `columns`, which is taken from df.

    Returns:
        str: The path written.
    """
    _ensure_directory(filepath)
    values = dict(header)
    values["tool_version"] = TOOL_VERSION
    values["columns"] = ",".join(df.columns)

    with open(filepath, "w", encoding="utf-8", newline="") as handle:
        for key in HEADER_FIELDS:
            handle.write(f"# {key}: {values.get(key, '')}\n")
        df.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Saved %d rows to %s", len(df), filepath)
    return filepath


def read_series_csv(filepath: str):
    """
    Reads a CSV written by save_series_csv.

    Returns:
        tuple: (header dict, DataFrame).
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"The file at {filepath} was not found.")
    header = {}
    with open(filepath, encoding="utf-8") as handle:
        for _ in HEADER_FIELDS:
            key, _, value = handle.readline()[2:].rstrip("\n").partition(": ")
            header[key] = value
    return header, pd.read_csv(filepath, comment="#", float_precision="round_trip")


def to_jsonable(value):
    """Converts numpy scalars and arrays to plain Python values; NaN and infinities become None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    return value


@dataclass
class RunReport:
    scenario_name: str
    mode: str
    wall_time_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    artifact_paths: List[str] = field(default_factory=list)
    scenario_hash: str = ""
    tool_version: str = TOOL_VERSION

    def missing_diagnostics(self) -> List[str]:
        return [key for key in REQUIRED_DIAGNOSTICS.get(self.mode, ()) if key not in self.diagnostics]

    def as_dict(self) -> dict:
        return to_jsonable(
            {
                "scenario_name": self.scenario_name,
                "mode": self.mode,
                "tool_version": self.tool_version,
                "scenario_sha256": self.scenario_hash,
                "wall_time_seconds": self.wall_time_seconds,
                "diagnostics": self.diagnostics,
                "artifact_paths": self.artifact_paths,
            }
        )


def save_run_report(report: RunReport, filepath: str) -> str:
    """
    Writes the run report as UTF-8 JSON.

    Raises:
        ValueError: If a diagnostic the mode promises is missing.
    """
    missing = report.missing_diagnostics()
    if missing:
        raise ValueError(f"run report for mode '{report.mode}' lacks diagnostics {missing}")
    _ensure_directory(filepath)
    with open(filepath, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(report.as_dict(), handle, indent=2, allow_nan=False)
        handle.write("\n")
    logger.info("Saved run report to %s", filepath)
    return filepath
