"""Utility functions for number formatting, table rendering and output files."""

import csv
import io
import json
import math
import os
from typing import Any, Dict, Iterable, Optional, Sequence

from gmpy2 import mpq

from gw_border.settings import get_settings


def format_float(value: Optional[float], precision: Optional[int] = None) -> str:
    """
    Print a float with a fixed number of significant digits.

    Args:
        value: The number (None prints as an empty field)
        precision: Significant digits (default: cli.precision, 15)

    Returns:
        Deterministic decimal text
    """
    if value is None:
        return ""
    precision = precision or get_settings().cli.precision
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{precision}g}"


def round_sig(value: float, precision: Optional[int] = None) -> float:
    """Round to the configured number of significant digits, keeping a float."""
    if value is None or not math.isfinite(value):
        return value
    return float(format_float(value, precision))


def format_exact(value: Any) -> str:
    """Exact rationals as "p/q" (integers without the denominator)."""
    value = mpq(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def render_json(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def envelope(command: str, family: str, result: Dict[str, Any]) -> Dict[str, Any]:
    """Wrap a command result in the versioned JSON envelope."""
    return {"schema": get_settings().cli.schema_id, "command": command, "family": family, **result}


def get_family_output_folder(label: str, base_output_dir: Optional[str] = None) -> str:
    """
    Get the output folder for one family's artefacts, creating it if needed.

    Args:
        label: Family name (e.g. "plane" or "custom:my_psi")
        base_output_dir: Base directory for all outputs (default: cli.output_dir)

    Returns:
        Path to the family-specific output folder
    """
    base_output_dir = base_output_dir or get_settings().cli.output_dir
    # Clean label to be filesystem-safe
    clean_label = label.replace("/", "_").replace("\\", "_").replace(":", "_")
    folder = os.path.join(base_output_dir, clean_label)
    os.makedirs(folder, exist_ok=True)
    return folder


def get_family_file_path(label: str, filename: str, base_output_dir: Optional[str] = None) -> str:
    return os.path.join(get_family_output_folder(label, base_output_dir), filename)


def write_text(path: str, text: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    return path
