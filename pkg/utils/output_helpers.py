"""Serialization helpers for CSV and JSON run outputs, and empirical rate fitting."""

import io
import json
import math
from collections.abc import Sequence
from typing import Any

import numpy as np

from utils.constants import CSV_FLOAT_FORMAT


def format_csv(columns: Sequence[str], rows: np.ndarray, seed: int | None = None) -> str:
    """
    Render a numeric table as CSV with 17 significant digits.

    A leading ``# seed=<n>`` comment line records the run seed when given.
    """
    header = ",".join(columns)
    if seed is not None:
        header = f"# seed={seed}\n{header}"
    buffer = io.StringIO()
    np.savetxt(buffer, np.atleast_2d(rows), fmt=CSV_FLOAT_FORMAT, delimiter=",", header=header, comments="")
    return buffer.getvalue()


def format_json(payload: dict[str, Any]) -> str:
    """Deterministic JSON rendering; floats use repr so they round-trip bit-exactly."""
    return json.dumps(_replace_non_finite(payload), indent=2) + "\n"


def _replace_non_finite(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _replace_non_finite(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [_replace_non_finite(item) for item in value]
    return value


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Least-squares slope of log y against log x over the strictly positive pairs; None if fewer than two."""
    pairs = [(a, b) for a, b in zip(x, y, strict=True) if a > 0.0 and b > 0.0]
    if len(pairs) < 2:
        return None
    log_x, log_y = np.log(np.array(pairs)).T
    slope, _ = np.polyfit(log_x, log_y, deg=1)
    return float(slope)
