"""
Result writers for the harness commands.
Tables go out as CSV through pandas, reports as sorted-key JSON; every float is
rendered with a fixed number of significant digits so reruns are byte-identical.
"""

import io
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_DIGITS = 12


def _round_floats(value: Any, digits: int) -> Any:
    """Recursively convert numpy scalars/arrays and round floats to ``digits`` significant digits."""
    if isinstance(value, dict):
        return {str(k): _round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return [_round_floats(v, digits) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    return value


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(text)
    logger.info(f"Wrote {len(text)} bytes to {path}")


def format_table(rows: Sequence[Dict[str, Any]], columns: List[str], digits: int = DEFAULT_DIGITS) -> str:
    """Render rows as CSV text with a fixed header."""
    frame = pd.DataFrame(list(rows), columns=columns)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=f"%.{digits}g", lineterminator="\n")
    return buffer.getvalue()


def format_json(payload: Any, digits: int = DEFAULT_DIGITS) -> str:
    """Render a payload as JSON with sorted keys and a trailing newline."""
    return json.dumps(_round_floats(payload, digits), sort_keys=True, indent=2) + "\n"


def write_table(rows: Sequence[Dict[str, Any]], columns: List[str], out: Optional[str] = None,
                digits: int = DEFAULT_DIGITS) -> str:
    """Write rows as CSV to ``out`` (stdout when None) and return the text."""
    text = format_table(rows, columns, digits)
    _emit(text, out)
    return text


def write_json(payload: Any, out: Optional[str] = None, digits: int = DEFAULT_DIGITS) -> str:
    """Write a JSON payload to ``out`` (stdout when None) and return the text."""
    text = format_json(payload, digits)
    _emit(text, out)
    return text
