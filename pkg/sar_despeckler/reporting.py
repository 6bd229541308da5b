"""
Run manifests and machine-readable outputs.

JSON for single-run reports, CSV (header row, fixed column order) for sweep
and bench grids. Every output carries ``schema_version`` so downstream
plotting scripts can detect layout changes.
"""
from __future__ import annotations

import json
import logging
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numba
import numpy as np
import pandas as pd
import psutil
import scipy
from pydantic import BaseModel, Field

from sar_despeckler import __version__

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

SWEEP_COLUMNS = ["method", "alpha", "lambda", "epsilon", "snr_db", "ssim", "total_pcg_iters", "wall_ms"]
BENCH_COLUMNS = ["method", "alpha", "epsilon", "wall_ms", "total_pcg_iters", "mean_pcg_iters_per_outer"]


def host_facts(threads: int) -> Dict[str, Any]:
    memory = psutil.virtual_memory()
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_total_mb": round(memory.total / 2 ** 20),
        "threads": threads,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


class RunManifest(BaseModel):
    """Everything needed to rerun a command exactly."""

    schema_version: str = SCHEMA_VERSION
    command: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    tool_version: str = __version__
    host: Dict[str, Any] = Field(default_factory=dict)
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    timings_ms: Dict[str, float] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)


def json_safe(value: Any) -> Any:
    """Replace non-finite floats with the strings "inf", "-inf", "nan"."""
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json_safe(payload), indent=2) + "\n", encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def rows_frame(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=list(columns))


def write_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows_frame(rows, columns).to_csv(path, index=False, encoding="utf-8", float_format="%.10g")
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def manifest_path_for(output: Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")
