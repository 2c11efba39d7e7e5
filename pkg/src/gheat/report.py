"""CSV and JSON writers with a fixed, byte-stable number format."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(v) -> str:
    """17 significant digits for floats, lowercase booleans, plain ints and strings."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path: str | Path, rows: Iterable[dict], columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            extra = set(row) - set(columns)
            if extra:
                raise KeyError(f"unexpected columns {sorted(extra)} for {path.name}")
            writer.writerow([fmt(row.get(c)) for c in columns])
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


LEMMA_COLUMNS = ("module", "check", "scenario", "statistic", "bound", "stderr", "pass")
KERNEL_COLUMNS = ("t", "x", "y", "value", "representation", "terms")
FIELD_COLUMNS = ("t", "x", "scenario", "realization", "value")
MOMENT_COLUMNS = ("axis", "delta", "scenario", "empirical", "stderr", "bound", "discrete_hi", "M")
TRACE_COLUMNS = ("problem", "n", "D_n")
ENVELOPE_COLUMNS = ("functional_id", "scenario", "mean", "stderr", "M")
ORACLE_COLUMNS = ("payoff", "sigma_lo", "sigma_hi", "t", "value", "reference", "abs_error")
