from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import ConfigError, EmptyDataError

log = logging.getLogger(__name__)


def _parse(value: str) -> float | None:
    try:
        v = float(value)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def load_csv(path, outcome: str, covariates, intercept: bool = True) -> tuple[Dataset, list[str]]:
    """Read selected numeric columns from a headed, comma-separated UTF-8 file.

    Rows with a missing or non-numeric value in any selected column are
    dropped; the returned warnings say how many.
    """
    covariates = list(covariates)
    if not covariates:
        raise ConfigError("at least one covariate column is required")
    if outcome in covariates:
        raise ConfigError(f"outcome column {outcome!r} is also listed as a covariate")
    if len(set(covariates)) != len(covariates):
        raise ConfigError("covariate columns must be distinct")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise ConfigError(f"duplicated header name(s): {', '.join(dupes)}")
        missing = [c for c in [outcome, *covariates] if c not in header]
        if missing:
            raise ConfigError(
                f"unknown column(s) {', '.join(missing)}; available: {', '.join(header)}"
            )
        cols = [header.index(c) for c in [outcome, *covariates]]
        rows, dropped = [], 0
        for line in reader:
            if not line or all(not cell.strip() for cell in line):
                continue
            vals = [_parse(line[j]) if j < len(line) else None for j in cols]
            if any(v is None for v in vals):
                dropped += 1
                continue
            rows.append(vals)

    warnings = []
    if dropped:
        msg = f"dropped {dropped} row(s) with missing or non-numeric values"
        log.warning(msg)
        warnings.append(msg)
    if not rows:
        raise EmptyDataError(f"no usable rows in {path}")
    arr = np.array(rows, dtype=float)
    data = Dataset.from_arrays(arr[:, 1:], arr[:, 0], intercept=intercept, names=covariates)
    return data, warnings
