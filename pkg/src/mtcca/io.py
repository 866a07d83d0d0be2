"""CSV ingestion into :class:`PairedSample` objects."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import EmptyInput, ParseError, RowCountMismatch
from .moments import PairedSample


def read_numeric_csv(path) -> Tuple[List[str], np.ndarray]:
    """Header labels and a float matrix from a CSV file with a header row.

    Rows are numbered from 1 for the first data row; columns are reported
    by header name.  Blank lines are skipped.

    Raises
    ------
    EmptyInput
        If there is no header or no data row.
    ParseError
        On a ragged row, a non-numeric cell or a NaN/infinite value.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyInput(f"{path}: file is empty")
    header = [name.strip() for name in rows[0]]
    if not rows[1:]:
        raise EmptyInput(f"{path}: no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ParseError(r, None, f"expected {len(header)} cells, found {len(row)}")
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(r, header[c], f"not a number: {cell!r}") from None
            if not math.isfinite(value):
                raise ParseError(r, header[c], f"non-finite value {cell.strip()!r}")
            data[r - 1, c] = value
    return header, data


def ingest_csv(path_x, path_y=None, split: Optional[int] = None) -> PairedSample:
    """Load joint observations from two CSV files, or from one file whose
    first ``split`` columns are X and the rest Y."""
    labels_x, x = read_numeric_csv(path_x)
    if path_y is not None:
        labels_y, y = read_numeric_csv(path_y)
        if x.shape[0] != y.shape[0]:
            raise RowCountMismatch(f"{path_x} has {x.shape[0]} rows but {path_y} has {y.shape[0]}")
    else:
        if split is None or not 0 < split < x.shape[1]:
            raise ValueError("a single file needs a column split strictly inside its width")
        labels_y, y = labels_x[split:], x[:, split:]
        labels_x, x = labels_x[:split], x[:, :split]
    return PairedSample(x, y, tuple(labels_x), tuple(labels_y))
