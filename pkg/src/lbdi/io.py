"""Reading count series from CSV."""
from __future__ import annotations

import csv
import datetime as dt

import numpy as np

from .errors import GapError, ParseError


def load_counts(path) -> np.ndarray:
    """Read per-period new-isolated counts.

    Accepts either a ``date,count`` file with that header (ISO dates, one row
    per consecutive day) or a headerless single column of integers.  Missing,
    duplicated or unordered dates raise :class:`GapError`; nothing is imputed.
    """
    with open(path, newline="") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]
    if not rows:
        raise ParseError("empty count file")

    header = [c.strip().lower() for c in rows[0][1]]
    if header == ["date", "count"]:
        return _dated(rows[1:])
    if header and header[0] in ("date", "count"):
        raise ParseError(f"unexpected header {rows[0][1]!r}; expected 'date,count'", 1)
    return np.array([_parse_count(row, n, 0, 1) for n, row in rows], dtype=np.int64)


def _parse_count(row, line, col, width):
    if len(row) != width:
        raise ParseError(f"expected {width} column(s), got {len(row)}", line)
    try:
        value = int(row[col].strip())
    except ValueError:
        raise ParseError(f"not an integer count: {row[col]!r}", line) from None
    if value < 0:
        raise ParseError(f"negative count {value}", line)
    return value


def _dated(rows) -> np.ndarray:
    if not rows:
        raise ParseError("count file has a header but no data")
    dates, counts = [], []
    for n, row in rows:
        counts.append(_parse_count(row, n, 1, 2))
        try:
            dates.append(dt.date.fromisoformat(row[0].strip()))
        except ValueError:
            raise ParseError(f"bad date {row[0]!r}", n) from None
    missing, dupes = [], []
    for prev, cur in zip(dates, dates[1:]):
        step = (cur - prev).days
        if step <= 0:
            dupes.append(cur.isoformat())
        else:
            missing.extend((prev + dt.timedelta(days=k)).isoformat() for k in range(1, step))
    if dupes:
        raise GapError(f"dates not strictly increasing at {', '.join(dupes[:10])}", dupes)
    if missing:
        raise GapError(f"{len(missing)} missing date(s): {', '.join(missing[:10])}", missing)
    return np.array(counts, dtype=np.int64)
