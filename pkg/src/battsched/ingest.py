"""CSV loaders for prices, usage history, degradation curves and emitted schedules.

Row numbers in error messages count data rows from 1 (the header is not a row);
the physical line number in the file is given alongside.
"""

from __future__ import annotations

import csv
import math
from datetime import datetime
from pathlib import Path

import numpy as np

from battsched.battery import BatteryParams, DegradationCurve, Schedule, soc_paths
from battsched.cost import PriceScenario

PRICE_HEADER = ("hour", "price_usd_per_kwh")
HISTORY_HEADER = ("datetime", "mw")
CURVE_HEADER = ("soc_percent", "cumulative_degradation")
SCHEDULE_HEADER = ("hour", "power_w", "soc_percent", "price_usd_per_kwh")


class IngestError(ValueError):
    def __init__(self, path, message: str, row: int | None = None):
        where = f"{path}" if row is None else f"{path}: row {row} (line {row + 1})"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.row = row


def _read_rows(path, header: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise IngestError(path, "file is empty")
        got = tuple(c.strip() for c in first)
        if got != header:
            raise IngestError(path, f"expected header {','.join(header)!r}, got {','.join(got)!r}")
        rows = []
        for i, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise IngestError(path, f"expected {len(header)} columns, got {len(cells)}", i)
            rows.append((i, [c.strip() for c in cells]))
    if not rows:
        raise IngestError(path, "no data rows")
    return rows


def _float(path, row: int, column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestError(path, f"{column} is not a number: {text!r}", row) from None
    if not math.isfinite(value):
        raise IngestError(path, f"{column} must be finite, got {text!r}", row)
    return value


def _int(path, row: int, column: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise IngestError(path, f"{column} is not an integer: {text!r}", row) from None


def ingest_prices(path) -> PriceScenario:
    """Load ``hour,price_usd_per_kwh`` rows; hours must run 0, 1, 2, ..."""
    rows = _read_rows(path, PRICE_HEADER)
    prices = []
    for expected, (row, (hour, price)) in enumerate(rows):
        h = _int(path, row, "hour", hour)
        if h != expected:
            raise IngestError(path, f"hour {h} out of sequence, expected {expected}", row)
        prices.append(_float(path, row, "price_usd_per_kwh", price))
    return PriceScenario(np.array(prices), label=Path(path).name)


def ingest_curve(path) -> DegradationCurve:
    """Load a ``soc_percent,cumulative_degradation`` curve and check its invariants."""
    rows = _read_rows(path, CURVE_HEADER)
    soc, delta = [], []
    for row, (s_text, d_text) in rows:
        s = _float(path, row, "soc_percent", s_text)
        d = _float(path, row, "cumulative_degradation", d_text)
        if d < 0:
            raise IngestError(path, "cumulative_degradation must be non-negative", row)
        if soc and s <= soc[-1]:
            raise IngestError(path, f"soc_percent {s:g} does not increase (previous {soc[-1]:g})", row)
        if delta and d < delta[-1]:
            raise IngestError(path, f"cumulative_degradation {d:g} decreases (previous {delta[-1]:g})", row)
        soc.append(s)
        delta.append(d)
    if len(soc) < 2:
        raise IngestError(path, "a degradation curve needs at least 2 knots")
    if soc[0] > 0.0 or soc[-1] < 100.0:
        raise IngestError(path, f"knots span [{soc[0]:g}, {soc[-1]:g}] but must cover [0, 100]")
    return DegradationCurve(np.array(soc), np.array(delta), source=str(path))


def ingest_history(path, allow_gaps: bool = False):
    """Load ``datetime,mw`` rows as an :class:`~battsched.forecast.HourlySeries`.

    Timestamps become integer hours after the first row. Missing hours are an
    error unless ``allow_gaps``, in which case they are skipped (not filled).
    """
    from battsched.forecast import HourlySeries

    rows = _read_rows(path, HISTORY_HEADER)
    hours, values = [], []
    t0 = None
    for row, (stamp, mw) in rows:
        try:
            t = datetime.fromisoformat(stamp)
        except ValueError:
            raise IngestError(path, f"datetime is not ISO-8601: {stamp!r}", row) from None
        try:
            seconds = 0.0 if t0 is None else (t - t0).total_seconds()
        except TypeError:
            raise IngestError(path, "cannot mix timestamps with and without a UTC offset", row) from None
        t0 = t0 or t
        if seconds % 3600:
            raise IngestError(path, f"{stamp} is not a whole number of hours after the first row", row)
        h = int(seconds // 3600)
        if hours and h <= hours[-1]:
            raise IngestError(path, f"{stamp} is not after the previous timestamp", row)
        if hours and h != hours[-1] + 1 and not allow_gaps:
            raise IngestError(path, f"{h - hours[-1] - 1} missing hour(s) before {stamp}", row)
        value = _float(path, row, "mw", mw)
        if value < 0:
            raise IngestError(path, "mw must be non-negative", row)
        hours.append(h)
        values.append(value)
    return HourlySeries(np.array(hours), np.array(values))


def ingest_schedule(path, soc_0: float, params: BatteryParams | None = None,
                    tol: float = 1e-6) -> tuple[Schedule, PriceScenario]:
    """Re-read an emitted schedule CSV. The SOC column must match the powers."""
    params = params or BatteryParams()
    rows = _read_rows(path, SCHEDULE_HEADER)
    powers, socs, prices = [], [], []
    for expected, (row, (hour, p, s, price)) in enumerate(rows):
        if _int(path, row, "hour", hour) != expected:
            raise IngestError(path, f"hour out of sequence, expected {expected}", row)
        powers.append(_float(path, row, "power_w", p))
        socs.append(_float(path, row, "soc_percent", s))
        prices.append(_float(path, row, "price_usd_per_kwh", price))
    expected_soc = soc_paths(soc_0, np.array(powers), params)
    bad = np.flatnonzero(np.abs(expected_soc - socs) > tol)
    if bad.size:
        i = int(bad[0])
        raise IngestError(path, f"soc_percent {socs[i]!r} disagrees with the powers ({expected_soc[i]!r})",
                          rows[i][0])
    return Schedule(soc_0, np.array(powers)), PriceScenario(np.array(prices), label=Path(path).name)
