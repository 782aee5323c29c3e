"""Univariate time series with explicit missing-value handling.

Series are stored as a value array plus a boolean observation mask.  Missing
entries hold NaN internally, but numeric code must never read them directly:
everything downstream branches on the mask, so the stored sentinel is an
implementation detail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """Univariate series of length N with an observation mask.

    Parameters
    ----------
    values : ndarray of float, shape (N,)
        Observation values.  Entries where ``observed`` is False are
        sentinels (NaN) and carry no information.
    observed : ndarray of bool, shape (N,)
        True where the value was actually observed.
    label : str
        Free-text name for reports.
    sampling_period : str, optional
        Free-text sampling metadata (e.g. "monthly", "2h").
    """

    values: np.ndarray
    observed: np.ndarray
    label: str = ""
    sampling_period: Optional[str] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).copy()
        observed = np.asarray(self.observed, dtype=bool).copy()
        if values.ndim != 1 or observed.ndim != 1:
            raise ValueError("values and observed must be one-dimensional")
        if values.shape[0] != observed.shape[0]:
            raise ValueError(
                f"length mismatch: {values.shape[0]} values vs "
                f"{observed.shape[0]} mask entries"
            )
        if values.shape[0] == 0:
            raise ValueError("series must contain at least one entry")
        if not observed.any():
            raise ValueError("series has no observed entries")
        # one sentinel representation: NaN wherever the mask says missing
        values[~observed] = np.nan
        values.flags.writeable = False
        observed.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def observed_values(self) -> np.ndarray:
        """The observed entries only, in order."""
        return self.values[self.observed]

    def with_values(self, values: np.ndarray, label: Optional[str] = None) -> "TimeSeries":
        return TimeSeries(
            values=values,
            observed=self.observed,
            label=self.label if label is None else label,
            sampling_period=self.sampling_period,
        )


def from_values(values: Sequence[float], label: str = "",
                sampling_period: Optional[str] = None) -> TimeSeries:
    """Build a fully-observed TimeSeries, treating NaN entries as missing."""
    arr = np.asarray(values, dtype=float)
    return TimeSeries(arr, ~np.isnan(arr), label=label, sampling_period=sampling_period)


def _parse_cell(cell: str, missing_token: str) -> tuple[float, bool]:
    text = cell.strip()
    if text == missing_token or text == "":
        return math.nan, False
    try:
        return float(text), True
    except ValueError:
        return math.nan, False


def load_csv(path: str, column: Union[str, int] = 0,
             missing_token: str = "") -> TimeSeries:
    """Load one column of a CSV file as a TimeSeries.

    An optional single header row is auto-detected: if ``column`` is a name
    it must appear in the first row; if it is an index, the first row is
    taken as a header when its cell in that column is non-numeric and is not
    the missing token.  Cells equal to ``missing_token``, empty, or
    non-numeric become missing entries.
    """
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: zero rows")

    if isinstance(column, str):
        header = [c.strip() for c in rows[0]]
        if column not in header:
            raise ValueError(f"{path}: column {column!r} not found in header {header}")
        idx = header.index(column)
        data_rows = rows[1:]
    else:
        idx = int(column)
        if idx >= len(rows[0]):
            raise ValueError(f"{path}: column index {idx} out of range")
        first = rows[0][idx].strip()
        _, first_is_number = _parse_cell(first, missing_token)
        has_header = not first_is_number and first != missing_token and first != ""
        data_rows = rows[1:] if has_header else rows

    if not data_rows:
        raise ValueError(f"{path}: zero rows")

    values = np.empty(len(data_rows))
    observed = np.empty(len(data_rows), dtype=bool)
    for i, row in enumerate(data_rows):
        cell = row[idx] if idx < len(row) else ""
        values[i], observed[i] = _parse_cell(cell, missing_token)

    if not observed.any():
        raise ValueError(f"{path}: all rows missing")
    return TimeSeries(values, observed, label=str(column))


def log_transform(ts: TimeSeries) -> TimeSeries:
    """Natural log of every observed value; the mask is unchanged."""
    bad = ts.observed & ~(ts.values > 0)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"log_transform requires positive values; value {ts.values[idx]!r} "
            f"at index {idx}"
        )
    out = ts.values.copy()
    out[ts.observed] = np.log(out[ts.observed])
    return ts.with_values(out)


def resample_decimate(ts: TimeSeries, step: int) -> TimeSeries:
    """Keep every ``step``-th entry starting at index 0."""
    if step < 1:
        raise ValueError("step must be a positive integer")
    return TimeSeries(
        ts.values[::step],
        ts.observed[::step],
        label=ts.label,
        sampling_period=ts.sampling_period,
    )


def subtract_series(ts: TimeSeries, q: Sequence[float]) -> TimeSeries:
    """Elementwise ts - q on observed entries; missing entries stay missing."""
    q = np.asarray(q, dtype=float)
    if q.shape != ts.values.shape:
        raise ValueError(f"length mismatch: series has {len(ts)} entries, q has {q.shape[0]}")
    out = ts.values.copy()
    out[ts.observed] = out[ts.observed] - q[ts.observed]
    return ts.with_values(out)
