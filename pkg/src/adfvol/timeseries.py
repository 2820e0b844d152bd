"""
CSV ingestion, log-returns and date alignment.

Alignment convention: a target value stamped at date t is the volatility
over [t, t+1), to be predicted from returns observed up to and including t.
Returns and targets are therefore joined on identical dates.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np

logger = logging.getLogger(__name__)

TRADING_DAYS = 252

ReturnKind = Literal["prices", "returns"]
TargetKind = Literal["realized_vol", "implied_vol"]
LoadKind = Literal[
    "prices", "returns", "realized_vol", "realized_variance", "implied_vol", "vix"
]
Units = Literal["daily", "annualized"]


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _as_dates(timestamps) -> np.ndarray:
    return np.asarray(timestamps, dtype="datetime64[D]")


def _check_dates(dates: np.ndarray) -> None:
    if dates.size > 1:
        steps = np.diff(dates).astype(np.int64)
        if np.any(steps == 0):
            dup = dates[1:][steps == 0][0]
            raise DataError(f"duplicate date {dup}")
        if np.any(steps < 0):
            bad = dates[1:][steps < 0][0]
            raise DataError(f"dates not increasing at {bad}")


@dataclass(frozen=True)
class ReturnSeries:
    """Dated observations: prices, or daily log-returns."""

    timestamps: np.ndarray
    values: np.ndarray
    source: ReturnKind = "returns"
    dropped_rows: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ts = _as_dates(self.timestamps)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if self.source not in ("prices", "returns"):
            raise ValueError(f"unknown source {self.source!r}")
        if ts.shape != vals.shape or vals.ndim != 1:
            raise DataError("timestamps and values must be 1-d of equal length")
        if vals.size < (2 if self.source == "prices" else 1):
            raise DataError(f"too few observations for a {self.source} series")
        if not np.all(np.isfinite(vals)):
            raise DataError("series contains non-finite values")
        _check_dates(ts)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def sample_mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True)
class TargetSeries:
    """Dated volatility observations in daily units (per square-root day)."""

    timestamps: np.ndarray
    values: np.ndarray
    kind: TargetKind = "realized_vol"
    dropped_rows: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ts = _as_dates(self.timestamps)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        if self.kind not in ("realized_vol", "implied_vol"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if ts.shape != vals.shape or vals.ndim != 1:
            raise DataError("timestamps and values must be 1-d of equal length")
        if vals.size == 0:
            raise DataError("empty target series")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DataError("target values must be finite and non-negative")
        _check_dates(ts)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class AlignedPair:
    """Returns and target sharing exactly the same dates."""

    returns: ReturnSeries
    target: TargetSeries

    def __len__(self) -> int:
        return len(self.returns)

    @property
    def timestamps(self) -> np.ndarray:
        return self.returns.timestamps


def _normalize(values: np.ndarray, kind: str, units: str) -> tuple[np.ndarray, str]:
    """Convert raw column values into daily volatility; returns (values, target kind)."""
    if units not in ("daily", "annualized"):
        raise ValueError(f"units must be 'daily' or 'annualized', got {units!r}")
    annual = units == "annualized"
    if kind == "realized_variance":
        var = values / TRADING_DAYS if annual else values
        if np.any(var < 0):
            raise DataError("negative realized variance")
        return np.sqrt(var), "realized_vol"
    if kind == "vix":
        # VIX is quoted in annualized percent
        return values / (100.0 * math.sqrt(TRADING_DAYS)), "implied_vol"
    scale = math.sqrt(TRADING_DAYS) if annual else 1.0
    return values / scale, kind


def load_csv(
    path: Union[str, Path],
    column: str,
    kind: LoadKind,
    date_column: str = "date",
    units: Units = "daily",
) -> Union[ReturnSeries, TargetSeries]:
    """
    Load one dated column from a CSV file.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV with a header row and ISO-8601 dates.
    column : str
        Name of the value column.
    kind : {"prices", "returns", "realized_vol", "realized_variance", "implied_vol", "vix"}
        How to read the column. Volatility-like kinds are converted to daily
        volatility and returned as a :class:`TargetSeries`.
    date_column : str
        Name of the date column.
    units : {"daily", "annualized"}
        Units of volatility-like inputs. Annualized variance is divided by 252,
        annualized volatility by sqrt(252). Ignored for prices and returns.

    Rows with an empty value cell are dropped and their line numbers recorded
    in ``dropped_rows``. Unparseable cells raise :class:`DataError`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for name in (date_column, column):
            if name not in header:
                raise DataError(f"{path}: missing column {name!r} (have {header})")
        i_date, i_val = header.index(date_column), header.index(column)

        dates, values, dropped = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            raw_date, raw_val = row[i_date].strip(), row[i_val].strip()
            if raw_val == "" or raw_val.lower() in ("na", "nan", "null"):
                dropped.append(line_no)
                continue
            try:
                d = np.datetime64(raw_date, "D")
                v = float(raw_val)
            except ValueError:
                raise DataError(f"{path}:{line_no}: cannot parse {row!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{line_no}: non-finite value {raw_val!r}")
            dates.append(d)
            values.append(v)

    if not values:
        raise DataError(f"{path}: no data rows")
    if dropped:
        logger.warning("%s: dropped %d rows with missing values (lines %s)",
                       path, len(dropped), dropped[:10])
    ts = np.array(dates, dtype="datetime64[D]")
    vals = np.array(values)
    try:
        _check_dates(ts)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None

    if kind in ("prices", "returns"):
        return ReturnSeries(ts, vals, source=kind, dropped_rows=tuple(dropped))
    if kind not in ("realized_vol", "realized_variance", "implied_vol", "vix"):
        raise ValueError(f"unknown kind {kind!r}")
    vals, target_kind = _normalize(vals, kind, units)
    return TargetSeries(ts, vals, kind=target_kind, dropped_rows=tuple(dropped))


def log_returns(prices: ReturnSeries) -> ReturnSeries:
    """Daily log-returns ln(p[i]) - ln(p[i-1]), stamped at the later date."""
    if prices.source != "prices":
        raise ValueError("log_returns expects a price series")
    if np.any(prices.values <= 0):
        bad = prices.timestamps[np.argmax(prices.values <= 0)]
        raise DataError(f"non-positive price at {bad}")
    r = np.diff(np.log(prices.values))
    return ReturnSeries(prices.timestamps[1:], r, source="returns")


def _subset(series, mask):
    cls = type(series)
    extra = {"source": series.source} if cls is ReturnSeries else {"kind": series.kind}
    return cls(series.timestamps[mask], series.values[mask], **extra)


def join(returns: ReturnSeries, target: TargetSeries) -> AlignedPair:
    """Keep only dates present in both series."""
    common, i_r, i_t = np.intersect1d(returns.timestamps, target.timestamps,
                                      assume_unique=True, return_indices=True)
    if common.size == 0:
        raise DataError("returns and target share no dates")
    r = ReturnSeries(common, returns.values[i_r], source="returns")
    t = TargetSeries(common, target.values[i_t], kind=target.kind)
    return AlignedPair(r, t)


def join_and_split(returns: ReturnSeries, target: TargetSeries,
                   boundary) -> tuple[AlignedPair, AlignedPair]:
    """
    Align returns and target by date, then split at ``boundary``.

    Dates strictly before ``boundary`` are in-sample, the rest out-of-sample.
    """
    if returns.source != "returns":
        raise ValueError("join_and_split expects log-returns, not prices")
    pair = join(returns, target)
    b = np.datetime64(boundary, "D")
    ts = pair.timestamps
    if not (ts[0] < b <= ts[-1]):
        raise DataError(f"split boundary {b} not inside aligned range [{ts[0]}, {ts[-1]}]")
    before = ts < b
    if not before.any() or before.all():
        raise DataError(f"split at {b} leaves one side without aligned dates")
    ins = AlignedPair(_subset(pair.returns, before), _subset(pair.target, before))
    oos = AlignedPair(_subset(pair.returns, ~before), _subset(pair.target, ~before))
    return ins, oos
