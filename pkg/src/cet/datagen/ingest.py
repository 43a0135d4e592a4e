"""CSV persistence for minute bars and quarterly earnings."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import DataQualityError, EmptyDatasetError, ParseError
from ..preprocess import EARNINGS_DIM, MinuteBar, EarningsVector, interpolate_missing
from .manifest import DatasetManifest, MarketData, build_manifest

BAR_HEADER = ["symbol", "day_index", "minute_index", "close", "volume"]
EARNINGS_HEADER = ["symbol", "quarter_id", "announce_day_index", "sector"] + \
    [f"m{i:02d}" for i in range(1, EARNINGS_DIM + 1)]


def write_bars_csv(market: MarketData, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(BAR_HEADER) + "\n")
        for (sym, day) in sorted(market.days):
            arr = market.days[(sym, day)]
            fh.writelines(f"{sym},{day},{m},{c!r},{v!r}\n"
                          for m, (c, v) in enumerate(arr.tolist()))


def write_earnings_csv(market: MarketData, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EARNINGS_HEADER)
        for e in sorted(market.earnings, key=lambda e: (e.symbol, e.quarter_id)):
            w.writerow([e.symbol, e.quarter_id, e.announce_timestamp, e.sector]
                       + [repr(float(x)) for x in e.metrics])


def _rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise EmptyDatasetError(f"{path}: empty file")
        if [h.strip() for h in first] != header:
            raise ParseError(f"bad header {first!r}, expected {','.join(header)}", path, 1)
        n = 0
        for row in reader:
            n += 1
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row
        if n == 0:
            raise EmptyDatasetError(f"{path}: no data rows")


def read_bars_csv(path, minutes: int = 390) -> dict:
    """Parse, validate and interpolate minute bars into complete days."""
    per_day: dict[tuple, dict[int, tuple]] = {}
    for lineno, row in _rows(path, BAR_HEADER):
        if len(row) != len(BAR_HEADER):
            raise ParseError(f"expected {len(BAR_HEADER)} fields, got {len(row)}", path, lineno)
        try:
            sym = row[0].strip()
            day, minute = int(row[1]), int(row[2])
            close, volume = float(row[3]), float(row[4])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if not sym:
            raise ParseError("empty symbol", path, lineno)
        if not (0 <= minute < minutes):
            raise ParseError(f"minute_index {minute} outside [0, {minutes})", path, lineno)
        if not (np.isfinite(close) and close > 0):
            raise ParseError(f"close must be a positive number, got {row[3]!r}", path, lineno)
        if not (np.isfinite(volume) and volume >= 0):
            raise ParseError(f"volume must be non-negative, got {row[4]!r}", path, lineno)
        slot = per_day.setdefault((sym, day), {})
        if minute in slot:
            raise DataQualityError(
                f"{path}:{lineno}: duplicate bar for ({sym}, day {day}, minute {minute}); "
                f"first seen on line {slot[minute][0]}")
        slot[minute] = (lineno, close, volume)
    days = {}
    for (sym, day), slot in per_day.items():
        bars = [MinuteBar(sym, day, m, c, v) for m, (_, c, v) in slot.items()]
        try:
            days[(sym, day)] = interpolate_missing(bars, minutes)
        except DataQualityError as exc:
            raise DataQualityError(f"{path}: {sym} day {day}: {exc}") from None
    return days


def read_earnings_csv(path) -> list:
    out, seen = [], {}
    for lineno, row in _rows(path, EARNINGS_HEADER):
        if len(row) != len(EARNINGS_HEADER):
            raise ParseError(f"expected {len(EARNINGS_HEADER)} fields, got {len(row)}", path, lineno)
        try:
            sym = row[0].strip()
            q, ann = int(row[1]), int(row[2])
            metrics = np.array([float(x) for x in row[4:]])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if not np.isfinite(metrics).all():
            raise ParseError("non-finite earnings metric", path, lineno)
        key = (sym, q)
        if key in seen:
            raise DataQualityError(f"{path}:{lineno}: duplicate earnings row for {key}; "
                                   f"first seen on line {seen[key]}")
        seen[key] = lineno
        out.append(EarningsVector(metrics, sym, q, ann, row[3].strip()))
    return out


def ingest_csv(bars_path, earnings_path, minutes: int = 390, post_days: int = 5):
    """Load both files and build the announcement-aligned manifest.

    Returns ``(manifest, market)``.
    """
    earnings = read_earnings_csv(earnings_path)
    days = read_bars_csv(bars_path, minutes)
    companies = sorted({(e.symbol, e.sector) for e in earnings})
    market = MarketData(days=days, earnings=earnings, companies=companies)
    manifest: DatasetManifest = build_manifest(market, post_days=post_days)
    return manifest, market


def save_market(market: MarketData, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_bars_csv(market, out / "bars.csv")
    write_earnings_csv(market, out / "earnings.csv")
    return out / "bars.csv", out / "earnings.csv"
