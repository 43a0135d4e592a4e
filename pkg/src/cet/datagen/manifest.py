"""Raw market container and the announcement-aligned dataset manifest."""

from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParseError
from ..preprocess import EarningsVector

log = logging.getLogger(__name__)

PRE_ANNOUNCEMENT_GAP = 5


@dataclass
class MarketData:
    """Complete minute days plus quarterly earnings.

    ``drift`` and ``signal`` carry the generator's hidden values and are
    empty for ingested data.
    """

    days: dict                      # (symbol, day_index) -> (minutes, 2) close/volume
    earnings: list                  # EarningsVector, announce_timestamp = announce_day_index
    companies: list                 # (symbol, sector)
    drift: dict = field(default_factory=dict)
    signal: dict = field(default_factory=dict)

    def sector_of(self, symbol: str) -> str:
        return dict(self.companies)[symbol]


@dataclass(frozen=True)
class DayEntry:
    symbol: str
    day_index: int
    quarter_id: int      # quarter whose announcement this day follows (post) or precedes (pool); -1 otherwise
    role: str            # "post", "pool" or "excluded"
    offset: int          # 1..5 for post days, 0 otherwise
    gap: float           # trading days to the company's next announcement (inf if none)


@dataclass
class DatasetManifest:
    companies: list                      # (symbol, sector)
    quarters: list                       # (symbol, quarter_id, announce_day_index)
    days: list                           # DayEntry
    warnings: list = field(default_factory=list)

    def post_days(self, offsets=None):
        return [d for d in self.days if d.role == "post" and (offsets is None or d.offset in offsets)]

    def pool_days(self):
        return [d for d in self.days if d.role == "pool"]


def build_manifest(market: MarketData, post_days: int = 5, min_gap: int = PRE_ANNOUNCEMENT_GAP) -> DatasetManifest:
    """Align every available day with its company's announcements.

    A day is ``post`` with offset ``d`` when it is the ``d``-th trading day
    starting at an announcement day; it joins the negative ``pool`` when it
    is no post day and its company's next announcement is at least
    ``min_gap`` trading days ahead.  Announcements without any following
    trading data are dropped with a warning.
    """
    by_symbol: dict[str, list[int]] = {}
    for (sym, day) in market.days:
        by_symbol.setdefault(sym, []).append(day)
    for v in by_symbol.values():
        v.sort()

    warnings = []
    quarters = []
    announces: dict[str, list[tuple[int, int]]] = {}
    for ev in sorted(market.earnings, key=lambda e: (e.symbol, e.announce_timestamp)):
        avail = by_symbol.get(ev.symbol, [])
        a = ev.announce_timestamp
        if not any(a <= d < a + post_days for d in avail):
            msg = f"{ev.symbol} quarter {ev.quarter_id}: no trading data after announcement day {a}; dropped"
            log.warning(msg)
            warnings.append(msg)
            continue
        quarters.append((ev.symbol, ev.quarter_id, a))
        announces.setdefault(ev.symbol, []).append((a, ev.quarter_id))

    # the exclusion rule uses every announcement, including dropped ones
    all_announces: dict[str, list[int]] = {}
    for ev in market.earnings:
        all_announces.setdefault(ev.symbol, []).append(ev.announce_timestamp)
    for v in all_announces.values():
        v.sort()

    days = []
    for sym in sorted(by_symbol):
        kept = announces.get(sym, [])
        ann_all = all_announces.get(sym, [])
        for day in by_symbol[sym]:
            role, offset, quarter = "excluded", 0, -1
            for a, q in kept:
                if a <= day < a + post_days:
                    role, offset, quarter = "post", day - a + 1, q
                    break
            j = bisect.bisect_right(ann_all, day)
            gap = float(ann_all[j] - day) if j < len(ann_all) else math.inf
            if role != "post":
                in_post_zone = any(a <= day < a + post_days for a in ann_all)
                if not in_post_zone and math.isfinite(gap) and gap >= min_gap:
                    role = "pool"
                    nxt = ann_all[j]
                    quarter = next((q for a, q in kept if a == nxt), -1)
            days.append(DayEntry(sym, day, quarter, role, offset, gap))
    return DatasetManifest(list(market.companies), quarters, days, warnings)


# -- persistence ----------------------------------------------------------

def write_manifest(manifest: DatasetManifest, out_dir, extra: dict | None = None):
    """Flat ``key = value`` summary plus index CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "n_companies": len(manifest.companies),
        "n_quarters": len(manifest.quarters),
        "n_post_days": len(manifest.post_days()),
        "n_pool_days": len(manifest.pool_days()),
        "companies_csv": "companies.csv",
        "quarters_csv": "quarters.csv",
        "days_csv": "days.csv",
        "n_warnings": len(manifest.warnings),
    }
    summary.update(extra or {})
    with open(out / "manifest.txt", "w", encoding="utf-8") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {v}\n")
    with open(out / "companies.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "sector"])
        w.writerows(manifest.companies)
    with open(out / "quarters.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "quarter_id", "announce_day_index"])
        w.writerows(manifest.quarters)
    with open(out / "days.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "day_index", "quarter_id", "role", "offset", "gap"])
        for d in manifest.days:
            w.writerow([d.symbol, d.day_index, d.quarter_id, d.role, d.offset,
                        "inf" if math.isinf(d.gap) else int(d.gap)])


def read_kv(path) -> dict:
    """Parse a flat ``key = value`` UTF-8 file (``#`` starts a comment)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}", path, lineno)
            k, v = line.split("=", 1)
            k = k.strip()
            if not k:
                raise ParseError("empty key", path, lineno)
            if k in out:
                raise ParseError(f"duplicate key {k!r}", path, lineno)
            out[k] = v.strip()
    return out


def read_manifest(out_dir) -> DatasetManifest:
    out = Path(out_dir)
    read_kv(out / "manifest.txt")
    with open(out / "companies.csv", encoding="utf-8") as fh:
        companies = [(r["symbol"], r["sector"]) for r in csv.DictReader(fh)]
    with open(out / "quarters.csv", encoding="utf-8") as fh:
        quarters = [(r["symbol"], int(r["quarter_id"]), int(r["announce_day_index"]))
                    for r in csv.DictReader(fh)]
    with open(out / "days.csv", encoding="utf-8") as fh:
        days = [DayEntry(r["symbol"], int(r["day_index"]), int(r["quarter_id"]), r["role"],
                         int(r["offset"]), float(r["gap"])) for r in csv.DictReader(fh)]
    return DatasetManifest(companies, quarters, days)


def earnings_lookup(market: MarketData) -> dict:
    return {(e.symbol, e.quarter_id): e for e in market.earnings}


def as_array(vectors) -> np.ndarray:
    return np.stack([v.metrics for v in vectors]) if vectors else np.zeros((0, 38))


__all__ = ["MarketData", "DayEntry", "DatasetManifest", "build_manifest", "write_manifest",
           "read_manifest", "read_kv", "EarningsVector", "earnings_lookup", "as_array",
           "PRE_ANNOUNCEMENT_GAP"]
