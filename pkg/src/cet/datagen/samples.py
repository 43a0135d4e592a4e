"""Windowed post-announcement samples, train-only scaling, and the negative pool."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EmptyDatasetError
from ..preprocess import (
    PreprocessConfig,
    PriceWindow,
    ZStats,
    dwt_denoise,
    label_returns,
    window_end_minutes,
    zscore_standardize,
)
from .manifest import DatasetManifest, MarketData, PRE_ANNOUNCEMENT_GAP, earnings_lookup


@dataclass
class SampleSet:
    """Raw post-announcement windows, stored as day arrays plus references.

    Per-day arrays are indexed by ``day_row``; per-sample arrays by sample
    index.  ``drift`` and ``signal`` are NaN when the data carries no
    planted values.
    """

    days: np.ndarray          # (n_days, minutes, 2) raw close/volume
    symbol: np.ndarray        # per day
    sector: np.ndarray        # per day
    day_index: np.ndarray     # per day
    quarter: np.ndarray       # per day
    offset: np.ndarray        # per day, 1..5
    earnings: np.ndarray      # (n_days, 38) raw metrics of the day's quarter
    drift: np.ndarray         # per day planted per-minute drift
    signal: np.ndarray        # per day planted s(e)
    day_row: np.ndarray       # per sample
    end_minute: np.ndarray    # per sample
    returns: np.ndarray       # per sample next-minute return
    labels: np.ndarray        # per sample Movement class
    omega: int
    horizon: int

    def __len__(self):
        return len(self.day_row)

    @property
    def sample_offset(self) -> np.ndarray:
        return self.offset[self.day_row]

    @property
    def sample_sector(self) -> np.ndarray:
        return self.sector[self.day_row]

    def group_key(self) -> np.ndarray:
        """Integer id of each sample's (symbol, quarter) announcement."""
        pairs = np.char.add(np.char.add(self.symbol.astype(str), "|"), self.quarter.astype(str))
        _, inv = np.unique(pairs, return_inverse=True)
        return inv[self.day_row]

    def raw_windows(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        offs = np.arange(-self.omega + 1, 1)
        minutes = self.end_minute[idx, None] + offs[None, :]
        return self.days[self.day_row[idx, None], minutes]

    def raw_futures(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        offs = np.arange(1, self.horizon + 1)
        minutes = self.end_minute[idx, None] + offs[None, :]
        return self.days[self.day_row[idx, None], minutes]

    def window(self, i: int) -> PriceWindow:
        r = self.day_row[i]
        return PriceWindow(self.raw_windows([i])[0], int(self.end_minute[i]), str(self.symbol[r]),
                           int(self.day_index[r]), False)


def build_samples(market: MarketData, manifest: DatasetManifest, pcfg: PreprocessConfig,
                  offsets=(1, 2, 3, 4, 5)) -> SampleSet:
    """Slide windows over every post-announcement day with an offset in ``offsets``."""
    if pcfg.horizon < 1:
        raise ConfigError("horizon K must be >= 1 so every window has a next-minute label")
    entries = manifest.post_days(set(offsets))
    if not entries:
        raise EmptyDatasetError(f"no post-announcement days with offsets {sorted(offsets)}")
    lookup = earnings_lookup(market)
    minutes = market.days[(entries[0].symbol, entries[0].day_index)].shape[0]
    ends = window_end_minutes(minutes, pcfg.omega, pcfg.horizon, pcfg.stride)
    days = np.stack([market.days[(e.symbol, e.day_index)] for e in entries])
    earn = np.stack([lookup[(e.symbol, e.quarter_id)].metrics for e in entries])
    sector = np.array([lookup[(e.symbol, e.quarter_id)].sector for e in entries])
    drift = np.array([market.drift.get((e.symbol, e.day_index), np.nan) for e in entries])
    signal = np.array([market.signal.get((e.symbol, e.quarter_id), np.nan) for e in entries])
    n_days, n_w = len(entries), len(ends)
    day_row = np.repeat(np.arange(n_days), n_w)
    end_minute = np.tile(ends, n_days)
    p0 = days[day_row, end_minute, 0]
    p1 = days[day_row, end_minute + 1, 0]
    returns = (p1 - p0) / p0
    return SampleSet(
        days=days,
        symbol=np.array([e.symbol for e in entries]),
        sector=sector,
        day_index=np.array([e.day_index for e in entries]),
        quarter=np.array([e.quarter_id for e in entries]),
        offset=np.array([e.offset for e in entries]),
        earnings=earn, drift=drift, signal=signal,
        day_row=day_row, end_minute=end_minute,
        returns=returns, labels=label_returns(returns, pcfg.eps_hold),
        omega=pcfg.omega, horizon=pcfg.horizon,
    )


# -- scaling ----------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    """Price and earnings z-score statistics fitted on training samples only."""

    price: ZStats
    earnings: ZStats

    @classmethod
    def fit(cls, samples: SampleSet, train_idx) -> "Scaler":
        train_idx = np.asarray(train_idx, dtype=np.int64)
        if len(train_idx) == 0:
            raise EmptyDatasetError("cannot fit standardisation statistics on an empty training set")
        rows = np.unique(samples.day_row[train_idx])
        price = ZStats.fit(samples.days[rows].reshape(-1, samples.days.shape[-1]))
        # one earnings row per announcement, not per window
        first = {}
        for r in rows.tolist():
            first.setdefault((samples.symbol[r], samples.quarter[r]), r)
        earnings = ZStats.fit(samples.earnings[sorted(first.values())])
        return cls(price, earnings)


@dataclass
class Prepared:
    """Model-ready arrays for a subset of samples."""

    index: np.ndarray
    windows: np.ndarray      # (n, omega, 2) standardized, denoised
    futures: np.ndarray      # (n, K, 2) standardized
    earnings: np.ndarray     # (n, 38) standardized
    labels: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.index)

    def subset(self, sel) -> "Prepared":
        sel = np.asarray(sel)
        return Prepared(self.index[sel], self.windows[sel], self.futures[sel], self.earnings[sel],
                        self.labels[sel], self.returns[sel])


def standardize_windows(raw, scaler: Scaler, pcfg: PreprocessConfig) -> np.ndarray:
    z = zscore_standardize(raw, scaler.price)
    if pcfg.denoise:
        # denoise each feature along time, window by window
        z = np.swapaxes(dwt_denoise(np.swapaxes(z, -1, -2), pcfg.dwt_lambda, pcfg.dwt_levels,
                                    pcfg.dwt_mode, pcfg.wavelet), -1, -2)
    return z


def prepare(samples: SampleSet, scaler: Scaler, idx, pcfg: PreprocessConfig,
            dtype=np.float32) -> Prepared:
    idx = np.asarray(idx, dtype=np.int64)
    windows = standardize_windows(samples.raw_windows(idx), scaler, pcfg)
    futures = zscore_standardize(samples.raw_futures(idx), scaler.price)
    earnings = zscore_standardize(samples.earnings[samples.day_row[idx]], scaler.earnings)
    return Prepared(idx, windows.astype(dtype), futures.astype(dtype), earnings.astype(dtype),
                    samples.labels[idx].copy(), samples.returns[idx].copy())


# -- negative pool ------------------------------------------------------------

@dataclass
class NegativePool:
    """Pre-announcement days from which CPC negatives are drawn.

    A reference is ``(pool_row, minute)``; ``gap`` is the trading-day
    distance from the pool day to its company's next announcement.
    """

    days: np.ndarray         # (n_pool, minutes, 2) raw
    symbol: np.ndarray
    day_index: np.ndarray
    gap: np.ndarray
    omega: int = 50
    audit: dict = field(default_factory=lambda: {"drawn": 0, "violations": 0})

    def __len__(self):
        return len(self.gap)

    @property
    def minutes(self) -> int:
        return self.days.shape[1]

    @classmethod
    def from_market(cls, market: MarketData, manifest: DatasetManifest, omega: int = 50) -> "NegativePool":
        entries = manifest.pool_days()
        if not entries:
            raise EmptyDatasetError("negative pool is empty: no day lies >= 5 trading days before an announcement")
        return cls(np.stack([market.days[(e.symbol, e.day_index)] for e in entries]),
                   np.array([e.symbol for e in entries]), np.array([e.day_index for e in entries]),
                   np.array([e.gap for e in entries]), omega)

    def standardized(self, scaler: Scaler, dtype=np.float32) -> np.ndarray:
        return zscore_standardize(self.days, scaler.price).astype(dtype)

    def window_count(self) -> int:
        return len(self) * (self.minutes - self.omega + 1)

    def window_ref(self, flat):
        per_day = self.minutes - self.omega + 1
        flat = np.asarray(flat)
        return flat // per_day, self.omega - 1 + flat % per_day

    def record(self, rows):
        rows = np.asarray(rows).ravel()
        self.audit["drawn"] += rows.size
        self.audit["violations"] += int(np.count_nonzero(self.gap[rows] < PRE_ANNOUNCEMENT_GAP))

    def draw_minutes(self, shape, rng: np.random.Generator, lo: int = 0):
        """Uniform ``(pool_row, minute)`` references, distinct along the last axis.

        Minutes are drawn from ``[lo, minutes)``; passing ``lo = omega``
        restricts them to minutes that can follow a full window.
        """
        n_neg = shape[-1]
        span = self.minutes - lo
        total = len(self) * span
        if n_neg > total:
            raise ConfigError(f"negative pool holds {total} minutes, fewer than n_neg={n_neg}")
        flat = rng.integers(0, total, size=shape)
        rows2d = flat.reshape(-1, n_neg)
        while True:
            s = np.sort(rows2d, axis=1)
            bad = np.flatnonzero((s[:, 1:] == s[:, :-1]).any(axis=1))
            if len(bad) == 0:
                break
            rows2d[bad] = rng.integers(0, total, size=(len(bad), n_neg))
        flat = rows2d.reshape(shape)
        rows, minutes = flat // span, lo + flat % span
        self.record(rows)
        return rows, minutes


def sample_negatives(pool: NegativePool, n_neg: int = 20, rng: np.random.Generator | None = None):
    """Draw ``n_neg`` distinct pool windows uniformly without replacement.

    Returns a list of :class:`PriceWindow` (raw values) whose provenance
    fields identify the pool day.
    """
    if len(pool) == 0:
        raise EmptyDatasetError("negative pool is empty")
    total = pool.window_count()
    if n_neg > total:
        raise ConfigError(f"negative pool holds {total} windows, fewer than n_neg={n_neg}")
    rng = np.random.default_rng() if rng is None else rng
    flat = rng.choice(total, size=n_neg, replace=False)
    rows, ends = pool.window_ref(flat)
    pool.record(rows)
    out = []
    for r, e in zip(rows.tolist(), ends.tolist()):
        vals = pool.days[r, e - pool.omega + 1:e + 1]
        out.append(PriceWindow(vals.copy(), e, str(pool.symbol[r]), int(pool.day_index[r]), False))
    return out
