"""Minute-bar cleaning, standardisation, wavelet smoothing, windowing, labels."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DataQualityError, NumericError

MINUTES_PER_DAY = 390
EARNINGS_DIM = 38
DEFAULT_EPS_HOLD = 2e-4


@dataclass(frozen=True)
class MinuteBar:
    symbol: str
    day_index: int
    minute_index: int
    close: float
    volume: float


@dataclass
class PriceWindow:
    values: np.ndarray  # (omega, upsilon)
    end_minute: int
    symbol: str = ""
    day_index: int = -1
    standardized: bool = False

    @property
    def omega(self) -> int:
        return self.values.shape[0]


@dataclass
class EarningsVector:
    metrics: np.ndarray
    symbol: str
    quarter_id: int
    announce_timestamp: int
    sector: str

    def __post_init__(self):
        self.metrics = np.asarray(self.metrics, dtype=np.float64)
        if self.metrics.shape != (EARNINGS_DIM,):
            raise DataError(f"earnings vector for {self.symbol} q{self.quarter_id} has shape "
                            f"{self.metrics.shape}, expected ({EARNINGS_DIM},)")


class Movement(enum.IntEnum):
    UP = 0
    DOWN = 1
    HOLD = 2


@dataclass(frozen=True)
class MovementLabel:
    movement: Movement
    realized_return: float


# -- cleaning ---------------------------------------------------------------

def interpolate_missing(bars, minutes: int = MINUTES_PER_DAY) -> np.ndarray:
    """Fill a day's bars out to ``minutes`` slots.

    Interior gaps are linearly interpolated between the nearest present
    neighbours; leading and trailing gaps copy the nearest present value.
    Returns an array of shape ``(minutes, 2)`` holding ``close, volume``.
    """
    bars = sorted(bars, key=lambda b: b.minute_index)
    idx = np.array([b.minute_index for b in bars], dtype=np.int64)
    if len(idx) < 2:
        raise DataQualityError(f"day has {len(idx)} bar(s); at least 2 are needed to interpolate")
    if np.any(np.diff(idx) <= 0):
        dup = idx[np.flatnonzero(np.diff(idx) <= 0)[0]]
        raise DataQualityError(f"duplicate minute_index {dup} within a day")
    if idx[0] < 0 or idx[-1] >= minutes:
        raise DataQualityError(f"minute_index outside [0, {minutes})")
    grid = np.arange(minutes)
    close = np.interp(grid, idx, [b.close for b in bars])
    volume = np.interp(grid, idx, [b.volume for b in bars])
    return np.stack([close, volume], axis=1)


# -- standardisation ----------------------------------------------------------

@dataclass(frozen=True)
class ZStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows) -> "ZStats":
        """Per-column population statistics of the training rows."""
        rows = np.asarray(rows, dtype=np.float64)
        rows = rows.reshape(-1, rows.shape[-1]) if rows.ndim > 1 else rows.reshape(-1, 1)
        return cls(rows.mean(axis=0), rows.std(axis=0))


def zscore_standardize(series, stats: ZStats) -> np.ndarray:
    """``(x - mean) / std`` with zeros wherever ``std < 1e-12``."""
    mean = np.asarray(stats.mean, dtype=np.float64)
    std = np.asarray(stats.std, dtype=np.float64)
    if not (np.isfinite(mean).all() and np.isfinite(std).all()):
        raise NumericError("zscore_standardize: non-finite statistics")
    x = np.asarray(series, dtype=np.float64)
    flat = std < 1e-12
    safe = np.where(flat, 1.0, std)
    out = (x - mean) / safe
    if np.any(flat):
        out = np.where(flat, 0.0, out)
    return out


# -- wavelet smoothing --------------------------------------------------------

_WAVELETS = {"haar", "db1"}


def _haar_forward(x):
    even, odd = x[..., 0::2], x[..., 1::2]
    return (even + odd) / math.sqrt(2.0), (even - odd) / math.sqrt(2.0)


def _haar_inverse(approx, detail):
    out = np.empty(approx.shape[:-1] + (approx.shape[-1] * 2,), dtype=np.float64)
    out[..., 0::2] = (approx + detail) / math.sqrt(2.0)
    out[..., 1::2] = (approx - detail) / math.sqrt(2.0)
    return out


def haar_decompose(x, levels: int):
    """Multi-level orthonormal Haar transform along the last axis."""
    approx = np.asarray(x, dtype=np.float64)
    details = []
    for _ in range(levels):
        approx, d = _haar_forward(approx)
        details.append(d)
    return approx, details


def haar_reconstruct(approx, details):
    for d in reversed(details):
        approx = _haar_inverse(approx, d)
    return approx


def dwt_denoise(series, lam: float = 0.7, levels: int = 2, mode: str = "above",
                wavelet: str = "haar") -> np.ndarray:
    """Zero detail coefficients on one side of ``lam`` and invert the transform.

    ``mode="above"`` zeroes coefficients with ``|c| > lam``; ``"below"``
    zeroes ``|c| <= lam`` (conventional hard-threshold denoising).  Works
    along the last axis; inputs whose length is not a multiple of
    ``2**levels`` are edge-padded and cropped back.
    """
    if wavelet not in _WAVELETS:
        raise ConfigError(f"unsupported wavelet {wavelet!r}; available: {sorted(_WAVELETS)}")
    if mode not in ("above", "below"):
        raise ConfigError(f"dwt_mode must be 'above' or 'below', got {mode!r}")
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[-1]
    block = 2 ** levels
    if levels < 1 or n < block:
        raise ConfigError(f"series of length {n} is too short for {levels} decomposition level(s)")
    pad = (-n) % block
    if pad:
        widths = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
        x = np.pad(x, widths, mode="edge")
    approx, details = haar_decompose(x, levels)
    kept = []
    for d in details:
        drop = np.abs(d) > lam if mode == "above" else np.abs(d) <= lam
        kept.append(np.where(drop, 0.0, d))
    return haar_reconstruct(approx, kept)[..., :n]


# -- windows and labels -------------------------------------------------------

def window_count(n_minutes: int, omega: int, horizon: int, stride: int = 1) -> int:
    if omega < 1 or horizon < 0 or omega + horizon > n_minutes:
        raise ConfigError(f"omega + K = {omega + horizon} exceeds the {n_minutes}-minute day")
    return (n_minutes - omega - horizon) // stride + 1


def window_end_minutes(n_minutes: int, omega: int, horizon: int, stride: int = 1) -> np.ndarray:
    """Index of the last context minute of every sliding window."""
    count = window_count(n_minutes, omega, horizon, stride)
    return omega - 1 + stride * np.arange(count)


def make_windows(day, omega: int = 50, horizon: int = 5, stride: int = 1, symbol: str = "",
                 day_index: int = -1, standardized: bool = False):
    """Slide an ``omega``-minute context plus ``horizon`` future minutes over a day.

    ``day`` is a ``(minutes, features)`` array.  Returns a list of
    ``(PriceWindow, future)`` pairs where ``future`` has shape
    ``(horizon, features)``.
    """
    day = np.asarray(day, dtype=np.float64)
    if day.ndim == 1:
        day = day[:, None]
    ends = window_end_minutes(day.shape[0], omega, horizon, stride)
    out = []
    for end in ends:
        start = end - omega + 1
        win = PriceWindow(day[start:end + 1].copy(), int(end), symbol, day_index, standardized)
        out.append((win, day[end + 1:end + 1 + horizon].copy()))
    return out


def label_movement(price_t: float, price_t1: float, eps_hold: float = DEFAULT_EPS_HOLD) -> MovementLabel:
    if not price_t > 0:
        raise DataError(f"label_movement: price must be positive, got {price_t}")
    r = (price_t1 - price_t) / price_t
    if r > eps_hold:
        return MovementLabel(Movement.UP, r)
    if r < -eps_hold:
        return MovementLabel(Movement.DOWN, r)
    return MovementLabel(Movement.HOLD, r)


def label_returns(returns, eps_hold: float = DEFAULT_EPS_HOLD) -> np.ndarray:
    """Vectorised :func:`label_movement` over precomputed returns."""
    r = np.asarray(returns, dtype=np.float64)
    out = np.full(r.shape, int(Movement.HOLD), dtype=np.int64)
    out[r > eps_hold] = int(Movement.UP)
    out[r < -eps_hold] = int(Movement.DOWN)
    return out


@dataclass
class PreprocessConfig:
    omega: int = 50
    horizon: int = 5
    stride: int = 1
    eps_hold: float = DEFAULT_EPS_HOLD
    dwt_lambda: float = 0.7
    dwt_levels: int = 2
    dwt_mode: str = "above"
    wavelet: str = "haar"
    denoise: bool = True
