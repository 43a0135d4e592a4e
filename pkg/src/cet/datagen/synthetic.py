"""Synthetic minute bars and earnings with a planted, decaying drift.

The world is built so that the hidden drift on each post-announcement day
is a deterministic function of that quarter's earnings vector, which gives
every downstream experiment a known, learnable signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.signal import lfilter

from ..errors import ConfigError
from ..preprocess import EARNINGS_DIM, MINUTES_PER_DAY, EarningsVector

SECTORS = (
    "Basic Materials", "Communications", "Consumer Cyclical", "Consumer Non-Cyclical",
    "Energy", "Financial", "Industrial", "Technology", "Utilities",
)

# Example tickers per sector; only used to name synthetic companies.
EXAMPLE_SYMBOLS = {
    "Basic Materials": ["APD", "AA", "ATI", "CF", "DOW", "DD", "EMN", "FMC", "FCX", "IFF"],
    "Communications": ["AMZN", "T", "CBS", "CTL", "CSCO", "CMCSA", "GLW", "DISCA", "EBAY", "EXPE"],
    "Consumer Cyclical": ["AN", "AZO", "RL", "BBY", "BWA", "KMX", "CCL", "M", "COST", "DHI"],
    "Consumer Non-Cyclical": ["ABT", "AET", "CAH", "AGN", "MO", "ABC", "HRB", "ADM", "ADP", "AVY"],
    "Energy": ["APC", "APA", "BHI", "COG", "CHK", "CVX", "COP", "CNX", "DVN", "EOG"],
    "Financial": ["AFL", "ALL", "AXP", "AIG", "AMT", "AMP", "AON", "AIV", "AIZ", "AVB"],
    "Industrial": ["CAT", "CBE", "CSX", "CMI", "DE", "DOV", "ETN", "EMR", "MMM", "FDX"],
    "Technology": ["EA", "EMC", "FIS", "FISV", "HPQ", "INTC", "IBM", "INTU", "MU", "MSFT"],
    "Utilities": ["AES", "AEE", "AEP", "CNP", "CMS", "ED", "D", "DTE", "DUK", "EIX"],
}

EARNINGS_METRICS = (
    "Cash change %", "Operating Cash change %", "Cost of Revenue change %", "Current Ratio",
    "Dividend Payout Ratio", "Dividend Yield", "Free Cash Flow change %", "Gross Profit change %",
    "Operating Income change %", "Inventory Turnover change %", "Net Debt to EBIT",
    "Net Income change %", "Operating Expenses change %", "Operating Margin",
    "Price to Book Ratio", "Price to Cashflow Ratio", "Price to Sales Ratio", "Quick Ratio",
    "Return On Assets", "Return On Common Equity", "Revenue change %", "Short Term Debt change %",
    "Total Liabilities change %", "Total Asset change %", "Total Debt to Total Assets",
    "Total Debt to Total Equity", "Total Inventory change %", "EBITDA change %",
    "EPS change %", "Interest Coverage", "Asset Turnover", "Capex change %",
    "Receivables Turnover change %", "Payables change %", "Gross Margin", "Book Value change %",
    "Earnings Surprise", "Earnings Surprise change",
)
assert len(EARNINGS_METRICS) == EARNINGS_DIM


@dataclass
class SyntheticConfig:
    n_companies: int = 18
    n_quarters: int = 10
    sectors: tuple = SECTORS
    base_vol: float = 5e-4            # per-minute log-return std
    drift_strength: float = 3e-4      # per-minute drift on day 1 at |s(e)| = 1
    drift_decay: float = 0.5          # per-day multiplier after day 1
    signal_map_seed: int = 7
    seed: int = 0
    minutes: int = MINUTES_PER_DAY
    post_days: int = 5
    pool_days: int = 3                # pre-announcement days simulated per quarter
    pool_gap: int = 6                 # trading days from the latest pool day to the announcement
    days_per_quarter: int = 63
    announce_day: int = 45            # announcement's trading-day offset inside its quarter
    signal_gain: float = 1.5
    n_factors: int = 4
    company_effect: float = 0.6
    idio_noise: float = 0.5
    volume_ar: float = 0.9
    volume_noise: float = 0.5         # stationary std of the log-volume AR(1) component

    def validate(self):
        if not self.base_vol > 0:
            raise ConfigError(f"base_vol must be positive, got {self.base_vol}")
        if not 0 < self.drift_decay <= 1:
            raise ConfigError(f"drift_decay must lie in (0, 1], got {self.drift_decay}")
        if self.n_companies < 1 or self.n_quarters < 1:
            raise ConfigError("n_companies and n_quarters must be >= 1")
        if len(self.sectors) < 1:
            raise ConfigError("at least one sector is required")
        if self.pool_gap < 5:
            raise ConfigError("pool_gap below 5 trading days would leak into the exclusion zone")
        last_pool = self.announce_day - self.pool_gap - (self.pool_days - 1)
        if last_pool < self.post_days:
            raise ConfigError("pool days overlap the previous quarter's post-announcement days")
        if self.announce_day + self.post_days > self.days_per_quarter:
            raise ConfigError("post-announcement days spill into the next quarter")
        if not 0 <= self.volume_ar < 1:
            raise ConfigError("volume_ar must lie in [0, 1)")
        return self

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def company_table(cfg: SyntheticConfig):
    """``(symbol, sector)`` pairs, round-robin over sectors."""
    out, used = [], {s: 0 for s in cfg.sectors}
    for i in range(cfg.n_companies):
        sector = cfg.sectors[i % len(cfg.sectors)]
        pool = EXAMPLE_SYMBOLS.get(sector, [])
        j = used[sector]
        used[sector] += 1
        symbol = pool[j] if j < len(pool) else f"S{i:03d}"
        out.append((symbol, sector))
    return out


def announce_day_index(cfg: SyntheticConfig, quarter: int) -> int:
    return quarter * cfg.days_per_quarter + cfg.announce_day


def _stream(cfg: SyntheticConfig, *key) -> np.random.Generator:
    # independent, order-free stream per (purpose, company, ...) key
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


@dataclass
class SignalMap:
    """Hidden linear map from the latent earnings vector to a drift direction."""

    weights: np.ndarray
    scale: float
    gain: float

    def __call__(self, latent) -> np.ndarray:
        proj = np.asarray(latent) @ self.weights / self.scale
        return np.tanh(self.gain * proj)


@dataclass
class EarningsModel:
    loadings: np.ndarray      # (38, n_factors)
    location: np.ndarray      # (38,)
    spread: np.ndarray        # (38,)
    signal: SignalMap


def earnings_model(cfg: SyntheticConfig) -> EarningsModel:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1001]))
    loadings = rng.normal(0.0, 1.0 / math.sqrt(cfg.n_factors), size=(EARNINGS_DIM, cfg.n_factors))
    location = rng.normal(0.0, 2.0, size=EARNINGS_DIM)
    spread = rng.uniform(0.5, 3.0, size=EARNINGS_DIM)
    srng = np.random.default_rng(cfg.signal_map_seed)
    # drift follows the surprise metrics only, in the direction of the surprise
    w = np.zeros(EARNINGS_DIM)
    w[-2:] = srng.uniform(0.5, 1.0, size=2)
    cov = loadings @ loadings.T + (cfg.company_effect ** 2 + cfg.idio_noise ** 2) * np.eye(EARNINGS_DIM)
    scale = float(math.sqrt(w @ cov @ w))
    return EarningsModel(loadings, location, spread, SignalMap(w, scale, cfg.signal_gain))


def gen_earnings_vectors(cfg: SyntheticConfig):
    """One :class:`EarningsVector` per company and quarter, plus the hidden signal.

    Metrics follow a sector factor model: every company in a sector shares
    the quarter's sector factors, on top of a persistent company effect and
    idiosyncratic noise.  Returns ``(vectors, signal)`` where ``signal``
    maps ``(symbol, quarter_id)`` to ``s(e)`` in ``[-1, 1]``.
    """
    cfg.validate()
    model = earnings_model(cfg)
    companies = company_table(cfg)
    frng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1002]))
    factors = frng.normal(size=(len(cfg.sectors), cfg.n_quarters, cfg.n_factors))
    vectors, signal = [], {}
    for ci, (symbol, sector) in enumerate(companies):
        rng = _stream(cfg, 2000, ci)
        effect = rng.normal(0.0, cfg.company_effect, size=EARNINGS_DIM)
        si = cfg.sectors.index(sector)
        for q in range(cfg.n_quarters):
            latent = model.loadings @ factors[si, q] + effect + rng.normal(0.0, cfg.idio_noise, EARNINGS_DIM)
            metrics = model.location + model.spread * latent
            vectors.append(EarningsVector(metrics, symbol, q, announce_day_index(cfg, q), sector))
            signal[(symbol, q)] = float(model.signal(latent))
    return vectors, signal


def planted_drift(cfg: SyntheticConfig, s: float, day_offset: int) -> float:
    """Per-minute drift on post-announcement day ``day_offset`` (1-based)."""
    if day_offset < 1:
        return 0.0
    return cfg.drift_strength * cfg.drift_decay ** (day_offset - 1) * s


def intraday_volume_profile(minutes: int) -> np.ndarray:
    u = (np.arange(minutes) - (minutes - 1) / 2) / ((minutes - 1) / 2)
    return 1.0 + 1.5 * u * u


def simulated_days(cfg: SyntheticConfig):
    """``(day_index, quarter, day_offset)`` for every simulated trading day.

    Offsets ``1..post_days`` are post-announcement days; negative offsets
    count trading days before the announcement (pool days).
    """
    out = []
    for q in range(cfg.n_quarters):
        a = announce_day_index(cfg, q)
        for j in reversed(range(cfg.pool_days)):
            gap = cfg.pool_gap + j
            out.append((a - gap, q, -gap))
        for d in range(1, cfg.post_days + 1):
            out.append((a + d - 1, q, d))
    return out


def gen_price_paths(cfg: SyntheticConfig, signal=None):
    """Minute close/volume arrays per ``(symbol, day_index)``.

    Returns ``(days, drift)``: ``days`` maps to ``(minutes, 2)`` arrays of
    ``close, volume`` and ``drift`` maps to the planted per-minute drift of
    that day (zero on pre-announcement days).
    """
    cfg.validate()
    if signal is None:
        _, signal = gen_earnings_vectors(cfg)
    companies = company_table(cfg)
    schedule = simulated_days(cfg)
    m = cfg.minutes
    profile = intraday_volume_profile(m)
    daily_vol = cfg.base_vol * math.sqrt(m)
    innov = cfg.volume_noise * math.sqrt(1.0 - cfg.volume_ar ** 2)
    days, drift = {}, {}
    for ci, (symbol, _) in enumerate(companies):
        rng = _stream(cfg, 3000, ci)
        price = float(np.exp(rng.normal(math.log(60.0), 0.6)))
        base_volume = float(np.exp(rng.normal(math.log(2e4), 0.7)))
        prev_day = None
        for day_index, q, offset in schedule:
            skipped = 1 if prev_day is None else day_index - prev_day
            price *= math.exp(rng.normal(0.0, daily_vol * math.sqrt(skipped)))
            mu = planted_drift(cfg, signal[(symbol, q)], offset)
            returns = mu + cfg.base_vol * rng.standard_normal(m)
            close = price * np.exp(np.cumsum(returns))
            shocks = rng.normal(0.0, innov, size=m)
            shocks[0] = rng.normal(0.0, cfg.volume_noise)  # start from the stationary law
            a = lfilter([1.0], [1.0, -cfg.volume_ar], shocks)
            volume = base_volume * profile * np.exp(a - 0.5 * cfg.volume_noise ** 2)
            days[(symbol, day_index)] = np.stack([close, volume], axis=1)
            drift[(symbol, day_index)] = mu
            price = float(close[-1])
            prev_day = day_index
    return days, drift
