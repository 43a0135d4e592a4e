"""Synthetic data generation, CSV ingestion, sample assembly and splits."""

from __future__ import annotations

from .ingest import ingest_csv, read_bars_csv, read_earnings_csv, save_market
from .manifest import (
    DatasetManifest,
    DayEntry,
    MarketData,
    PRE_ANNOUNCEMENT_GAP,
    build_manifest,
    read_kv,
    read_manifest,
    write_manifest,
)
from .oracle import announcement_table, drift_sign_oracle, movement_oracle_by_day
from .samples import NegativePool, Prepared, SampleSet, Scaler, build_samples, prepare, sample_negatives
from .splits import SWEEP_FRACTIONS, Split, SplitSpec, split_dataset, subsample
from .synthetic import (
    EARNINGS_METRICS,
    SECTORS,
    SyntheticConfig,
    company_table,
    gen_earnings_vectors,
    gen_price_paths,
    planted_drift,
)


def generate(cfg: SyntheticConfig) -> MarketData:
    """Full synthetic market: earnings, minute bars and planted values."""
    cfg.validate()
    earnings, signal = gen_earnings_vectors(cfg)
    days, drift = gen_price_paths(cfg, signal)
    return MarketData(days=days, earnings=earnings, companies=company_table(cfg),
                      drift=drift, signal=signal)


def write_dataset(market: MarketData, out_dir, extra: dict | None = None) -> DatasetManifest:
    """Write bars/earnings CSVs plus the manifest files into ``out_dir``."""
    save_market(market, out_dir)
    manifest = build_manifest(market)
    write_manifest(manifest, out_dir, {"bars_csv": "bars.csv", "earnings_csv": "earnings.csv",
                                       **(extra or {})})
    return manifest


def load_dataset(data_dir) -> tuple[DatasetManifest, MarketData]:
    """Re-ingest a directory written by :func:`write_dataset`."""
    from pathlib import Path

    d = Path(data_dir)
    kv = read_kv(d / "manifest.txt")
    return ingest_csv(d / kv.get("bars_csv", "bars.csv"), d / kv.get("earnings_csv", "earnings.csv"))
