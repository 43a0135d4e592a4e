"""Experiment harness: configuration, protocols, reports and the CLI."""

from .config import MODEL_KINDS, PROTOCOLS, ExperimentConfig, config_to_text, load_config, parse_config
from .protocols import (
    Lab,
    World,
    build_world,
    run_ablation,
    run_day_decay,
    run_fraction_sweep,
    run_protocol,
    run_sector_split,
    spearman,
)
from .report import ExperimentReport, format_cell, read_report, read_reports, summary_table, write_report
