"""Experiment reports: aggregation, CSV round-trip, summary tables and gnuplot scripts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ParseError

GRID_HEADER = ["condition", "model", "seed", "accuracy", "note"]
CURVE_HEADER = ["k", "loss", "cos_sim", "accuracy"]
CURVE_SEED_HEADER = ["k", "seed", "loss", "cos_sim", "accuracy"]
ROW_TITLES = {"fractions": "fraction", "sectors": "sector", "days": "day", "ablation": "K"}


def grid_filename(protocol: str) -> str:
    # ablation.csv is reserved for the per-K curve
    return "ablation_accuracy.csv" if protocol == "ablation" else f"{protocol}.csv"


@dataclass
class ExperimentReport:
    """Per-seed accuracies (%) on a condition x model grid.

    ``cells[(condition, model)]`` maps seed -> accuracy; failed or
    skipped runs leave the seed out and record a note instead.  The
    ablation protocol also fills ``curves[k][seed] = (loss, cos_sim,
    accuracy)``.
    """

    protocol: str
    conditions: list
    models: list
    seeds: tuple
    cells: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    def record(self, condition: str, model: str, seed: int, accuracy: float):
        self.cells.setdefault((condition, model), {})[seed] = float(accuracy)

    def annotate(self, condition: str, model: str, note: str):
        prev = self.notes.get((condition, model))
        self.notes[(condition, model)] = note if not prev or prev == note else f"{prev}; {note}"

    def values(self, condition: str, model: str) -> list:
        got = self.cells.get((condition, model), {})
        return [got[s] for s in self.seeds if s in got]

    def complete(self, condition: str, model: str) -> bool:
        return len(self.values(condition, model)) == len(self.seeds)

    def mean(self, condition: str, model: str) -> float:
        v = self.values(condition, model)
        return float(np.mean(v)) if v else math.nan

    def std(self, condition: str, model: str) -> float:
        """Sample std over the seeds (0 for a single seed)."""
        v = self.values(condition, model)
        if not v:
            return math.nan
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def curve(self) -> list:
        """``(k, loss, cos_sim, accuracy)`` rows, each averaged over seeds."""
        rows = []
        for k in sorted(self.curves):
            per = [self.curves[k][s] for s in self.seeds if s in self.curves[k]]
            if not per:
                rows.append((k, math.nan, math.nan, math.nan))
                continue
            a = np.asarray(per, dtype=float)
            rows.append((k, *(float(x) for x in a.mean(axis=0))))
        return rows


def format_cell(mean: float, std: float) -> str:
    """``MM.MM + S.SSS`` cell text."""
    if math.isnan(mean):
        return "n/a"
    return f"{mean:.2f} + {std:.3f}"


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


# -- writing ---------------------------------------------------------------------

def summary_table(rep: ExperimentReport) -> str:
    title = ROW_TITLES.get(rep.protocol, "condition")
    header = [title] + list(rep.models)
    rows = [header]
    for c in rep.conditions:
        row = [c]
        for m in rep.models:
            cell = format_cell(rep.mean(c, m), rep.std(c, m))
            if (c, m) in rep.notes:
                cell += " *"
            row.append(cell)
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = [f"protocol: {rep.protocol}   seeds: {', '.join(str(s) for s in rep.seeds)}"]
    for i, r in enumerate(rows):
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    if rep.curves:
        lines.append("")
        lines.append("k  loss      cos_sim   accuracy")
        for k, loss, cos, acc in rep.curve():
            lines.append(f"{k:<2d} {loss:<9.4f} {cos:<9.4f} {acc:.2f}")
    if rep.notes:
        lines.append("")
        lines.append("* annotations:")
        for (c, m), note in rep.notes.items():
            lines.append(f"  {c} / {m}: {note}")
    return "\n".join(lines) + "\n"


def _gnuplot_grid(rep: ExperimentReport) -> str:
    title = ROW_TITLES.get(rep.protocol, "condition")
    lines = [f"# {rep.protocol}: mean accuracy (%) per model, error bars = std over seeds",
             "$data << EOD", "# " + " ".join([title] + [f"{m} {m}_std" for m in rep.models])]
    for i, c in enumerate(rep.conditions):
        vals = []
        for m in rep.models:
            mu, sd = rep.mean(c, m), rep.std(c, m)
            vals += ["NaN" if math.isnan(mu) else f"{mu:.4f}", "NaN" if math.isnan(sd) else f"{sd:.4f}"]
        lines.append(" ".join([str(i), *vals]) + f"  # {c}")
    lines.append("EOD")
    tics = ", ".join(f'"{c}" {i}' for i, c in enumerate(rep.conditions))
    lines += [
        "set terminal pngcairo size 900,540",
        f"set output '{rep.protocol}.png'",
        f"set xtics ({tics})",
        f"set xlabel '{title}'",
        "set ylabel 'accuracy (%)'",
        "set key outside right",
        "plot " + ", \\\n     ".join(
            f"$data using 1:{2 + 2 * j}:{3 + 2 * j} with yerrorlines title '{m}'"
            for j, m in enumerate(rep.models)),
    ]
    return "\n".join(lines) + "\n"


def _gnuplot_curves(rep: ExperimentReport) -> str:
    lines = ["# ablation: equilibrium InfoNCE loss and mean cosine similarity against K",
             "$curve << EOD", "# k loss cos_sim accuracy"]
    for k, loss, cos, acc in rep.curve():
        lines.append(f"{k} {loss:.6f} {cos:.6f} {acc:.4f}")
    lines += [
        "EOD",
        "set terminal pngcairo size 1200,420",
        "set output 'ablation_curves.png'",
        "set multiplot layout 1,2",
        "set xlabel 'K (latent steps)'",
        "set ylabel 'InfoNCE loss'",
        "plot $curve using 1:2 with linespoints title 'equilibrium loss'",
        "set ylabel 'cosine similarity'",
        "plot $curve using 1:3 with linespoints title 'mean similarity'",
        "unset multiplot",
    ]
    return "\n".join(lines) + "\n"


def write_report(reports, out_dir) -> list:
    """Write CSVs, ``summary.txt`` and gnuplot scripts; returns the paths written."""
    reports = list(reports)
    if not reports:
        raise ConfigError("no completed runs to report")
    names = [r.protocol for r in reports]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate protocols in report list: {names}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(p)

    for rep in reports:
        rows = [GRID_HEADER]
        for c in rep.conditions:
            for m in rep.models:
                got = rep.cells.get((c, m), {})
                note = rep.notes.get((c, m), "")
                for s in rep.seeds:
                    rows.append([c, m, str(s), _num(got.get(s)), note])
        put(grid_filename(rep.protocol), _csv_text(rows))
        put(f"{rep.protocol}.gp", _gnuplot_grid(rep))
        if rep.curves:
            put("ablation.csv", _csv_text([CURVE_HEADER] + [
                [str(k), _num(l), _num(c), _num(a)] for k, l, c, a in rep.curve()]))
            seed_rows = [CURVE_SEED_HEADER]
            for k in sorted(rep.curves):
                for s in rep.seeds:
                    if s in rep.curves[k]:
                        seed_rows.append([str(k), str(s), *(_num(v) for v in rep.curves[k][s])])
            put("ablation_seeds.csv", _csv_text(seed_rows))
            put("ablation_curves.gp", _gnuplot_curves(rep))
    put("summary.txt", "\n".join(summary_table(r) for r in reports))
    return written


def _csv_text(rows) -> str:
    import io

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# -- reading ----------------------------------------------------------------------

def _read_csv(path: Path, header):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ParseError(f"expected header {','.join(header)}", path, 1)
    return rows[1:]


def read_report(path, protocol: str | None = None) -> ExperimentReport:
    """Rebuild an :class:`ExperimentReport` from its grid CSV."""
    path = Path(path)
    protocol = protocol or path.stem.removesuffix("_accuracy")
    rows = _read_csv(path, GRID_HEADER)
    if not rows:
        raise ParseError("report has no rows", path)
    conditions, models, seeds = [], [], []
    cells, notes = {}, {}
    for i, (c, m, s, acc, note) in enumerate(rows, 2):
        try:
            seed = int(s)
            value = float(acc) if acc else None
        except ValueError:
            raise ParseError(f"bad seed or accuracy {s!r}, {acc!r}", path, i) from None
        for lst, v in ((conditions, c), (models, m), (seeds, seed)):
            if v not in lst:
                lst.append(v)
        if value is not None:
            cells.setdefault((c, m), {})[seed] = value
        if note:
            notes[(c, m)] = note
    rep = ExperimentReport(protocol, conditions, models, tuple(seeds), cells, notes)
    seed_path = path.with_name("ablation_seeds.csv")
    if rep.protocol == "ablation" and seed_path.exists():
        for i, (k, s, loss, cos, acc) in enumerate(_read_csv(seed_path, CURVE_SEED_HEADER), 2):
            vals = tuple(float(x) if x else math.nan for x in (loss, cos, acc))
            rep.curves.setdefault(int(k), {})[int(s)] = vals
    return rep


def read_reports(directory) -> list:
    d = Path(directory)
    found = [p for p in ROW_TITLES if (d / grid_filename(p)).exists()]
    if not found:
        raise ConfigError(f"no report CSVs found in {d}")
    return [read_report(d / grid_filename(p), p) for p in found]
