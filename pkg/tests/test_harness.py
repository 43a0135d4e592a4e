"""Configuration files, reports, protocol runners and the command line."""

import math

import numpy as np
import pytest

from cet.errors import ConfigError, ParseError
from cet.harness import (
    ExperimentConfig,
    ExperimentReport,
    config_to_text,
    format_cell,
    parse_config,
    read_report,
    read_reports,
    run_protocol,
    spearman,
    summary_table,
    write_report,
)
from cet.harness.cli import main

TINY_TEXT = """\
# small end-to-end run
seeds = 0
models = cet, supraw2
fractions = 0.5
stride = 10
pretrain_epochs = 1
finetune_epochs = 1
frozen_epochs = 1
max_batches = 2
synthetic.n_companies = 9
synthetic.n_quarters = 3
model.d = 8
model.heads = 2
model.ff_dim = 12
model.enc_hidden = 5
model.K = 2
"""


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig().validate()
        assert cfg.learning_rates == (2e-3, 2e-4)
        assert cfg.model_config().d == 32

    def test_values_and_overrides(self):
        cfg = parse_config(TINY_TEXT)
        assert cfg.seeds == (0,) and cfg.models == ("cet", "supraw2")
        assert cfg.fractions == (0.5,) and cfg.max_batches == 2
        assert cfg.synthetic.n_companies == 9
        assert cfg.model_config().d == 8 and cfg.model_config().K == 2

    def test_unknown_key_names_the_line(self):
        with pytest.raises(ConfigError, match=r"cfg\.txt:3: unknown key 'bogus'"):
            parse_config("seeds = 0\n\nbogus = 1\n", "cfg.txt")
        with pytest.raises(ConfigError, match=":1:"):
            parse_config("model.width = 3")

    def test_bad_values(self):
        with pytest.raises(ConfigError, match=":2: bad value"):
            parse_config("seeds = 0\nstride = five\n")
        with pytest.raises(ConfigError):
            parse_config("protocol = everything")
        with pytest.raises(ConfigError):
            parse_config("seeds = 1, 1")
        with pytest.raises(ConfigError):
            parse_config("fractions = 0.9")
        with pytest.raises(ConfigError):
            parse_config("model.heads = 5")

    def test_text_round_trip(self):
        cfg = parse_config(TINY_TEXT + "eps_hold = 0.0003\nmax_train = none\n")
        again = parse_config(config_to_text(cfg))
        assert again == cfg
        assert config_to_text(again) == config_to_text(cfg)


def _report():
    rep = ExperimentReport("fractions", ["0.2", "0.5"], ["cet", "suprep"], (0, 1, 2))
    for c, base in (("0.2", 44.0), ("0.5", 46.0)):
        for s in (0, 1, 2):
            rep.record(c, "cet", s, base + 0.5 * s)
            rep.record(c, "suprep", s, base - 1.0 + 0.25 * s)
    return rep


class TestReport:
    def test_cell_format(self):
        assert format_cell(45.16, 0.5264) == "45.16 + 0.526"
        assert format_cell(math.nan, math.nan) == "n/a"

    def test_mean_and_sample_std(self):
        rep = _report()
        assert rep.mean("0.2", "cet") == 44.5
        assert rep.std("0.2", "cet") == pytest.approx(0.5)
        assert "44.50 + 0.500" in summary_table(rep)

    def test_csv_round_trip(self, tmp_path):
        rep = _report()
        rep.annotate("0.5", "suprep", "seed 2 diverged")
        write_report([rep], tmp_path)
        back = read_report(tmp_path / "fractions.csv")
        assert back.conditions == rep.conditions and back.models == rep.models
        assert back.seeds == rep.seeds and back.cells == rep.cells and back.notes == rep.notes
        assert summary_table(back) == summary_table(rep)
        assert (tmp_path / "fractions.gp").exists() and (tmp_path / "summary.txt").exists()

    def test_missing_seed_is_reported_blank(self, tmp_path):
        rep = _report()
        del rep.cells[("0.2", "cet")][1]
        write_report([rep], tmp_path)
        back = read_report(tmp_path / "fractions.csv")
        assert back.values("0.2", "cet") == [44.0, 45.0]
        assert not back.complete("0.2", "cet")

    def test_empty_list_writes_nothing(self, tmp_path):
        with pytest.raises(ConfigError):
            write_report([], tmp_path / "out")
        assert not (tmp_path / "out").exists()
        with pytest.raises(ConfigError):
            read_reports(tmp_path)

    def test_bad_header(self, tmp_path):
        (tmp_path / "fractions.csv").write_text("a,b\n")
        with pytest.raises(ParseError):
            read_report(tmp_path / "fractions.csv")

    def test_ablation_curve_file(self, tmp_path):
        rep = ExperimentReport("ablation", [str(k) for k in range(1, 5)], ["cet"], (0, 1))
        for k in range(1, 5):
            rep.curves[k] = {s: (3.0 - 0.1 * k + s, 0.1 * k, 40.0 + k) for s in (0, 1)}
            for s in (0, 1):
                rep.record(str(k), "cet", s, 40.0 + k)
        write_report([rep], tmp_path)
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert lines[0] == "k,loss,cos_sim,accuracy"
        assert len(lines) == 1 + 4
        k, loss, cos, acc = (float(x) for x in lines[2].split(","))
        assert (k, acc) == (2.0, 42.0)
        assert loss == pytest.approx(3.3) and cos == pytest.approx(0.2)
        back = read_reports(tmp_path)[0]
        assert back.curve() == pytest.approx(rep.curve())


class TestSpearman:
    def test_monotone(self):
        assert spearman([1, 2, 3, 4], [10, 20, 25, 40]) == pytest.approx(1.0)
        assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)

    def test_constant_is_zero(self):
        assert spearman([1, 2, 3], [5, 5, 5]) == 0.0


@pytest.fixture(scope="module")
def tiny_run_cfg():
    return parse_config(TINY_TEXT)


class TestProtocols:
    def test_fraction_sweep_fills_every_cell(self, tiny_run_cfg):
        rep = run_protocol(tiny_run_cfg)
        assert rep.conditions == ["0.5"] and rep.models == ["cet", "supraw2"]
        for m in rep.models:
            assert rep.complete("0.5", m)
            assert 0.0 <= rep.mean("0.5", m) <= 100.0

    def test_ablation_rows(self, tiny_run_cfg):
        cfg = parse_config(TINY_TEXT + "protocol = ablation\nk_max = 3\n")
        rep = run_protocol(cfg)
        rows = rep.curve()
        assert [r[0] for r in rows] == [1, 2, 3]
        assert all(np.isfinite(r[1]) and -1.0 <= r[2] <= 1.0 for r in rows)

    def test_unknown_protocol_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(protocol="weeks").validate()


class TestCli:
    def test_usage_errors(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["run", "--protocol", "years", "--out", "x"])
        assert exc.value.code == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.txt"
        cfg.write_text("colour = red\n")
        assert main(["run", "--protocol", "fractions", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "c.txt:1" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path):
        assert main(["pretrain", "--data", str(tmp_path / "none"), "--model", "cet",
                     "--out", str(tmp_path / "m.ckpt")]) == 2

    def test_report_without_csvs(self, tmp_path):
        assert main(["report", "--in", str(tmp_path)]) == 1

    def test_datagen_pretrain_finetune(self, tmp_path, capsys):
        cfg = tmp_path / "tiny.txt"
        cfg.write_text(TINY_TEXT)
        data, ckpt = tmp_path / "data", tmp_path / "cet.ckpt"
        assert main(["datagen", "--config", str(cfg), "--out", str(data)]) == 0
        assert main(["pretrain", "--data", str(data), "--model", "cet", "--config", str(cfg),
                     "--out", str(ckpt), "--epochs", "1"]) == 0
        assert ckpt.exists()
        assert main(["finetune", "--ckpt", str(ckpt), "--fraction", "0.5", "--mode", "frozen",
                     "--config", str(cfg), "--out", str(tmp_path / "tuned.ckpt")]) == 0
        out = capsys.readouterr().out
        assert "seed 0: accuracy" in out and (tmp_path / "tuned.ckpt").exists()

    def test_run_is_byte_reproducible(self, tmp_path):
        cfg = tmp_path / "tiny.txt"
        cfg.write_text(TINY_TEXT)
        for name in ("a", "b"):
            assert main(["run", "--protocol", "fractions", "--config", str(cfg),
                         "--out", str(tmp_path / name)]) == 0
        for f in ("fractions.csv", "summary.txt", "config.txt"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        assert main(["report", "--in", str(tmp_path / "a")]) == 0
