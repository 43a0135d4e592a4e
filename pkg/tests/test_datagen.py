"""Synthetic generator, CSV ingestion, manifests, samples, pool and splits."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

import cet.datagen as dg
from cet.datagen.ingest import BAR_HEADER, EARNINGS_HEADER
from cet.errors import ConfigError, DataQualityError, EmptyDatasetError, ParseError
from cet.preprocess import EARNINGS_DIM, PreprocessConfig


def _post_returns(market, manifest, offsets=(1,)):
    """Per-minute log returns of every post-announcement day, with the day's signal."""
    rets, sig = [], []
    for e in manifest.post_days(set(offsets)):
        close = market.days[(e.symbol, e.day_index)][:, 0]
        rets.append(np.diff(np.log(close)))
        sig.append(market.signal[(e.symbol, e.quarter_id)])
    return np.array(rets), np.array(sig)


class TestGenerator:
    def test_determinism(self):
        cfg = dg.SyntheticConfig(n_companies=4, n_quarters=2)
        a, b = dg.generate(cfg), dg.generate(cfg)
        assert a.days.keys() == b.days.keys()
        for k in a.days:
            np.testing.assert_array_equal(a.days[k], b.days[k])
        for ea, eb in zip(a.earnings, b.earnings):
            np.testing.assert_array_equal(ea.metrics, eb.metrics)

    def test_seed_changes_data(self):
        cfg = dg.SyntheticConfig(n_companies=2, n_quarters=1)
        a, b = dg.generate(cfg), dg.generate(replace(cfg, seed=1))
        k = next(iter(a.days))
        assert not np.array_equal(a.days[k], b.days[k])

    def test_earnings_dimension(self, tiny_market):
        _, market, _ = tiny_market
        assert all(e.metrics.shape == (EARNINGS_DIM,) for e in market.earnings)
        assert len(dg.EARNINGS_METRICS) == EARNINGS_DIM

    def test_default_universe(self):
        companies = dg.company_table(dg.SyntheticConfig())
        assert len(companies) == 18
        sectors = [s for _, s in companies]
        assert all(sectors.count(s) == 2 for s in dg.SECTORS)

    def test_sector_factor_correlates_companies(self):
        cfg = dg.SyntheticConfig(n_companies=18, n_quarters=60)
        vectors, _ = dg.gen_earnings_vectors(cfg)
        by_symbol = {}
        for v in vectors:
            by_symbol.setdefault(v.symbol, []).append(v.metrics)
        peers = [s for s, sec in dg.company_table(cfg) if sec == cfg.sectors[0]]
        a, b = (np.array(by_symbol[s]) for s in peers)
        a, b = a - a.mean(axis=0), b - b.mean(axis=0)
        corr = [np.corrcoef(a[:, j], b[:, j])[0, 1] for j in range(EARNINGS_DIM)]
        assert np.mean(corr) > 0.2

    def test_planted_drift_decays(self):
        cfg = dg.SyntheticConfig()
        d = [dg.planted_drift(cfg, 1.0, k) for k in range(1, 6)]
        np.testing.assert_allclose(d, [3e-4 * 0.5 ** (k - 1) for k in range(1, 6)])
        assert dg.planted_drift(cfg, 1.0, 0) == 0.0

    def test_no_decay_keeps_drift_equal(self):
        cfg = dg.SyntheticConfig(n_companies=3, n_quarters=2, drift_decay=1.0)
        market = dg.generate(cfg)
        manifest = dg.build_manifest(market)
        for sym, _ in market.companies:
            for q in range(cfg.n_quarters):
                days = [e for e in manifest.post_days() if e.symbol == sym and e.quarter_id == q]
                drifts = {market.drift[(e.symbol, e.day_index)] for e in days}
                assert len(days) == 5 and len(drifts) == 1

    def test_zero_drift_returns_are_noise(self):
        cfg = dg.SyntheticConfig(n_companies=9, n_quarters=4, drift_strength=0.0)
        market = dg.generate(cfg)
        rets, sig = _post_returns(market, dg.build_manifest(market), offsets=(1, 2, 3, 4, 5))
        signed = (rets * np.sign(sig)[:, None]).ravel()
        assert signed.size >= 10_000
        assert stats.ttest_1samp(signed, 0.0).pvalue > 0.05

    def test_day_one_return_follows_signal(self):
        market = dg.generate(dg.SyntheticConfig())
        rets, sig = _post_returns(market, dg.build_manifest(market))
        assert rets.size >= 10_000
        assert rets[sig > 0].mean() > 0 > rets[sig < 0].mean()

    def test_invalid_configs(self):
        with pytest.raises(ConfigError):
            dg.SyntheticConfig(drift_decay=1.5).validate()
        with pytest.raises(ConfigError):
            dg.SyntheticConfig(pool_gap=4).validate()
        with pytest.raises(ConfigError):
            dg.SyntheticConfig(base_vol=0.0).validate()


class TestManifest:
    def test_post_days_are_tagged_by_offset(self, tiny_market):
        cfg, _, manifest = tiny_market
        post = manifest.post_days()
        assert len(post) == cfg.n_companies * cfg.n_quarters * 5
        assert sorted({e.offset for e in post}) == [1, 2, 3, 4, 5]

    def test_pool_days_respect_gap(self, tiny_market):
        _, _, manifest = tiny_market
        pool = manifest.pool_days()
        assert pool and all(e.gap >= dg.PRE_ANNOUNCEMENT_GAP for e in pool)
        assert all(e.role != "post" for e in pool)

    def test_days_inside_the_exclusion_zone_are_excluded(self):
        cfg = dg.SyntheticConfig(n_companies=1, n_quarters=1)
        market = dg.generate(cfg)
        a = market.earnings[0].announce_timestamp
        extra = dict(market.days)
        extra[("XOM", a - 3)] = extra[next(iter(extra))]
        market = replace(market, days=extra)
        roles = {e.day_index: e.role for e in dg.build_manifest(market).days}
        assert roles[a - 3] == "excluded"

    def test_write_and_reload(self, tmp_path, tiny_market):
        _, market, manifest = tiny_market
        dg.write_dataset(market, tmp_path)
        manifest2, market2 = dg.load_dataset(tmp_path)
        assert [(e.symbol, e.day_index, e.role, e.offset) for e in manifest2.days] == \
            [(e.symbol, e.day_index, e.role, e.offset) for e in manifest.days]
        for k in market.days:
            np.testing.assert_array_equal(market2.days[k], market.days[k])
        kv = dg.read_kv(tmp_path / "manifest.txt")
        assert kv["bars_csv"] == "bars.csv"


def _write_fixture(tmp_path, bar_rows, earn_rows):
    bars = tmp_path / "bars.csv"
    earn = tmp_path / "earnings.csv"
    bars.write_text(",".join(BAR_HEADER) + "\n" + "".join(r + "\n" for r in bar_rows))
    earn.write_text(",".join(EARNINGS_HEADER) + "\n" + "".join(r + "\n" for r in earn_rows))
    return bars, earn


class TestIngest:
    def _fixture_rows(self):
        bars, earn = [], []
        for sym, sector in (("AAA", "Energy"), ("BBB", "Energy")):
            earn.append(f"{sym},0,20,{sector}," + ",".join(["1.5"] * EARNINGS_DIM))
            for day in (10, 20, 21, 22, 23, 24):
                bars += [f"{sym},{day},0,50.0,100", f"{sym},{day},389,51.0,120"]
        return bars, earn

    def test_two_companies_one_quarter(self, tmp_path):
        manifest, market = dg.ingest_csv(*_write_fixture(tmp_path, *self._fixture_rows()))
        post = manifest.post_days()
        assert len(post) == 2 * 5
        assert sorted({e.offset for e in post}) == [1, 2, 3, 4, 5]
        assert {(e.symbol, e.day_index) for e in manifest.pool_days()} == {("AAA", 10), ("BBB", 10)}
        assert market.days[("AAA", 20)].shape == (390, 2)
        assert market.days[("AAA", 20)][195, 0] == pytest.approx(50.5, abs=0.01)

    def test_empty_file(self, tmp_path):
        bars, earn = _write_fixture(tmp_path, [], self._fixture_rows()[1])
        bars.write_text("")
        with pytest.raises(EmptyDatasetError):
            dg.ingest_csv(bars, earn)

    def test_header_only_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            dg.ingest_csv(*_write_fixture(tmp_path, [], self._fixture_rows()[1]))

    def test_duplicate_bar(self, tmp_path):
        bars, earn = self._fixture_rows()
        bars.append(bars[0])
        with pytest.raises(DataQualityError, match="duplicate"):
            dg.ingest_csv(*_write_fixture(tmp_path, bars, earn))

    def test_bad_header(self, tmp_path):
        bars, earn = _write_fixture(tmp_path, *self._fixture_rows())
        bars.write_text("sym,day,minute,close,volume\nAAA,1,0,1.0,1\n")
        with pytest.raises(ParseError):
            dg.ingest_csv(bars, earn)

    def test_bad_value_reports_line(self, tmp_path):
        bars, earn = self._fixture_rows()
        bars[3] = "AAA,20,5,-1.0,100"
        with pytest.raises(ParseError, match=":5"):
            dg.ingest_csv(*_write_fixture(tmp_path, bars, earn))

    def test_announcement_without_data_is_dropped(self, tmp_path):
        bars, earn = self._fixture_rows()
        earn.append("AAA,1,90,Energy," + ",".join(["0.0"] * EARNINGS_DIM))
        manifest, _ = dg.ingest_csv(*_write_fixture(tmp_path, bars, earn))
        assert len(manifest.warnings) == 1
        assert len(manifest.quarters) == 2


class TestSamples:
    def test_windows_follow_the_raw_day(self, tiny_samples):
        pcfg, samples = tiny_samples
        i = 7
        w = samples.window(i)
        day = samples.days[samples.day_row[i]]
        np.testing.assert_array_equal(w.values, day[w.end_minute - pcfg.omega + 1:w.end_minute + 1])
        np.testing.assert_array_equal(samples.raw_futures([i])[0], day[w.end_minute + 1:w.end_minute + 6])

    def test_labels_use_next_minute(self, tiny_samples):
        _, samples = tiny_samples
        r = samples.day_row[3]
        m = samples.end_minute[3]
        close = samples.days[r, :, 0]
        assert samples.returns[3] == pytest.approx((close[m + 1] - close[m]) / close[m])

    def test_scaler_uses_training_rows_only(self, tiny_samples):
        pcfg, samples = tiny_samples
        train = np.flatnonzero(samples.sample_offset == 1)
        other = np.flatnonzero(samples.sample_offset == 2)
        a = dg.Scaler.fit(samples, train)
        b = dg.Scaler.fit(samples, train[::-1])
        np.testing.assert_array_equal(a.price.mean, b.price.mean)
        np.testing.assert_array_equal(a.earnings.std, b.earnings.std)
        c = dg.Scaler.fit(samples, np.concatenate([train, other]))
        assert not np.allclose(a.price.mean, c.price.mean)

    def test_prepared_training_windows_are_standardized(self, tiny_samples):
        pcfg, samples = tiny_samples
        idx = np.arange(len(samples))
        scaler = dg.Scaler.fit(samples, idx)
        prep = dg.prepare(samples, scaler, idx, replace(pcfg, denoise=False), dtype=np.float64)
        np.testing.assert_allclose(prep.windows[0], (samples.raw_windows([0])[0] - scaler.price.mean)
                                   / scaler.price.std)
        z = (samples.days.reshape(-1, 2) - scaler.price.mean) / scaler.price.std
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)
        assert abs(prep.windows.mean()) < 0.2

    def test_empty_training_set(self, tiny_samples):
        _, samples = tiny_samples
        with pytest.raises(EmptyDatasetError):
            dg.Scaler.fit(samples, [])


class TestNegativePool:
    def test_draws_respect_gap(self, tiny_market):
        _, market, manifest = tiny_market
        pool = dg.NegativePool.from_market(market, manifest)
        rows, minutes = pool.draw_minutes((500, 20), np.random.default_rng(0), lo=50)
        assert rows.size == 10_000
        assert np.all(pool.gap[rows] >= dg.PRE_ANNOUNCEMENT_GAP)
        assert np.all((minutes >= 50) & (minutes < 390))
        assert pool.audit == {"drawn": 10_000, "violations": 0}

    def test_draws_are_distinct_per_anchor(self, tiny_market):
        _, market, manifest = tiny_market
        pool = dg.NegativePool.from_market(market, manifest)
        rows, minutes = pool.draw_minutes((300, 20), np.random.default_rng(1), lo=50)
        keys = rows * 1000 + minutes
        assert all(len(set(k)) == 20 for k in keys)

    def test_window_draw_gap_and_provenance(self, tiny_market):
        _, market, manifest = tiny_market
        pool = dg.NegativePool.from_market(market, manifest)
        gaps = {(s, d): g for s, d, g in zip(pool.symbol, pool.day_index, pool.gap)}
        wins = dg.sample_negatives(pool, 20, np.random.default_rng(2))
        for w in wins:
            assert gaps[(w.symbol, w.day_index)] >= 5
            np.testing.assert_array_equal(w.values, market.days[(w.symbol, w.day_index)]
                                          [w.end_minute - 49:w.end_minute + 1])

    def test_full_pool_draw_returns_every_window(self):
        market = dg.generate(dg.SyntheticConfig(n_companies=1, n_quarters=1, pool_days=1, minutes=60))
        pool = dg.NegativePool.from_market(market, dg.build_manifest(market))
        wins = dg.sample_negatives(pool, pool.window_count(), np.random.default_rng(0))
        assert sorted(w.end_minute for w in wins) == list(range(49, 60))
        with pytest.raises(ConfigError):
            dg.sample_negatives(pool, pool.window_count() + 1, np.random.default_rng(0))

    def test_seeded_draws_repeat(self, tiny_market):
        _, market, manifest = tiny_market
        pool = dg.NegativePool.from_market(market, manifest)
        a = pool.draw_minutes((4, 3, 20), np.random.default_rng(9))
        b = pool.draw_minutes((4, 3, 20), np.random.default_rng(9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class _Offsets:
    """Stand-in sample set exposing only what the split rules read."""

    def __init__(self, offsets, sectors=None):
        self.sample_offset = np.asarray(offsets)
        self.sample_sector = np.asarray(sectors if sectors is not None else ["x"] * len(offsets))

    def __len__(self):
        return len(self.sample_offset)


class TestSplits:
    def test_fraction_sizes(self):
        sp = dg.split_dataset(_Offsets(np.ones(1000, int)), dg.SplitSpec("fraction_sweep", 0.2, 0.2))
        assert len(sp.finetune) == 200 and len(sp.test) == 200
        assert len(sp.pretrain) == 800

    @pytest.mark.parametrize("fraction", dg.SWEEP_FRACTIONS)
    def test_test_set_is_shared_across_fractions(self, fraction):
        s = _Offsets(np.ones(500, int))
        base = dg.split_dataset(s, dg.SplitSpec("fraction_sweep", 0.2, 0.2))
        sp = dg.split_dataset(s, dg.SplitSpec("fraction_sweep", fraction, 0.2))
        np.testing.assert_array_equal(sp.test, base.test)
        assert not set(sp.test) & set(sp.finetune)

    def test_fraction_sweep_uses_day_one(self):
        offsets = np.repeat([1, 2], 100)
        sp = dg.split_dataset(_Offsets(offsets), dg.SplitSpec("fraction_sweep", 0.5, 0.2))
        assert np.all(offsets[np.concatenate([sp.test, sp.finetune, sp.pretrain])] == 1)

    def test_sector_split(self):
        sectors = np.array(["Utilities", "Energy"] * 500)
        sp = dg.split_dataset(_Offsets(np.ones(1000, int), sectors),
                              dg.SplitSpec("sector_split", sector="Utilities"))
        for part in (sp.finetune, sp.train, sp.test):
            assert np.all(sectors[part] == "Utilities")
        assert (len(sp.finetune), len(sp.train), len(sp.test)) == (300, 100, 100)
        assert not set(sp.test) & set(sp.pretrain)
        assert len(set(sp.finetune) | set(sp.train) | set(sp.test)) == 500

    def test_day_decay(self):
        offsets = np.repeat([1, 2, 3], 100)
        sp = dg.split_dataset(_Offsets(offsets), dg.SplitSpec("day_decay", day=3))
        assert np.all(offsets[sp.train] == 3) and np.all(offsets[sp.test] == 3)
        assert (len(sp.train), len(sp.test)) == (60, 40)

    def test_disjoint_for_every_protocol(self):
        s = _Offsets(np.repeat([1, 2], 300), np.array(["a", "b", "c"] * 200))
        for spec in (dg.SplitSpec("fraction_sweep", 0.8, 0.2), dg.SplitSpec("sector_split", sector="b"),
                     dg.SplitSpec("day_decay", day=2)):
            sp = dg.split_dataset(s, spec)
            assert not set(sp.test) & (set(sp.train) | set(sp.finetune))

    def test_invalid_specs(self):
        s = _Offsets(np.ones(10, int))
        with pytest.raises(ConfigError):
            dg.split_dataset(s, dg.SplitSpec("fraction_sweep", 0.9, 0.2))
        with pytest.raises(ConfigError):
            dg.split_dataset(s, dg.SplitSpec("sector_split"))
        with pytest.raises(ConfigError):
            dg.split_dataset(s, dg.SplitSpec("sector_split", sector="missing"))
        with pytest.raises(ConfigError):
            dg.split_dataset(s, dg.SplitSpec("day_decay", day=4))

    def test_subsample_is_seeded(self):
        idx = np.arange(100)
        a, b = dg.subsample(idx, 10, 3), dg.subsample(idx, 10, 3)
        np.testing.assert_array_equal(a, b)
        assert len(a) == 10
        assert dg.subsample(idx, None, 3) is idx


class TestOracles:
    def test_announcement_table_has_one_row_per_announcement(self, tiny_samples):
        _, samples = tiny_samples
        X, s = dg.announcement_table(samples)
        assert X.shape == (27, EARNINGS_DIM)
        assert np.all(np.abs(s) <= 1.0)

    def test_movement_oracle_decays_with_day(self):
        market = dg.generate(dg.SyntheticConfig())
        samples = dg.build_samples(market, dg.build_manifest(market), PreprocessConfig(stride=2))
        acc = dg.movement_oracle_by_day(samples)
        seq = [acc[d] for d in range(1, 6)]
        # day-to-day differences beyond this slack would be real increases
        assert all(b <= a + 0.01 for a, b in zip(seq, seq[1:])), seq
        assert seq[0] > seq[-1] + 0.05

    def test_oracle_needs_signal(self):
        with pytest.raises(Exception):
            dg.drift_sign_oracle(np.zeros((4, 38)), np.array([math.nan] * 4))
