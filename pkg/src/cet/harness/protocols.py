"""The four experiment protocols: label fractions, sectors, day decay and the K ablation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .. import datagen as dg
from ..baselines import BaselineSpec, PretextConfig, frozen_parts_for, pretrain_baseline, train_supervised
from ..errors import CETError, ConfigError, ContractViolation, DivergenceError
from ..model import init_params
from ..preprocess import PreprocessConfig
from ..pretrain import CpcData, FinetuneConfig, PretrainConfig, equilibrium, finetune, pretrain
from .config import SELF_SUPERVISED, ExperimentConfig
from .report import ExperimentReport

log = logging.getLogger("cet.harness")


@dataclass
class World:
    market: object
    manifest: object
    samples: dg.SampleSet
    pool: dg.NegativePool
    pcfg: PreprocessConfig


def load_market(cfg: ExperimentConfig):
    """``(manifest, market)`` from a dataset directory, CSV pair or the generator."""
    if cfg.data_dir:
        return dg.load_dataset(cfg.data_dir)
    if cfg.bars_csv:
        return dg.ingest_csv(cfg.bars_csv, cfg.earnings_csv)
    market = dg.generate(cfg.synthetic)
    return dg.build_manifest(market), market


def build_world(cfg: ExperimentConfig, horizon: int | None = None) -> World:
    mcfg = cfg.model_config()
    manifest, market = load_market(cfg)
    pcfg = PreprocessConfig(omega=mcfg.omega, horizon=horizon or mcfg.K, stride=cfg.stride,
                            eps_hold=cfg.eps_hold)
    samples = dg.build_samples(market, manifest, pcfg)
    pool = dg.NegativePool.from_market(market, manifest, mcfg.omega)
    return World(market, manifest, samples, pool, pcfg)


def assert_isolated(test, *train_sets):
    """Protocol isolation: no test index may appear in any training set."""
    t = np.asarray(test)
    for s in train_sets:
        if np.intersect1d(t, s).size:
            raise ContractViolation("test indices leak into a training set")


class Lab:
    """Shared state of one protocol run: scaler, prepared arrays and trainers."""

    def __init__(self, cfg: ExperimentConfig, world: World, scaler: dg.Scaler):
        self.cfg = cfg
        self.world = world
        self.scaler = scaler
        self.mcfg = cfg.model_config()
        self.pool_std = world.pool.standardized(scaler)
        self._prepared = {}
        lr_pre, lr_ft = cfg.learning_rates
        self.fcfg = FinetuneConfig(epochs=cfg.finetune_epochs, frozen_epochs=cfg.frozen_epochs,
                                   batch_size=cfg.batch_size, lr=lr_ft)
        self.tcfg = PretrainConfig(epochs=cfg.pretrain_epochs, batch_size=cfg.batch_size, lr=lr_pre,
                                   max_batches=cfg.max_batches)
        self.xcfg = PretextConfig(epochs=cfg.pretext_epochs, batch_size=cfg.batch_size, lr=lr_pre,
                                  max_batches=cfg.max_batches)

    def prep(self, idx) -> dg.Prepared:
        idx = np.asarray(idx, dtype=np.int64)
        key = idx.tobytes()
        if key not in self._prepared:
            self._prepared[key] = dg.prepare(self.world.samples, self.scaler, idx, self.world.pcfg)
        return self._prepared[key]

    def train_idx(self, idx):
        return dg.subsample(idx, self.cfg.max_train, self.cfg.split_seed)

    def pretrain_cpc(self, pre_idx, seed: int, K: int | None = None):
        mcfg = self.mcfg if K is None else self.cfg.model_config(K=K)
        data = CpcData(self.prep(pre_idx), self.world.pool, self.pool_std, mcfg.K)
        return pretrain(data, init_params(mcfg, seed), mcfg, self.tcfg, seed)

    def pretrain(self, kind: str, pre_idx, seed: int):
        log.info("pre-training %s on %d samples (seed %d)", kind, len(pre_idx), seed)
        if kind == "cet":
            return self.pretrain_cpc(pre_idx, seed).params
        spec = BaselineSpec(kind, model=self.mcfg)
        return pretrain_baseline(self.prep(pre_idx), spec, self.xcfg, seed).params

    def fit(self, kind: str, pretrained, train_idx, test_idx, mode: str, seed: int, reset_head: bool = True):
        """Train one model and return ``(accuracy %, params)``."""
        train, test = self.prep(train_idx), self.prep(test_idx)
        if kind in SELF_SUPERVISED:
            res = finetune(pretrained, self.mcfg, train, test, mode, self.fcfg, seed,
                           reset_head=reset_head, frozen_parts=frozen_parts_for(kind))
        else:
            res = train_supervised(train, test, BaselineSpec(kind, model=self.mcfg), self.fcfg, seed)
        return 100.0 * res.test.accuracy, res.params


def _failure(exc: Exception) -> str:
    return f"failed: {type(exc).__name__}: {exc}".replace("\n", " ")


def _pretrain_all(lab: Lab, rep: ExperimentReport, pre_idx):
    seed = lab.cfg.seeds[0]
    out = {}
    for kind in rep.models:
        if kind not in SELF_SUPERVISED:
            continue
        try:
            out[kind] = lab.pretrain(kind, pre_idx, seed)
        except CETError as exc:
            for c in rep.conditions:
                rep.annotate(c, kind, "pre-training " + _failure(exc))
    return out


def _run_cell(lab: Lab, rep: ExperimentReport, cond: str, kind: str, pretrained: dict, train_idx, test_idx,
              mode: str):
    if kind in SELF_SUPERVISED and kind not in pretrained:
        return
    for seed in lab.cfg.seeds:
        try:
            acc, _ = lab.fit(kind, pretrained.get(kind), train_idx, test_idx, mode, seed)
            rep.record(cond, kind, seed, acc)
        except CETError as exc:
            rep.annotate(cond, kind, f"seed {seed} " + _failure(exc))


def _new_report(cfg: ExperimentConfig, protocol: str, conditions) -> ExperimentReport:
    return ExperimentReport(protocol, [str(c) for c in conditions], list(cfg.models), tuple(cfg.seeds))


# -- protocols ----------------------------------------------------------------------

def run_fraction_sweep(cfg: ExperimentConfig, world: World | None = None) -> ExperimentReport:
    """Fine-tune (self-supervised, unfrozen) or train (supervised) at each label fraction.

    All fractions share one 20% test split; self-supervised models are
    pre-trained once on every non-test day-1 sample.
    """
    cfg.validate()
    world = world or build_world(cfg)
    splits = {f: dg.split_dataset(world.samples, dg.SplitSpec("fraction_sweep", fraction=f,
                                                               test_fraction=cfg.test_fraction,
                                                               seed=cfg.split_seed))
              for f in cfg.fractions}
    first = splits[cfg.fractions[0]]
    test, pre_idx = first.test, first.pretrain
    rep = _new_report(cfg, "fractions", cfg.fractions)
    lab = Lab(cfg, world, dg.Scaler.fit(world.samples, pre_idx))
    assert_isolated(test, pre_idx)
    pretrained = _pretrain_all(lab, rep, pre_idx)
    for f, cond in zip(cfg.fractions, rep.conditions):
        sp = splits[f]
        if not np.array_equal(sp.test, test):
            raise ContractViolation("fraction splits disagree on the common test set")
        train = lab.train_idx(sp.finetune)
        assert_isolated(test, train)
        for kind in rep.models:
            log.info("fractions %s: %s", cond, kind)
            _run_cell(lab, rep, cond, kind, pretrained, train, test, "unfrozen")
    return rep


def present_sectors(samples: dg.SampleSet) -> list:
    found = set(samples.sector.tolist())
    ordered = [s for s in dg.SECTORS if s in found]
    return ordered + sorted(found.difference(ordered))


def run_sector_split(cfg: ExperimentConfig, world: World | None = None) -> ExperimentReport:
    """Per-sector 60:20:20 split: frozen fine-tune, supervised train, test."""
    cfg.validate()
    world = world or build_world(cfg)
    s = world.samples
    sectors = list(cfg.sectors) or present_sectors(s)
    rep = _new_report(cfg, "sectors", sectors)
    splits = {}
    for sec in sectors:
        try:
            splits[sec] = dg.split_dataset(s, dg.SplitSpec("sector_split", sector=sec, seed=cfg.split_seed))
        except ConfigError as exc:
            for kind in rep.models:
                rep.annotate(sec, kind, f"skipped: {exc}")
    all_tests = np.concatenate([sp.test for sp in splits.values()]) if splits else np.zeros(0, np.int64)
    pre_idx = np.setdiff1d(np.flatnonzero(s.sample_offset == 1), all_tests)
    if len(pre_idx) == 0:
        raise ConfigError("no day-1 samples outside the sector test sets")
    lab = Lab(cfg, world, dg.Scaler.fit(s, pre_idx))
    assert_isolated(all_tests, pre_idx)
    pretrained = _pretrain_all(lab, rep, pre_idx)
    for sec, sp in splits.items():
        if np.any(s.sample_sector[sp.test] != sec):
            raise ContractViolation(f"test samples outside sector {sec!r}")
        ft, tr = lab.train_idx(sp.finetune), lab.train_idx(sp.train)
        assert_isolated(sp.test, ft, tr)
        for kind in rep.models:
            log.info("sectors %s: %s", sec, kind)
            train = ft if kind in SELF_SUPERVISED else tr
            _run_cell(lab, rep, sec, kind, pretrained, train, sp.test, "frozen")
    return rep


def run_day_decay(cfg: ExperimentConfig, world: World | None = None) -> ExperimentReport:
    """Per-day 60/40 splits on days after the announcement.

    Self-supervised models carry their weights from one day to the next
    (continuous fine-tuning on the current day's data only); supervised
    models start fresh each day.
    """
    cfg.validate()
    world = world or build_world(cfg)
    s = world.samples
    rep = _new_report(cfg, "days", cfg.days)
    splits = {}
    for d, cond in zip(cfg.days, rep.conditions):
        try:
            splits[cond] = dg.split_dataset(s, dg.SplitSpec("day_decay", day=d, seed=cfg.split_seed))
        except ConfigError as exc:
            for kind in rep.models:
                rep.annotate(cond, kind, f"skipped: {exc}")
    pre_idx = np.flatnonzero(s.sample_offset == 1)
    if len(pre_idx) == 0:
        raise ConfigError("day protocol needs day-1 samples for pre-training")
    trains = {c: sp.train for c, sp in splits.items()}
    fit_idx = np.concatenate([pre_idx, *trains.values()])
    lab = Lab(cfg, world, dg.Scaler.fit(s, fit_idx))
    for sp in splits.values():
        assert_isolated(sp.test, pre_idx, *trains.values())
    pretrained = _pretrain_all(lab, rep, pre_idx)
    for kind in rep.models:
        if kind not in SELF_SUPERVISED:
            for cond, sp in splits.items():
                log.info("days %s: %s", cond, kind)
                _run_cell(lab, rep, cond, kind, pretrained, lab.train_idx(sp.train), sp.test, cfg.day_mode)
            continue
        if kind not in pretrained:
            continue
        for seed in cfg.seeds:
            params, fresh = pretrained[kind], True
            for cond, sp in splits.items():
                log.info("days %s: %s seed %d", cond, kind, seed)
                try:
                    acc, params = lab.fit(kind, params, lab.train_idx(sp.train), sp.test, cfg.day_mode, seed,
                                          reset_head=fresh)
                    rep.record(cond, kind, seed, acc)
                    fresh = False
                except CETError as exc:
                    rep.annotate(cond, kind, f"seed {seed} " + _failure(exc))
    return rep


def run_ablation(cfg: ExperimentConfig, world: World | None = None) -> ExperimentReport:
    """For each K: CPC pre-training, equilibrium loss and similarity, then fine-tuning."""
    cfg.validate()
    world = world or build_world(cfg, horizon=cfg.k_max)
    if world.pcfg.horizon < cfg.k_max:
        raise ConfigError(f"world horizon {world.pcfg.horizon} is shorter than k_max {cfg.k_max}")
    ks = list(range(cfg.k_min, cfg.k_max + 1))
    rep = ExperimentReport("ablation", [str(k) for k in ks], ["cet"], tuple(cfg.seeds))
    sp = dg.split_dataset(world.samples, dg.SplitSpec("fraction_sweep", fraction=cfg.ablation_fraction,
                                                       test_fraction=cfg.test_fraction, seed=cfg.split_seed))
    lab = Lab(cfg, world, dg.Scaler.fit(world.samples, sp.pretrain))
    train = lab.train_idx(sp.finetune)
    assert_isolated(sp.test, sp.pretrain, train)
    for k in ks:
        mcfg = cfg.model_config(K=k)
        rep.curves[k] = {}
        for seed in cfg.seeds:
            log.info("ablation K=%d seed %d", k, seed)
            try:
                res = lab.pretrain_cpc(sp.pretrain, seed, K=k)
                loss = equilibrium([r.loss for r in res.records])
                cos = equilibrium([float(np.mean(r.cos_k)) for r in res.records])
                ft = finetune(res.params, mcfg, lab.prep(train), lab.prep(sp.test), cfg.ablation_mode,
                              lab.fcfg, seed)
                acc = 100.0 * ft.test.accuracy
            except CETError as exc:
                rep.annotate(str(k), "cet", f"seed {seed} " + _failure(exc))
                continue
            rep.curves[k][seed] = (loss, cos, acc)
            rep.record(str(k), "cet", seed, acc)
    return rep


RUNNERS = {"fractions": run_fraction_sweep, "sectors": run_sector_split, "days": run_day_decay,
           "ablation": run_ablation}


def run_protocol(cfg: ExperimentConfig, world: World | None = None) -> ExperimentReport:
    return RUNNERS[cfg.protocol](cfg, world)


def diverged(rep: ExperimentReport) -> bool:
    return any(DivergenceError.__name__ in n for n in rep.notes.values())


def spearman(x, y) -> float:
    """Spearman rank correlation; 0 when undefined (constant input)."""
    from scipy.stats import spearmanr

    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    r = spearmanr(x, y).statistic
    return float(r) if not math.isnan(r) else 0.0
