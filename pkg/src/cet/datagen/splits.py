"""Partition protocols: label-fraction sweep, sector split, per-day decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

PROTOCOLS = ("fraction_sweep", "sector_split", "day_decay")
SWEEP_FRACTIONS = (0.2, 0.5, 0.8)


@dataclass
class SplitSpec:
    protocol: str = "fraction_sweep"
    fraction: float = 0.2
    test_fraction: float = 0.2
    ratios: tuple = (0.6, 0.2, 0.2)   # sector_split: fine-tune, supervised train, test
    sector: str | None = None
    day: int | None = None
    train_fraction: float = 0.6       # day_decay
    seed: int = 0

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.protocol == "fraction_sweep":
            if not 0 < self.fraction < 1 or not 0 < self.test_fraction < 1:
                raise ConfigError("fraction and test_fraction must lie in (0, 1)")
            if self.fraction + self.test_fraction > 1 + 1e-12:
                raise ConfigError(f"fraction {self.fraction} + test {self.test_fraction} exceeds the dataset")
        if self.protocol == "sector_split":
            if len(self.ratios) != 3 or abs(sum(self.ratios) - 1) > 1e-9 or min(self.ratios) <= 0:
                raise ConfigError(f"sector ratios must be three positive parts summing to 1, got {self.ratios}")
            if self.sector is None:
                raise ConfigError("sector_split needs a sector")
        if self.protocol == "day_decay":
            if self.day is None:
                raise ConfigError("day_decay needs a day offset")
            if not 0 < self.train_fraction < 1:
                raise ConfigError("train_fraction must lie in (0, 1)")
        return self


@dataclass
class Split:
    """Disjoint sample index sets.

    ``pretrain`` is the unlabeled pool used by self-supervised models;
    ``finetune`` and ``train`` hold labeled training samples (identical
    except under the sector protocol); ``test`` is held out everywhere.
    """

    pretrain: np.ndarray
    finetune: np.ndarray
    train: np.ndarray
    test: np.ndarray
    meta: dict = field(default_factory=dict)

    def check_disjoint(self):
        t = set(self.test.tolist())
        for name in ("finetune", "train"):
            if t.intersection(getattr(self, name).tolist()):
                raise ConfigError(f"test indices leak into the {name} set")
        return self


def _counts(n: int, parts) -> list[int]:
    sizes = [int(round(n * p)) for p in parts]
    sizes[-1] = n - sum(sizes[:-1])
    return sizes


def split_dataset(samples, spec: SplitSpec) -> Split:
    """Seeded random partition of ``samples`` under ``spec``."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 4242]))
    offsets = samples.sample_offset
    n_all = len(samples)
    if spec.protocol == "fraction_sweep":
        pool = np.flatnonzero(offsets == 1) if np.any(offsets == 1) else np.arange(n_all)
        perm = rng.permutation(pool)
        n_test = int(round(len(pool) * spec.test_fraction))
        n_ft = int(round(len(pool) * spec.fraction))
        test = np.sort(perm[:n_test])
        ft = np.sort(perm[n_test:n_test + n_ft])
        pretrain = np.sort(perm[n_test:])
        return Split(pretrain, ft, ft, test, {"protocol": spec.protocol, "fraction": spec.fraction}).check_disjoint()
    if spec.protocol == "sector_split":
        sectors = samples.sample_sector
        pool = np.flatnonzero((sectors == spec.sector) & (offsets == 1))
        if len(pool) == 0:
            raise ConfigError(f"sector {spec.sector!r} has no samples")
        perm = rng.permutation(pool)
        a, b, _ = _counts(len(pool), spec.ratios)
        ft, tr, te = np.sort(perm[:a]), np.sort(perm[a:a + b]), np.sort(perm[a + b:])
        # self-supervised pre-training may use every non-test day-1 sample
        day1 = np.flatnonzero(offsets == 1)
        pretrain = np.setdiff1d(day1, te)
        return Split(pretrain, ft, tr, te, {"protocol": spec.protocol, "sector": spec.sector}).check_disjoint()
    pool = np.flatnonzero(offsets == spec.day)
    if len(pool) == 0:
        raise ConfigError(f"no samples for day offset {spec.day}")
    perm = rng.permutation(pool)
    n_tr = int(round(len(pool) * spec.train_fraction))
    tr, te = np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
    return Split(tr, tr, tr, te, {"protocol": spec.protocol, "day": spec.day}).check_disjoint()


def subsample(idx, max_n: int | None, seed: int) -> np.ndarray:
    """Deterministic uniform subset of at most ``max_n`` indices."""
    idx = np.asarray(idx)
    if max_n is None or len(idx) <= max_n:
        return idx
    rng = np.random.default_rng(np.random.SeedSequence([seed, 777]))
    return np.sort(rng.choice(idx, size=max_n, replace=False))
