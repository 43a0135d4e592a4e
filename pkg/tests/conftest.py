import numpy as np
import pytest

import cet.datagen as dg
from cet.model import ModelConfig, init_params
from cet.preprocess import PreprocessConfig

TINY_SYN = dict(n_companies=9, n_quarters=3)

# (criterion number, PASS/FAIL line) appended by the acceptance suite
ACCEPTANCE = []


def tiny_model_config(**kw) -> ModelConfig:
    """Small network for float64 gradient checks and quick training tests."""
    base = dict(d=8, omega=6, transformer_layers=1, heads=2, ff_dim=12, enc_hidden=5, K=2)
    base.update(kw)
    return ModelConfig(**base).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return tiny_model_config()


@pytest.fixture
def tiny_params64(tiny_cfg):
    return init_params(tiny_cfg, seed=3, dtype=np.float64)


@pytest.fixture(scope="session")
def tiny_market():
    cfg = dg.SyntheticConfig(**TINY_SYN)
    market = dg.generate(cfg)
    return cfg, market, dg.build_manifest(market)


@pytest.fixture(scope="session")
def tiny_samples(tiny_market):
    _, market, manifest = tiny_market
    pcfg = PreprocessConfig(stride=10)
    return pcfg, dg.build_samples(market, manifest, pcfg)


@pytest.fixture(scope="session")
def default_lab():
    """Default synthetic world at the harness defaults, split for a 50% label fraction."""
    from cet.harness import ExperimentConfig, Lab, build_world

    cfg = ExperimentConfig(fractions=(0.5,)).validate()
    world = build_world(cfg)
    sp = dg.split_dataset(world.samples, dg.SplitSpec("fraction_sweep", fraction=0.5, seed=cfg.split_seed))
    return cfg, world, sp, Lab(cfg, world, dg.Scaler.fit(world.samples, sp.pretrain))


@pytest.fixture(scope="session")
def default_pretrain(default_lab):
    """20-epoch CPC pre-training on the default world's non-test day-1 samples."""
    _, world, sp, lab = default_lab
    before = dict(world.pool.audit)
    result = lab.pretrain_cpc(sp.pretrain, seed=0)
    drawn = {k: world.pool.audit[k] - before[k] for k in before}
    return result, drawn


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
