"""Experiment configuration parsed from flat ``key = value`` text files.

Keys are the :class:`ExperimentConfig` field names plus dotted overrides
``synthetic.<field>`` and ``model.<field>``.  Lists are comma separated.
Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..baselines import KINDS
from ..datagen import SyntheticConfig
from ..errors import ConfigError
from ..model import DESK_PRESET, ModelConfig

PROTOCOLS = ("fractions", "sectors", "days", "ablation")
MODEL_KINDS = ("cet",) + KINDS
SELF_SUPERVISED = ("cet", "ae", "mlm", "simclr")
LR_PRESETS = {"standard": (2e-3, 2e-4), "slow": (1e-3, 1e-4)}  # (pre-train, fine-tune)
_NULLABLE = {"max_batches", "max_train"}


@dataclass
class ExperimentConfig:
    protocol: str = "fractions"
    models: tuple = MODEL_KINDS
    seeds: tuple = (0, 1, 2, 3, 4)
    data_dir: str = ""            # directory written by `cet datagen`; empty means synthetic
    bars_csv: str = ""
    earnings_csv: str = ""
    preset: str = "desk"          # desk | full (base ModelConfig before model.* overrides)
    stride: int = 5
    eps_hold: float = 2e-4
    pretrain_epochs: int = 20
    pretext_epochs: int = 20
    finetune_epochs: int = 10
    frozen_epochs: int = 30
    batch_size: int = 64
    lr_preset: str = "standard"
    fractions: tuple = (0.2, 0.5, 0.8)
    test_fraction: float = 0.2
    sectors: tuple = ()           # empty means every sector present
    days: tuple = (2, 3, 4, 5)
    day_mode: str = "unfrozen"
    k_min: int = 1
    k_max: int = 20
    ablation_fraction: float = 0.5
    ablation_mode: str = "frozen"
    split_seed: int = 0
    max_batches: int | None = None
    max_train: int | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    model_overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if not self.models:
            raise ConfigError("models must be a non-empty list")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown model kinds {bad}; expected a subset of {MODEL_KINDS}")
        if self.preset not in ("desk", "full"):
            raise ConfigError(f"preset must be 'desk' or 'full', got {self.preset!r}")
        if self.lr_preset not in LR_PRESETS:
            raise ConfigError(f"lr_preset must be one of {tuple(LR_PRESETS)}, got {self.lr_preset!r}")
        if bool(self.bars_csv) != bool(self.earnings_csv):
            raise ConfigError("bars_csv and earnings_csv must be given together")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        for f in self.fractions:
            if not 0 < f < 1 or f + self.test_fraction > 1 + 1e-12:
                raise ConfigError(f"fraction {f} is invalid with test_fraction {self.test_fraction}")
        if any(not 1 <= d <= 5 for d in self.days):
            raise ConfigError(f"day offsets must lie in 1..5, got {self.days}")
        for name in ("day_mode", "ablation_mode"):
            if getattr(self, name) not in ("frozen", "unfrozen"):
                raise ConfigError(f"{name} must be 'frozen' or 'unfrozen'")
        mcfg = self.model_config()
        if self.protocol == "ablation":
            if not 1 <= self.k_min <= self.k_max:
                raise ConfigError(f"need 1 <= k_min <= k_max, got {self.k_min}..{self.k_max}")
            if self.k_max + mcfg.omega > self.synthetic.minutes:
                raise ConfigError(f"k_max {self.k_max} + omega {mcfg.omega} exceeds the trading day")
            if not 0 < self.ablation_fraction + self.test_fraction <= 1:
                raise ConfigError("ablation_fraction + test_fraction must lie in (0, 1]")
        for n in (self.pretrain_epochs, self.pretext_epochs, self.finetune_epochs, self.frozen_epochs):
            if n < 1:
                raise ConfigError("epoch counts must be >= 1")
        return self

    def model_config(self, **extra) -> ModelConfig:
        base = ModelConfig(**DESK_PRESET) if self.preset == "desk" else ModelConfig()
        try:
            return replace(base, **{**self.model_overrides, **extra}).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def learning_rates(self) -> tuple[float, float]:
        return LR_PRESETS[self.lr_preset]


# -- parsing ------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _coerce(raw: str, default, nullable: bool = False):
    raw = raw.strip()
    if nullable and raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int) or (nullable and default is None):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        proto = default[0] if default else ""
        return tuple(_coerce(x, proto) for x in items)
    return raw


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


_TOP = [f.name for f in fields(ExperimentConfig) if f.name not in ("synthetic", "model_overrides")]
_MODEL_FIELDS = {f.name: f.default for f in fields(ModelConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    syn = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            if key in _TOP:
                setattr(cfg, key, _coerce(value, getattr(cfg, key), key in _NULLABLE))
            elif key.startswith("synthetic."):
                name = key.split(".", 1)[1]
                if name not in SyntheticConfig.field_names():
                    raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
                syn[name] = _coerce(value, getattr(cfg.synthetic, name))
            elif key.startswith("model."):
                name = key.split(".", 1)[1]
                if name not in _MODEL_FIELDS:
                    raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
                cfg.model_overrides[name] = _coerce(value, _MODEL_FIELDS[name])
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if syn:
        cfg.synthetic = replace(cfg.synthetic, **syn)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config`` of the output reproduces ``cfg``."""
    lines = [f"{k} = {_format(getattr(cfg, k))}" for k in _TOP]
    default_syn = SyntheticConfig()
    for name in SyntheticConfig.field_names():
        v = getattr(cfg.synthetic, name)
        if v != getattr(default_syn, name):
            lines.append(f"synthetic.{name} = {_format(v)}")
    for name in sorted(cfg.model_overrides):
        lines.append(f"model.{name} = {_format(cfg.model_overrides[name])}")
    return "\n".join(lines) + "\n"
