"""Comparison models: AE, MLM and SimCLR pretexts plus three supervised pipelines."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen.samples import Prepared
from .errors import ConfigError, ContractViolation, DivergenceError
from .model import (
    ModelConfig,
    add_head,
    classify_movement,
    context,
    encode_earnings,
    encode_price,
    init_params,
    positional_encode,
    reconstruct_earnings,
    transformer_context,
    transformer_sequence,
)
from .numerics import Adam, Tensor, add_constant, concat, cross_entropy, graph_ancestors, linear, matmul, mse, tanh
from .pretrain import EvalResult, FinetuneConfig, evaluate, train_classifier

PRETEXT_KINDS = ("ae", "mlm", "simclr")
SUPERVISED_KINDS = ("suprep", "supraw", "supraw2")
KINDS = PRETEXT_KINDS + SUPERVISED_KINDS
HEAD_INPUT = {"suprep": "fused", "supraw": "concat_raw", "supraw2": "price_only"}


@dataclass
class BaselineSpec:
    kind: str
    model: ModelConfig = field(default_factory=ModelConfig)
    mask_fraction: float = 0.15
    span: int = 5
    noise_std: float = 0.1
    temperature: float = 0.5
    proj_dim: int = 64

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown baseline kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "mlm" and not 0 < self.mask_fraction < 1:
            raise ConfigError(f"mask_fraction must lie in (0, 1), got {self.mask_fraction}")
        if self.kind == "simclr" and not self.noise_std > 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        return self

    @property
    def has_pretext(self) -> bool:
        return self.kind in PRETEXT_KINDS

    @property
    def uses_earnings(self) -> bool:
        return self.kind != "supraw2"

    def head_config(self) -> ModelConfig:
        return replace(self.model, head_input=HEAD_INPUT.get(self.kind, "fused"))


@dataclass
class PretextConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 2e-3
    ae_weight_decay: float = 1e-5
    divergence_margin: float = 5.0
    divergence_patience: int = 3
    max_batches: int | None = None


@dataclass
class PretextResult:
    params: object
    losses: list           # mean training loss per epoch
    naive: float           # loss of the trivial predictor the pretext must beat
    wall_ms: list = field(default_factory=list)


def _train_pretext(params, names, n: int, loss_fn, tcfg: PretextConfig, seed: int, naive: float, tag: int):
    opt = Adam(params, names, lr=tcfg.lr, weight_decay={"ae": tcfg.ae_weight_decay})
    ceiling = naive + tcfg.divergence_margin
    losses, walls, over = [], [], 0
    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence([seed, tag, epoch]))
        order = rng.permutation(n)
        batches = [order[i:i + tcfg.batch_size] for i in range(0, n, tcfg.batch_size)]
        if tcfg.max_batches:
            batches = batches[:tcfg.max_batches]
        tot, cnt = 0.0, 0
        for b in batches:
            opt.zero_grad()
            loss = loss_fn(b, rng)
            v = loss.item()
            if not math.isfinite(v):
                raise DivergenceError(f"non-finite pretext loss in epoch {epoch}", history=losses)
            loss.backward()
            opt.step()
            tot += v * len(b)
            cnt += len(b)
        losses.append(tot / cnt)
        walls.append((time.perf_counter() - t0) * 1000.0)
        over = over + 1 if losses[-1] > ceiling else 0
        if over >= tcfg.divergence_patience:
            raise DivergenceError(f"pretext loss above {ceiling:.3f} for {over} epochs", history=losses)
    return losses, walls


# -- autoencoders -------------------------------------------------------------

def _ae_losses(params, cfg: ModelConfig, windows, earnings):
    B = windows.shape[0]
    c_s = transformer_context(positional_encode(encode_price(windows, params), cfg), params, cfg)
    rec = linear(c_s, params["pdec.w"], params["pdec.b"]).reshape(B, cfg.omega, cfg.upsilon)
    price = mse(rec, windows)
    _, earn = reconstruct_earnings(encode_earnings(earnings, params), earnings, params)
    return price, earn


def pretrain_ae(data: Prepared, spec: BaselineSpec, tcfg: PretextConfig, seed: int = 0) -> PretextResult:
    """Price window -> c_s -> window and earnings -> c_e -> earnings, both on MSE."""
    cfg = spec.model
    params = init_params(cfg, seed, parts=("enc", "ar", "ae"))
    r = np.random.default_rng(np.random.SeedSequence([seed, 6]))
    out = cfg.omega * cfg.upsilon
    params.add("pdec.w", r.normal(0.0, 1.0 / math.sqrt(cfg.d), size=(cfg.d, out)))
    params.add("pdec.b", np.zeros(out))
    params.meta["model"] = "ae"
    naive = float(np.mean(data.windows.astype(np.float64) ** 2) + np.mean(data.earnings.astype(np.float64) ** 2))

    def loss_fn(b, rng):
        price, earn = _ae_losses(params, cfg, data.windows[b], data.earnings[b])
        return price + earn

    losses, walls = _train_pretext(params, params.names(), len(data), loss_fn, tcfg, seed, naive, 61)
    return PretextResult(params, losses, naive, walls)


# -- masked modelling ----------------------------------------------------------

def span_mask(rng: np.random.Generator, batch: int, length: int, fraction: float, span: int) -> np.ndarray:
    """Boolean ``(batch, length)`` mask of contiguous spans covering about ``fraction``.

    At least one position is always masked and at least one left visible.
    """
    target = max(1, int(round(fraction * length)))
    if target >= length:
        raise ConfigError(f"mask of {target} positions would cover the whole length-{length} sequence")
    span = max(1, min(span, target))
    mask = np.zeros((batch, length), dtype=bool)
    for row in mask:
        while row.sum() < target:
            start = rng.integers(0, length - span + 1)
            free = np.flatnonzero(~row[start:start + span])[: target - int(row.sum())]
            row[start + free] = True
    return mask


def mlm_loss(params, cfg: ModelConfig, windows, mask: np.ndarray):
    """Masked-position MSE of the bidirectional Transformer's reconstruction."""
    B, T, U = windows.shape
    z = encode_price(windows, params)
    m = mask[..., None].astype(z.dtype)
    z = z * Tensor(1.0 - m) + params["mlm.mask"] * Tensor(m)
    h = transformer_sequence(positional_encode(z, cfg), params, cfg, causal=False)
    pred = linear(h, params["mlm.out.w"], params["mlm.out.b"])
    return mse(pred, windows, mask=np.broadcast_to(m, (B, T, U)))


def pretrain_mlm(data: Prepared, spec: BaselineSpec, tcfg: PretextConfig, seed: int = 0) -> PretextResult:
    cfg = spec.model
    spec.validate()
    span_mask(np.random.default_rng(0), 1, cfg.omega, spec.mask_fraction, spec.span)  # config check
    params = init_params(cfg, seed, parts=("enc", "ar", "ae"))
    r = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    params.add("mlm.mask", r.normal(0.0, 0.02, size=cfg.d))
    params.add("mlm.out.w", r.normal(0.0, 1.0 / math.sqrt(cfg.d), size=(cfg.d, cfg.upsilon)))
    params.add("mlm.out.b", np.zeros(cfg.upsilon))
    params.meta["model"] = "mlm"
    naive = float(data.windows.astype(np.float64).var(axis=(0, 1)).mean())
    names = params.names(["enc", "ar", "mlm"])

    def loss_fn(b, rng):
        mask = span_mask(rng, len(b), cfg.omega, spec.mask_fraction, spec.span)
        return mlm_loss(params, cfg, data.windows[b], mask)

    losses, walls = _train_pretext(params, names, len(data), loss_fn, tcfg, seed, naive, 62)
    return PretextResult(params, losses, naive, walls)


# -- SimCLR -------------------------------------------------------------------

def nt_xent(h1: Tensor, h2: Tensor, temperature: float) -> Tensor:
    """Normalized-temperature cross-entropy over ``2B`` views."""
    B = h1.shape[0]
    if B < 2:
        raise ConfigError("NT-Xent needs a batch of at least 2 windows")
    z = concat([h1, h2], axis=0)
    z = z / ((z * z).sum(axis=-1, keepdims=True) + 1e-12) ** 0.5
    sim = matmul(z, z.T) * (1.0 / temperature)
    diag = np.zeros((2 * B, 2 * B), dtype=sim.dtype)
    np.fill_diagonal(diag, -np.inf)
    sim = add_constant(sim, diag)
    targets = np.concatenate([np.arange(B, 2 * B), np.arange(B)])
    return cross_entropy(sim, targets)


def simclr_project(params, cfg: ModelConfig, windows) -> Tensor:
    c_s = transformer_context(positional_encode(encode_price(windows, params), cfg), params, cfg)
    return tanh(linear(c_s, params["simclr.proj.w"], params["simclr.proj.b"]))


def simclr_views(windows: np.ndarray, noise_std: float, rng: np.random.Generator):
    n1 = rng.normal(0.0, noise_std, size=windows.shape) if noise_std > 0 else 0.0
    n2 = rng.normal(0.0, noise_std, size=windows.shape) if noise_std > 0 else 0.0
    return (windows + n1).astype(windows.dtype), (windows + n2).astype(windows.dtype)


def pretrain_simclr(data: Prepared, spec: BaselineSpec, tcfg: PretextConfig, seed: int = 0) -> PretextResult:
    cfg = spec.model
    spec.validate()
    if tcfg.batch_size < 2:
        raise ConfigError("SimCLR needs batch_size >= 2")
    params = init_params(cfg, seed, parts=("enc", "ar", "ae"))
    r = np.random.default_rng(np.random.SeedSequence([seed, 8]))
    params.add("simclr.proj.w", r.normal(0.0, 1.0 / math.sqrt(cfg.d), size=(cfg.d, spec.proj_dim)))
    params.add("simclr.proj.b", np.zeros(spec.proj_dim))
    params.meta["model"] = "simclr"
    naive = math.log(2 * min(tcfg.batch_size, len(data)) - 1)
    names = params.names(["enc", "ar", "simclr"])

    def loss_fn(b, rng):
        if len(b) < 2:
            b = np.concatenate([b, (b + 1) % len(data)])
        v1, v2 = simclr_views(data.windows[b], spec.noise_std, rng)
        return nt_xent(simclr_project(params, cfg, v1), simclr_project(params, cfg, v2), spec.temperature)

    losses, walls = _train_pretext(params, names, len(data), loss_fn, tcfg, seed, naive, 63)
    return PretextResult(params, losses, naive, walls)


PRETEXTS = {"ae": pretrain_ae, "mlm": pretrain_mlm, "simclr": pretrain_simclr}


def pretrain_baseline(data: Prepared, spec: BaselineSpec, tcfg: PretextConfig, seed: int = 0) -> PretextResult:
    spec.validate()
    if not spec.has_pretext:
        raise ConfigError(f"{spec.kind} is supervised and has no pretext phase")
    return PRETEXTS[spec.kind](data, spec, tcfg, seed)


def frozen_parts_for(kind: str):
    """Encoders fixed in frozen fine-tuning; price-only pretexts leave the earnings encoder trainable."""
    return ("enc", "ar", "ae") if kind in ("cet", "ae") else ("enc", "ar")


# -- supervised pipelines -------------------------------------------------------

def supervised_params(spec: BaselineSpec, seed: int = 0):
    cfg = spec.head_config()
    parts = ("enc", "ar", "ae") if cfg.head_input == "fused" else ("enc", "ar")
    params = init_params(cfg, seed, parts=parts)
    add_head(params, cfg, seed)
    params.meta["model"] = spec.kind
    return params


def supervised_forward(spec: BaselineSpec, params, windows, earnings=None) -> Tensor:
    """Logits of a supervised pipeline; the price-only kind refuses earnings."""
    cfg = spec.head_config()
    if spec.kind == "supraw2" and earnings is not None:
        raise ContractViolation("supraw2 must not receive earnings inputs")
    return classify_movement(context(windows, earnings, params, cfg), params)


def earnings_taint(spec: BaselineSpec, params, windows, earnings) -> bool:
    """True when the logits' graph depends on the earnings input."""
    e = Tensor(np.asarray(earnings, dtype=params.dtype), requires_grad=True)
    w = Tensor(np.asarray(windows, dtype=params.dtype), requires_grad=True)
    logits = supervised_forward(spec, params, w, e if spec.uses_earnings else None)
    return any(node is e for node in graph_ancestors(logits))


@dataclass
class SupervisedResult:
    params: object
    test: EvalResult
    history: list


def train_supervised(train: Prepared, test: Prepared, spec: BaselineSpec, fcfg: FinetuneConfig,
                     seed: int = 0, params=None) -> SupervisedResult:
    """Train a supervised pipeline end to end on cross-entropy and score it."""
    spec.validate()
    if spec.has_pretext:
        raise ConfigError(f"{spec.kind} is not a supervised kind")
    cfg = spec.head_config()
    params = supervised_params(spec, seed) if params is None else params
    use_e = spec.uses_earnings
    history = train_classifier(params, cfg, train, params.names(), fcfg, seed, use_earnings=use_e)
    return SupervisedResult(params, evaluate(params, cfg, test, use_earnings=use_e), history)
