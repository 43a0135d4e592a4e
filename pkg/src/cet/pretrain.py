"""CPC pre-training with InfoNCE, fine-tuning, and cosine diagnostics."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .datagen.samples import NegativePool, Prepared
from .errors import ContractViolation, DivergenceError, NumericError, UndefinedInputError
from .model import (
    ModelConfig,
    add_head,
    checkpoint_bytes,
    classify_movement,
    context,
    encode_earnings,
    encode_price,
    fuse_context,
    predict,
    price_context,
    reconstruct_earnings,
)
from .preprocess import label_returns
from .numerics import Adam, Tensor, concat, cross_entropy, linear, log_softmax, mse, no_grad, stack

FROZEN_PARTS = ("enc", "ar", "ae")


# -- loss -------------------------------------------------------------------

def infonce_from_scores(scores: Tensor, pos_index=0):
    """InfoNCE over log-domain scores ``(B, K, M)``.

    ``pos_index`` (int or ``(B, K)`` array) marks the positive candidate.
    Returns ``(total, per_k)`` with ``per_k`` the anchor-averaged loss per
    step and ``total`` their mean.
    """
    B, K, M = scores.shape
    if M < 2:
        raise ContractViolation("InfoNCE needs at least one negative per anchor")
    logp = log_softmax(scores, axis=-1)
    if np.isscalar(pos_index) or np.ndim(pos_index) == 0:
        picked = logp[:, :, int(pos_index)]
    else:
        pos = np.asarray(pos_index, dtype=np.int64)
        picked = logp[np.arange(B)[:, None], np.arange(K)[None, :], pos]
    per_k = -picked.mean(axis=0)
    return per_k.mean(), per_k


@dataclass
class CpcBatch:
    windows: np.ndarray      # (B, omega, upsilon)
    earnings: np.ndarray     # (B, 38)
    positives: np.ndarray    # (B, K, upsilon)
    negatives: np.ndarray    # (B, K, N, upsilon)
    neg_rows: np.ndarray | None = None
    neg_minutes: np.ndarray | None = None


def cpc_scores(batch: CpcBatch, params, cfg: ModelConfig):
    """Log-bilinear scores ``(B, K, 1 + N)`` with the positive first, plus diagnostics."""
    if batch.negatives.shape[2] == 0:
        raise ContractViolation("CPC batch has no negatives")
    B, K = batch.positives.shape[:2]
    c = context(batch.windows, batch.earnings, params, cfg)                # (B, d)
    z_pos = encode_price(batch.positives, params)                           # (B, K, d)
    z_neg = encode_price(batch.negatives, params)                           # (B, K, N, d)
    proj = stack([linear(c, params[f"wk.{k + 1}"].T) for k in range(K)], axis=1)   # (B, K, d)
    cand = concat([z_pos.reshape(B, K, 1, cfg.d), z_neg], axis=2)
    scores = (cand * proj.reshape(B, K, 1, cfg.d)).sum(axis=-1)
    return scores, proj, z_pos


def infonce_loss(batch: CpcBatch, params, cfg: ModelConfig):
    """Mean InfoNCE over anchors and steps; returns ``(total, per_k, cos_k)``."""
    scores, proj, z_pos = cpc_scores(batch, params, cfg)
    total, per_k = infonce_from_scores(scores)
    cos = row_cosine(proj.data, z_pos.data).mean(axis=0)
    return total, per_k, cos


def row_cosine(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    denom = np.where((na > 0) & (nb > 0), na * nb, 1.0)
    return (a * b).sum(-1) / denom


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise UndefinedInputError(f"cosine_similarity: shapes {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedInputError("cosine_similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


# -- batches ----------------------------------------------------------------

class CpcData:
    """Standardized anchors, their futures, and the standardized negative pool."""

    def __init__(self, prepared: Prepared, pool: NegativePool, pool_std: np.ndarray, K: int):
        if prepared.futures.shape[1] < K:
            raise ContractViolation(f"samples carry {prepared.futures.shape[1]} future minutes, K={K} needs more")
        self.data = prepared
        self.pool = pool
        self.pool_std = pool_std
        self.K = K
        self.omega = prepared.windows.shape[1]

    def __len__(self):
        return len(self.data)

    def batch(self, idx, rng: np.random.Generator, n_neg: int = 20, shuffle_positives: bool = False) -> CpcBatch:
        d = self.data
        idx = np.asarray(idx)
        pos_src = idx
        if shuffle_positives:
            pos_src = rng.integers(0, len(d), size=len(idx))
        B = len(idx)
        rows, minutes = self.pool.draw_minutes((B, self.K, n_neg), rng, lo=self.omega)
        return CpcBatch(d.windows[idx], d.earnings[idx], d.futures[pos_src, :self.K],
                        self.pool_std[rows, minutes], rows, minutes)


# -- records ------------------------------------------------------------------

@dataclass
class TrainRecord:
    epoch: int
    loss: float
    loss_k: np.ndarray
    cos_k: np.ndarray
    val_loss: float
    wall_ms: float
    seed: int
    extra: dict = field(default_factory=dict)


def write_train_log(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "k", "loss", "cosine_sim", "wall_ms"])
        for r in records:
            for k, (lk, ck) in enumerate(zip(r.loss_k, r.cos_k), 1):
                w.writerow([r.epoch, k, f"{lk:.6f}", f"{ck:.6f}", f"{r.wall_ms:.1f}"])


def equilibrium(values, last: int = 3) -> float:
    """Mean of the final ``last`` epochs."""
    values = list(values)
    return float(np.mean(values[-last:]))


# -- pre-training ---------------------------------------------------------------

@dataclass
class PretrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 2e-3
    n_neg: int = 20
    val_fraction: float = 0.1
    ae_weight: float = 1.0
    ae_weight_decay: float = 1e-5
    shuffle_positives: bool = False
    divergence_margin: float = 5.0
    divergence_patience: int = 3
    max_batches: int | None = None   # per epoch


@dataclass
class PretrainResult:
    params: object
    records: list
    best_epoch: int
    best_val: float


def _check_finite(value: float, history):
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite training loss after {len(history)} epoch(s)", history=history)


def pretrain(data: CpcData, params, cfg: ModelConfig, tcfg: PretrainConfig, seed: int = 0,
             progress=None) -> PretrainResult:
    """Joint Adam optimisation of enc, ar, ae and W_k on InfoNCE.

    The earnings decoder's reconstruction error is added with weight
    ``ae_weight``.  A 10% validation split selects the returned weights.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    n = len(data)
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * tcfg.val_fraction))) if n > 1 else 0
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    names = params.names(["enc", "ar", "ae"] + [f"wk.{k}" for k in range(1, cfg.K + 1)])
    opt = Adam(params, names, lr=tcfg.lr, weight_decay={"ae": tcfg.ae_weight_decay})
    ceiling = math.log(tcfg.n_neg + 1) + tcfg.divergence_margin
    records, history = [], []
    over = 0
    best = (math.inf, -1, None)
    val_rng_seed = [seed, 32]
    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        erng = np.random.default_rng(np.random.SeedSequence([seed, 33, epoch]))
        order = erng.permutation(train_idx)
        batches = [order[i:i + tcfg.batch_size] for i in range(0, len(order), tcfg.batch_size)]
        if tcfg.max_batches:
            batches = batches[:tcfg.max_batches]
        sums, sum_k, sum_c, count = 0.0, 0.0, 0.0, 0
        for bidx in batches:
            batch = data.batch(bidx, erng, tcfg.n_neg, tcfg.shuffle_positives)
            opt.zero_grad()
            loss, per_k, cos = infonce_loss(batch, params, cfg)
            total = loss
            if tcfg.ae_weight:
                _, rec = reconstruct_earnings(encode_earnings(batch.earnings, params), batch.earnings, params)
                total = loss + rec * tcfg.ae_weight
            _check_finite(total.item(), history)
            total.backward()
            opt.step()
            w = len(bidx)
            sums += loss.item() * w
            sum_k = sum_k + per_k.data.astype(np.float64) * w
            sum_c = sum_c + cos * w
            count += w
        train_loss = sums / count
        history.append(train_loss)
        val_loss = evaluate_infonce(data, val_idx, params, cfg, tcfg, val_rng_seed) if n_val else train_loss
        _check_finite(val_loss, history)
        wall = (time.perf_counter() - t0) * 1000.0
        rec = TrainRecord(epoch, train_loss, sum_k / count, sum_c / count, val_loss, wall, seed)
        records.append(rec)
        if progress:
            progress(rec)
        if val_loss < best[0]:
            best = (val_loss, epoch, params.snapshot())
        over = over + 1 if train_loss > ceiling else 0
        if over >= tcfg.divergence_patience:
            raise DivergenceError(
                f"InfoNCE stayed above ln(N+1)+{tcfg.divergence_margin:g} = {ceiling:.3f} for "
                f"{over} consecutive epochs (last {train_loss:.3f})", history=history)
    if best[2] is not None:
        params.load_snapshot(best[2])
    return PretrainResult(params, records, best[1], best[0])


def evaluate_infonce(data: CpcData, idx, params, cfg: ModelConfig, tcfg: PretrainConfig, rng_key,
                     batch_size: int = 256):
    """Mean InfoNCE on ``idx`` with negatives drawn from a fixed stream."""
    rng = np.random.default_rng(np.random.SeedSequence(list(rng_key)))
    tot, cnt = 0.0, 0
    with no_grad():
        for i in range(0, len(idx), batch_size):
            b = idx[i:i + batch_size]
            loss, _, _ = infonce_loss(data.batch(b, rng, tcfg.n_neg, tcfg.shuffle_positives), params, cfg)
            tot += loss.item() * len(b)
            cnt += len(b)
    return tot / cnt


def infonce_profile(data: CpcData, idx, params, cfg: ModelConfig, n_neg: int = 20, seed: int = 0,
                    batch_size: int = 256):
    """Per-step InfoNCE loss and cosine similarity on ``idx`` (no training)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 34]))
    sk, sc, cnt = 0.0, 0.0, 0
    with no_grad():
        for i in range(0, len(idx), batch_size):
            b = idx[i:i + batch_size]
            _, per_k, cos = infonce_loss(data.batch(b, rng, n_neg), params, cfg)
            sk = sk + per_k.data.astype(np.float64) * len(b)
            sc = sc + cos * len(b)
            cnt += len(b)
    return sk / cnt, sc / cnt


# -- supervised training and fine-tuning -------------------------------------------

@dataclass
class FinetuneConfig:
    epochs: int = 10
    frozen_epochs: int = 30
    batch_size: int = 64
    lr: float = 2e-4
    frozen_lr: float = 2e-3
    ae_weight_decay: float = 1e-5
    return_scale: float = 1e3        # regression target scaling


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray


def evaluate(params, cfg: ModelConfig, data: Prepared, batch_size: int = 512, use_earnings: bool = True,
             eps_hold: float = 2e-4) -> EvalResult:
    preds = []
    with no_grad():
        for i in range(0, len(data), batch_size):
            sl = slice(i, i + batch_size)
            c = context(data.windows[sl], data.earnings[sl] if use_earnings else None, params, cfg)
            preds.append(_predict(classify_movement(c, params), cfg, eps_hold))
    return _score(np.concatenate(preds) if preds else np.zeros(0, int), data.labels, cfg.n_classes)


def _predict(out, cfg: ModelConfig, eps_hold: float):
    if cfg.regression:
        return label_returns(np.asarray(out.data)[:, 0] / FinetuneConfig.return_scale, eps_hold)
    return predict(out)


def _score(pred, labels, n_classes) -> EvalResult:
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    acc = float((pred == labels).mean()) if len(labels) else float("nan")
    return EvalResult(acc, conf, pred)


def _head_loss(out, labels, returns, cfg: ModelConfig, fcfg: FinetuneConfig):
    if cfg.regression:
        return mse(out, (returns * fcfg.return_scale).reshape(-1, 1))
    return cross_entropy(out, labels)


def train_classifier(params, cfg: ModelConfig, train: Prepared, names, fcfg: FinetuneConfig, seed: int,
                     epochs: int | None = None, lr: float | None = None, use_earnings: bool = True):
    """End-to-end cross-entropy training of ``names`` on ``train``."""
    opt = Adam(params, names, lr=fcfg.lr if lr is None else lr, weight_decay={"ae": fcfg.ae_weight_decay})
    epochs = fcfg.epochs if epochs is None else epochs
    history = []
    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 41, epoch]))
        order = rng.permutation(len(train))
        tot = 0.0
        for i in range(0, len(order), fcfg.batch_size):
            b = order[i:i + fcfg.batch_size]
            opt.zero_grad()
            c = context(train.windows[b], train.earnings[b] if use_earnings else None, params, cfg)
            loss = _head_loss(classify_movement(c, params), train.labels[b], train.returns[b], cfg, fcfg)
            if not math.isfinite(loss.item()):
                raise DivergenceError(f"non-finite fine-tune loss in epoch {epoch}", history=history)
            loss.backward()
            opt.step()
            tot += loss.item() * len(b)
        history.append(tot / max(1, len(train)))
    return history


def cached_price_contexts(params, cfg: ModelConfig, data: Prepared, batch_size: int = 512) -> np.ndarray:
    """``c_s`` for every sample, computed once under ``no_grad``."""
    out = []
    with no_grad():
        for i in range(0, len(data), batch_size):
            out.append(price_context(data.windows[i:i + batch_size], params, cfg).data)
    return np.concatenate(out) if out else np.zeros((0, cfg.d), dtype=params.dtype)


def _cached_head_input(c_s: np.ndarray, earnings: np.ndarray, params, cfg: ModelConfig):
    if cfg.head_input == "price_only":
        return Tensor(c_s)
    if cfg.head_input == "concat_raw":
        return Tensor(np.concatenate([c_s, earnings], axis=-1))
    return fuse_context(Tensor(c_s), encode_earnings(earnings, params))


def train_on_cached(params, cfg: ModelConfig, c_s: np.ndarray, train: Prepared, names, fcfg: FinetuneConfig,
                    seed: int):
    """Train ``names`` (head, optionally the earnings encoder) on cached price contexts."""
    opt = Adam(params, names, lr=fcfg.frozen_lr, weight_decay={"ae": fcfg.ae_weight_decay})
    history = []
    for epoch in range(1, fcfg.frozen_epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 42, epoch]))
        order = rng.permutation(len(train))
        tot = 0.0
        for i in range(0, len(order), fcfg.batch_size):
            b = order[i:i + fcfg.batch_size]
            opt.zero_grad()
            out = classify_movement(_cached_head_input(c_s[b], train.earnings[b], params, cfg), params)
            loss = _head_loss(out, train.labels[b], train.returns[b], cfg, fcfg)
            loss.backward()
            opt.step()
            tot += loss.item() * len(b)
        history.append(tot / max(1, len(train)))
    return history


def evaluate_cached(params, cfg: ModelConfig, c_s: np.ndarray, data: Prepared, eps_hold: float = 2e-4) -> EvalResult:
    if len(data) == 0:
        return _score(np.zeros(0, int), data.labels, cfg.n_classes)
    with no_grad():
        out = classify_movement(_cached_head_input(c_s, data.earnings, params, cfg), params)
    return _score(_predict(out, cfg, eps_hold), data.labels, cfg.n_classes)


@dataclass
class FinetuneResult:
    params: object
    test: EvalResult
    history: list


def finetune(pretrained, cfg: ModelConfig, train: Prepared, test: Prepared, mode: str = "unfrozen",
             fcfg: FinetuneConfig | None = None, seed: int = 0, reset_head: bool = True,
             frozen_parts=FROZEN_PARTS) -> FinetuneResult:
    """Attach a fresh head and train it (frozen) or everything but W_k (unfrozen).

    In frozen mode only parameters outside ``frozen_parts`` among ``ae``
    and ``head`` learn.  ``pretrained`` is left untouched; the tuned copy
    is returned.
    """
    fcfg = fcfg or FinetuneConfig()
    if mode not in ("frozen", "unfrozen"):
        raise ContractViolation(f"fine-tune mode must be 'frozen' or 'unfrozen', got {mode!r}")
    params = pretrained.clone()
    if reset_head or "head.w" not in params:
        add_head(params, cfg, seed)
    if mode == "frozen":
        before = checkpoint_bytes(params, frozen_parts)
        params.freeze(frozen_parts)
        cs_train = cached_price_contexts(params, cfg, train)
        trainable = params.trainable_names(["ae", "head"])
        history = train_on_cached(params, cfg, cs_train, train, trainable, fcfg, seed)
        if checkpoint_bytes(params, frozen_parts) != before:
            raise ContractViolation("frozen encoder weights changed during fine-tuning")
        result = evaluate_cached(params, cfg, cached_price_contexts(params, cfg, test), test)
        params.unfreeze(frozen_parts)
        return FinetuneResult(params, result, history)
    names = params.names(list(FROZEN_PARTS) + ["head"])
    history = train_classifier(params, cfg, train, names, fcfg, seed)
    return FinetuneResult(params, evaluate(params, cfg, test), history)
