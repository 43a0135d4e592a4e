"""CET network: price encoder, causal Transformer, earnings autoencoder, fusion, scorer, head."""

from __future__ import annotations

import math
import struct
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ConfigError, ContractViolation, NumericError, ShapeError
from .numerics import (
    ParamStore,
    Tensor,
    add_constant,
    concat,
    gelu,
    getitem,
    layer_norm,
    linear,
    matmul,
    mse,
    softmax,
    tanh,
)
from .preprocess import EARNINGS_DIM, PriceWindow

HEAD_INPUTS = ("fused", "concat_raw", "price_only")


@dataclass
class ModelConfig:
    d: int = 128
    omega: int = 50
    upsilon: int = 2
    earnings_dim: int = EARNINGS_DIM
    transformer_layers: int = 2
    heads: int = 4
    ff_dim: int = 256
    K: int = 5
    n_classes: int = 3
    enc_hidden: int = 128
    layer_norm: bool = True
    max_len: int = 390
    head_input: str = "fused"      # fused | concat_raw | price_only
    regression: bool = False       # 1-output return head instead of 3 classes

    def validate(self):
        if self.d % self.heads:
            raise ConfigError(f"heads={self.heads} must divide d={self.d}")
        if self.omega > self.max_len:
            raise ConfigError(f"omega={self.omega} exceeds max_len={self.max_len}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.head_input not in HEAD_INPUTS:
            raise ConfigError(f"head_input must be one of {HEAD_INPUTS}, got {self.head_input!r}")
        return self

    @property
    def head_dim(self) -> int:
        return self.d + self.earnings_dim if self.head_input == "concat_raw" else self.d

    @property
    def n_outputs(self) -> int:
        return 1 if self.regression else self.n_classes

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# Smaller network for single-core acceptance runs.
DESK_PRESET = dict(d=32, transformer_layers=1, heads=4, ff_dim=64, enc_hidden=32)


def desk_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(**DESK_PRESET), **overrides)


# -- parameters -------------------------------------------------------------

def _dense(rng, fan_in, fan_out):
    return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32, parts=("enc", "ar", "ae", "wk", "head")) -> ParamStore:
    """Fresh weights; each part draws from its own seeded stream."""
    cfg.validate()
    ps = ParamStore(dtype)
    d = cfg.d

    def rng(tag):
        return np.random.default_rng(np.random.SeedSequence([seed, tag]))

    if "enc" in parts:
        r = rng(1)
        ps.add("enc.w1", _dense(r, cfg.upsilon, cfg.enc_hidden))
        ps.add("enc.b1", np.zeros(cfg.enc_hidden))
        ps.add("enc.w2", _dense(r, cfg.enc_hidden, d))
        ps.add("enc.b2", np.zeros(d))
    if "ar" in parts:
        r = rng(2)
        for layer in range(cfg.transformer_layers):
            p = f"ar.{layer}"
            if cfg.layer_norm:
                ps.add(f"{p}.ln1.g", np.ones(d))
                ps.add(f"{p}.ln1.b", np.zeros(d))
            for m in ("q", "k", "v", "o"):
                ps.add(f"{p}.w{m}", _dense(r, d, d))
                ps.add(f"{p}.b{m}", np.zeros(d))
            if cfg.layer_norm:
                ps.add(f"{p}.ln2.g", np.ones(d))
                ps.add(f"{p}.ln2.b", np.zeros(d))
            ps.add(f"{p}.ff1.w", _dense(r, d, cfg.ff_dim))
            ps.add(f"{p}.ff1.b", np.zeros(cfg.ff_dim))
            ps.add(f"{p}.ff2.w", _dense(r, cfg.ff_dim, d))
            ps.add(f"{p}.ff2.b", np.zeros(d))
        if cfg.layer_norm:
            ps.add("ar.lnf.g", np.ones(d))
            ps.add("ar.lnf.b", np.zeros(d))
    if "ae" in parts:
        r = rng(3)
        ps.add("ae.enc.w", _dense(r, cfg.earnings_dim, d))
        ps.add("ae.enc.b", np.zeros(d))
        ps.add("ae.dec.w", _dense(r, d, cfg.earnings_dim))
        ps.add("ae.dec.b", np.zeros(cfg.earnings_dim))
    if "wk" in parts:
        r = rng(4)
        for k in range(1, cfg.K + 1):
            ps.add(f"wk.{k}", r.normal(0.0, 1.0 / d, size=(d, d)))
    if "head" in parts:
        add_head(ps, cfg, seed)
    ps.meta.update({"model": "cet", "config": config_to_str(cfg)})
    return ps


def add_head(ps: ParamStore, cfg: ModelConfig, seed: int = 0, prefix: str = "head"):
    """(Re)create a classifier head learnt from scratch."""
    r = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    for n in (f"{prefix}.w", f"{prefix}.b"):
        if n in ps:
            ps.remove(n)
    ps.add(f"{prefix}.w", _dense(r, cfg.head_dim, cfg.n_outputs))
    ps.add(f"{prefix}.b", np.zeros(cfg.n_outputs))


def config_to_str(cfg: ModelConfig) -> str:
    return ";".join(f"{k}={v}" for k, v in asdict(cfg).items())


def config_from_str(text: str) -> ModelConfig:
    base = ModelConfig()
    kw = {}
    for part in filter(None, text.split(";")):
        k, v = part.split("=", 1)
        cur = getattr(base, k)
        kw[k] = (v == "True") if isinstance(cur, bool) else type(cur)(v)
    return ModelConfig(**kw)


# -- components ---------------------------------------------------------------

def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, PriceWindow):
        if not x.standardized:
            raise ContractViolation("encode_price needs a standardized, denoised window")
        x = x.values[None]
    return Tensor(np.asarray(x, dtype=dtype))


def encode_price(x, params: ParamStore) -> Tensor:
    """Per-minute MLP ``upsilon -> hidden (tanh) -> d`` with a linear output."""
    x = _as_tensor(x, params.dtype)
    h = tanh(linear(x, params["enc.w1"], params["enc.b1"]))
    return linear(h, params["enc.w2"], params["enc.b2"])


_POS_CACHE: dict = {}


def positional_table(length: int, d: int) -> np.ndarray:
    """Sinusoidal table: even dims ``sin(p / 10000^(i/d))``, odd dims the matching cosine."""
    key = (length, d)
    if key not in _POS_CACHE:
        pos = np.arange(length)[:, None]
        i = np.arange(0, d, 2)[None, :]
        ang = pos / np.power(10000.0, i / d)
        tab = np.zeros((length, d))
        tab[:, 0::2] = np.sin(ang)
        tab[:, 1::2] = np.cos(ang[:, : d // 2])
        _POS_CACHE[key] = tab
    return _POS_CACHE[key]


def positional_encode(z: Tensor, cfg: ModelConfig) -> Tensor:
    T = z.shape[-2]
    if T > cfg.max_len:
        raise ConfigError(f"sequence length {T} exceeds max_len {cfg.max_len}")
    return add_constant(z, positional_table(T, z.shape[-1]).astype(z.dtype))


def causal_mask(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), -np.inf), k=1)


def attention(x: Tensor, params: ParamStore, prefix: str, heads: int, causal: bool = True,
              keep: list | None = None) -> Tensor:
    B, T, d = x.shape
    dh = d // heads

    def split(t):
        return t.reshape(B, T, heads, dh).transpose(0, 2, 1, 3)

    q = split(linear(x, params[f"{prefix}.wq"], params[f"{prefix}.bq"]))
    k = split(linear(x, params[f"{prefix}.wk"], params[f"{prefix}.bk"]))
    v = split(linear(x, params[f"{prefix}.wv"], params[f"{prefix}.bv"]))
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    if np.isnan(scores.data).any():
        raise NumericError(f"{prefix}: NaN in attention logits")
    if causal:
        scores = add_constant(scores, causal_mask(T).astype(scores.dtype))
    attn = softmax(scores, axis=-1)
    if keep is not None:
        keep.append(attn.data)
    out = matmul(attn, v).transpose(0, 2, 1, 3).reshape(B, T, d)
    return linear(out, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def transformer_sequence(z: Tensor, params: ParamStore, cfg: ModelConfig, causal: bool = True,
                         keep: list | None = None) -> Tensor:
    """Pre-norm Transformer stack over ``(B, T, d)``; returns every position."""
    h = z
    for layer in range(cfg.transformer_layers):
        p = f"ar.{layer}"
        a_in = layer_norm(h, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"]) if cfg.layer_norm else h
        h = h + attention(a_in, params, p, cfg.heads, causal, keep)
        f_in = layer_norm(h, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"]) if cfg.layer_norm else h
        f = linear(gelu(linear(f_in, params[f"{p}.ff1.w"], params[f"{p}.ff1.b"])),
                   params[f"{p}.ff2.w"], params[f"{p}.ff2.b"])
        h = h + f
    if cfg.layer_norm:
        h = layer_norm(h, params["ar.lnf.g"], params["ar.lnf.b"])
    return h


def transformer_context(z: Tensor, params: ParamStore, cfg: ModelConfig, causal: bool = True,
                        keep: list | None = None) -> Tensor:
    """Stock context ``c_s``: the stack's output at the last position."""
    h = transformer_sequence(z, params, cfg, causal, keep)
    return getitem(h, (slice(None), -1))


def price_context(windows, params: ParamStore, cfg: ModelConfig) -> Tensor:
    z = positional_encode(encode_price(windows, params), cfg)
    return transformer_context(z, params, cfg)


def encode_earnings(e, params: ParamStore, prefix: str = "ae") -> Tensor:
    e = _as_tensor(e, params.dtype)
    w = params[f"{prefix}.enc.w"]
    if e.shape[-1] != w.shape[0]:
        raise ShapeError(f"earnings input has dimension {e.shape[-1]}, expected {w.shape[0]}")
    return tanh(linear(e, w, params[f"{prefix}.enc.b"]))


def reconstruct_earnings(c_e: Tensor, e, params: ParamStore, prefix: str = "ae"):
    """Decode ``c_e`` back to earnings space; returns ``(e', mse)``."""
    e_hat = linear(c_e, params[f"{prefix}.dec.w"], params[f"{prefix}.dec.b"])
    target = e.data if isinstance(e, Tensor) else np.asarray(e, dtype=e_hat.dtype)
    return e_hat, mse(e_hat, target)


def fuse_context(c_s: Tensor, c_e: Tensor) -> Tensor:
    if c_s.shape != c_e.shape:
        raise ShapeError(f"cannot fuse contexts of shapes {c_s.shape} and {c_e.shape}")
    return c_s + c_e


def log_score(z: Tensor, c: Tensor, w: Tensor) -> Tensor:
    """Log-domain LBL score ``z^T W c`` over matching leading axes.

    ``z`` is ``(B, M, d)``, ``c`` is ``(B, d)``; returns ``(B, M)``.
    """
    proj = linear(c, w.T)                    # W c, row-wise
    return matmul(z, proj.reshape(proj.shape[0], proj.shape[1], 1)).reshape(z.shape[0], z.shape[1])


def score_lbl(z_future, c, w_k) -> float:
    """Exp-domain score ``exp(z^T W_k c)``; raises on overflow."""
    z = np.asarray(getattr(z_future, "data", z_future), dtype=np.float64)
    cv = np.asarray(getattr(c, "data", c), dtype=np.float64)
    w = np.asarray(getattr(w_k, "data", w_k), dtype=np.float64)
    s = float(z @ w @ cv)
    if s > np.log(np.finfo(np.float64).max):
        raise NumericError(f"score_lbl: exp({s:.3g}) overflows")
    return math.exp(s)


def classify_movement(c: Tensor, params: ParamStore, prefix: str = "head") -> Tensor:
    return linear(c, params[f"{prefix}.w"], params[f"{prefix}.b"])


def predict(logits) -> np.ndarray:
    """Argmax with ties resolved toward the lowest class index."""
    return np.argmax(np.asarray(getattr(logits, "data", logits)), axis=-1)


def context(windows, earnings, params: ParamStore, cfg: ModelConfig, return_parts: bool = False):
    """Head input for a batch under ``cfg.head_input``."""
    c_s = price_context(windows, params, cfg)
    if cfg.head_input == "price_only":
        if earnings is not None:
            raise ContractViolation("a price-only model must not receive earnings inputs")
        return (c_s, c_s, None) if return_parts else c_s
    if earnings is None:
        raise ContractViolation(f"head_input={cfg.head_input!r} needs earnings inputs")
    if cfg.head_input == "concat_raw":
        e = _as_tensor(earnings, params.dtype)
        c = concat([c_s, e], axis=-1)
        return (c, c_s, None) if return_parts else c
    c_e = encode_earnings(earnings, params)
    c = fuse_context(c_s, c_e)
    return (c, c_s, c_e) if return_parts else c


# -- checkpoints --------------------------------------------------------------

MAGIC = b"CET1"
VERSION = 1


def save_checkpoint(params: ParamStore, path, meta: dict | None = None):
    """Binary checkpoint; a ``key = value`` metadata block trails the arrays."""
    buf = bytearray(MAGIC)
    names = params.names()
    buf += struct.pack("<II", VERSION, len(names))
    for n in names:
        arr = params[n].data
        raw = n.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    info = dict(params.meta)
    info.update(meta or {})
    text = "".join(f"{k} = {v}\n" for k, v in sorted(info.items())).encode("utf-8")
    buf += struct.pack("<I", len(text)) + text
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_checkpoint(path, dtype=np.float32) -> ParamStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ConfigError(f"{path}: not a CET checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    ps = ParamStore(dtype)
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        (rank,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        ps.add(name, arr.astype(dtype))
    if pos < len(data):
        (ln,) = struct.unpack_from("<I", data, pos)
        for line in data[pos + 4:pos + 4 + ln].decode("utf-8").splitlines():
            k, v = line.split(" = ", 1)
            ps.meta[k] = v
    return ps


def checkpoint_bytes(params: ParamStore, prefixes) -> bytes:
    """Serialized payload of the arrays under ``prefixes`` (for bitwise comparisons)."""
    return b"".join(np.ascontiguousarray(params[n].data, dtype="<f4").tobytes()
                    for n in params.names(prefixes))
