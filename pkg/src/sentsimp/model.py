"""Encoder-decoder transformer and its four variant wirings.

A variant only changes two things: whether the encoder self-attends
bidirectionally (BERT-style) or causally (GPT-2-style), and which
full-scale vocabulary size the preset carries. The decoder is always
causal self-attention plus cross-attention over the encoder output.
Residual + post-layer-norm around every sublayer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Batch
from .tensor import Tensor

BIDIRECTIONAL = "bidirectional"
CAUSAL = "causal"

BERT_VOCAB = 30522
GPT2_VOCAB = 50257

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_heads: int
    n_layers: int
    d_ff: int
    vocab_size: int
    max_len: int = 80
    encoder_masking: str = BIDIRECTIONAL
    activation: str = "gelu"
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.max_len < 3:
            raise ValueError("max_len must be >= 3")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.encoder_masking not in (BIDIRECTIONAL, CAUSAL):
            raise ValueError(f"unknown encoder masking {self.encoder_masking!r}")
        if self.activation != "gelu":
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass(frozen=True)
class VariantSpec:
    name: str
    encoder_masking: str
    encoder_vocab_size: int
    decoder_vocab_size: int
    decoder_style: str = "causal+cross"


VARIANTS = {
    "bert": VariantSpec("bert", BIDIRECTIONAL, BERT_VOCAB, BERT_VOCAB),
    "gpt2": VariantSpec("gpt2", CAUSAL, GPT2_VOCAB, GPT2_VOCAB),
    "bert+gpt2": VariantSpec("bert+gpt2", BIDIRECTIONAL, BERT_VOCAB, GPT2_VOCAB),
    "gpt2+bert": VariantSpec("gpt2+bert", CAUSAL, GPT2_VOCAB, BERT_VOCAB),
}

_PAPER = dict(d_model=768, n_heads=12, n_layers=12, d_ff=3072, max_len=80, dropout_rate=0.1)
_TOY = dict(d_model=64, n_heads=2, n_layers=2, d_ff=128, max_len=80, dropout_rate=0.0)


def variant_config(name: str, scale: str, vocab_size: int | None = None) -> ModelConfig:
    """Preset hyperparameters for a named variant at paper or toy scale.

    Toy scale uses a corpus-built shared vocabulary, so vocab_size must be
    given; paper scale defaults to the variant's encoder-side preset.
    """
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    spec = VARIANTS[name]
    if scale == "paper":
        base = _PAPER
        vocab = vocab_size if vocab_size is not None else spec.encoder_vocab_size
    elif scale == "toy":
        base = _TOY
        if vocab_size is None:
            raise ValueError("toy scale needs a vocab_size built from the corpus")
        vocab = vocab_size
    else:
        raise ValueError(f"unknown scale {scale!r}; choose 'paper' or 'toy'")
    return ModelConfig(vocab_size=vocab, encoder_masking=spec.encoder_masking, **base)


class Model:
    """Named parameter tensors plus the config that shaped them."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor], no_decay: set[str]):
        self.config = config
        self.params = params
        self.no_decay = no_decay

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())


def _attn_param_names(prefix: str):
    for part in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
        yield f"{prefix}.{part}"


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every parameter, in creation order."""
    d, ff, v, L = config.d_model, config.d_ff, config.vocab_size, config.max_len
    shapes: dict[str, tuple[int, ...]] = {
        "enc.tok_emb": (v, d),
        "enc.pos_emb": (L, d),
        "dec.tok_emb": (v, d),
        "dec.pos_emb": (L, d),
    }

    def attn(prefix):
        for name in _attn_param_names(prefix):
            shapes[name] = (d, d) if name.split(".")[-1].startswith("w") else (d,)

    def ln(prefix):
        shapes[f"{prefix}.gain"] = (d,)
        shapes[f"{prefix}.bias"] = (d,)

    def ffn(prefix):
        shapes[f"{prefix}.w1"] = (d, ff)
        shapes[f"{prefix}.b1"] = (ff,)
        shapes[f"{prefix}.w2"] = (ff, d)
        shapes[f"{prefix}.b2"] = (d,)

    for i in range(config.n_layers):
        attn(f"enc.{i}.attn")
        ln(f"enc.{i}.ln1")
        ffn(f"enc.{i}.ff")
        ln(f"enc.{i}.ln2")
    for i in range(config.n_layers):
        attn(f"dec.{i}.self")
        ln(f"dec.{i}.ln1")
        attn(f"dec.{i}.cross")
        ln(f"dec.{i}.ln2")
        ffn(f"dec.{i}.ff")
        ln(f"dec.{i}.ln3")
    shapes["out.w"] = (d, v)
    shapes["out.b"] = (v,)
    return shapes


def init_model(config: ModelConfig, seed: int) -> Model:
    """Normal(0, 0.02^2) weights, layer-norm gains 1 / biases 0, all from one PRNG."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    no_decay: set[str] = set()
    for name, shape in param_shapes(config).items():
        if ".ln" in name:
            data = np.ones(shape) if name.endswith(".gain") else np.zeros(shape)
            no_decay.add(name)
        else:
            data = rng.normal(0.0, INIT_STD, size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return Model(config, params, no_decay)


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
    """Scaled dot-product attention over [B, h, L, d_h] tensors."""
    d_h = q.shape[-1]
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d_h))
    weights = T.masked_softmax(scores, mask)
    return T.matmul(weights, v)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, length, d = x.shape
    return T.transpose(T.reshape(x, (b, length, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, length, d_h = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, length, h * d_h))


def _mha(model: Model, prefix: str, x_q: Tensor, x_kv: Tensor, mask: np.ndarray) -> Tensor:
    p = model.params
    h = model.config.n_heads
    q = _split_heads(T.add(T.matmul(x_q, p[f"{prefix}.wq"]), p[f"{prefix}.bq"]), h)
    k = _split_heads(T.add(T.matmul(x_kv, p[f"{prefix}.wk"]), p[f"{prefix}.bk"]), h)
    v = _split_heads(T.add(T.matmul(x_kv, p[f"{prefix}.wv"]), p[f"{prefix}.bv"]), h)
    out = _merge_heads(attention(q, k, v, mask))
    return T.add(T.matmul(out, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])


def _ffn(model: Model, prefix: str, x: Tensor) -> Tensor:
    p = model.params
    hidden = T.gelu(T.add(T.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return T.add(T.matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _sublayer(model: Model, ln_prefix: str, x: Tensor, out: Tensor,
              train: bool, rng) -> Tensor:
    p = model.params
    out = T.dropout(out, model.config.dropout_rate, rng, train)
    return T.layer_norm(T.add(x, out), p[f"{ln_prefix}.gain"], p[f"{ln_prefix}.bias"])


def _self_mask(pad_mask: np.ndarray, causal: bool) -> np.ndarray:
    """[B, 1, L, L] key-validity mask from [B, L] padding, optionally causal."""
    b, length = pad_mask.shape
    mask = np.broadcast_to(pad_mask[:, None, None, :], (b, 1, length, length))
    if causal:
        tri = np.tril(np.ones((length, length), dtype=bool))
        mask = mask & tri[None, None, :, :]
    return mask


def _cross_mask(src_pad_mask: np.ndarray, tgt_len: int) -> np.ndarray:
    b, src_len = src_pad_mask.shape
    return np.broadcast_to(src_pad_mask[:, None, None, :], (b, 1, tgt_len, src_len))


def _embed(model: Model, side: str, ids: np.ndarray, train: bool, rng) -> Tensor:
    p = model.params
    tok = T.embedding(p[f"{side}.tok_emb"], ids)
    pos = T.embedding(p[f"{side}.pos_emb"], np.arange(ids.shape[1]))
    return T.dropout(T.add(tok, pos), model.config.dropout_rate, rng, train)


def encode_source(model: Model, src_ids: np.ndarray, src_pad_mask: np.ndarray,
                  train: bool = False, rng=None) -> Tensor:
    cfg = model.config
    if src_ids.shape[1] > cfg.max_len:
        raise ValueError(f"source length {src_ids.shape[1]} exceeds max_len {cfg.max_len}")
    x = _embed(model, "enc", src_ids, train, rng)
    mask = _self_mask(src_pad_mask, causal=cfg.encoder_masking == CAUSAL)
    for i in range(cfg.n_layers):
        x = _sublayer(model, f"enc.{i}.ln1", x, _mha(model, f"enc.{i}.attn", x, x, mask), train, rng)
        x = _sublayer(model, f"enc.{i}.ln2", x, _ffn(model, f"enc.{i}.ff", x), train, rng)
    return x


def decoder_logits(model: Model, enc_out: Tensor, src_pad_mask: np.ndarray,
                   tgt_in_ids: np.ndarray, tgt_pad_mask: np.ndarray,
                   train: bool = False, rng=None) -> Tensor:
    cfg = model.config
    if tgt_in_ids.shape[1] > cfg.max_len:
        raise ValueError(f"target length {tgt_in_ids.shape[1]} exceeds max_len {cfg.max_len}")
    x = _embed(model, "dec", tgt_in_ids, train, rng)
    self_mask = _self_mask(tgt_pad_mask, causal=True)
    cross_mask = _cross_mask(src_pad_mask, tgt_in_ids.shape[1])
    for i in range(cfg.n_layers):
        x = _sublayer(model, f"dec.{i}.ln1", x, _mha(model, f"dec.{i}.self", x, x, self_mask), train, rng)
        x = _sublayer(model, f"dec.{i}.ln2", x, _mha(model, f"dec.{i}.cross", x, enc_out, cross_mask), train, rng)
        x = _sublayer(model, f"dec.{i}.ln3", x, _ffn(model, f"dec.{i}.ff", x), train, rng)
    return T.add(T.matmul(x, model.params["out.w"]), model.params["out.b"])


def forward(model: Model, batch: Batch, train_mode: bool = False, rng=None) -> Tensor:
    """Logits [B, Lt, V] for a teacher-forced batch."""
    if train_mode and model.config.dropout_rate > 0.0 and rng is None:
        raise ValueError("train_mode with dropout needs an rng")
    enc_out = encode_source(model, batch.source_ids, batch.source_pad_mask, train_mode, rng)
    return decoder_logits(model, enc_out, batch.source_pad_mask,
                          batch.target_in_ids, batch.target_pad_mask, train_mode, rng)


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form parameter count for a config (used to cross-check init)."""
    d, ff, v, L, n = config.d_model, config.d_ff, config.vocab_size, config.max_len, config.n_layers
    attn = 4 * (d * d + d)
    ffn = d * ff + ff + ff * d + d
    ln = 2 * d
    enc_layer = attn + ffn + 2 * ln
    dec_layer = 2 * attn + ffn + 3 * ln
    emb = 2 * (v * d + L * d)
    return emb + n * enc_layer + n * dec_layer + d * v + v


def clone_params(model: Model) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.params.items()}


def load_params(model: Model, params: dict[str, np.ndarray]) -> None:
    for name, data in params.items():
        if model.params[name].data.shape != data.shape:
            raise ValueError(f"shape mismatch for parameter {name}")
        model.params[name].data = np.ascontiguousarray(data, dtype=np.float64)
