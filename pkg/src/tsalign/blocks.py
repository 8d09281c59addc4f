"""Pre-LN transformer building blocks over token-major matrices.

Inputs are ``tokens x dim``; tokens here are variables, so no positional
encoding is applied anywhere. Layer norm always precedes attention and
the feed-forward, and both sub-layers are residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .optim import ParamRegistry
from .tensor import Tensor


@dataclass(frozen=True)
class AttentionConfig:
    model_dim: int
    num_heads: int
    causal: bool = False

    def __post_init__(self):
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads


@dataclass
class AttentionParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def attention_params(reg: ParamRegistry, prefix: str, dim: int) -> AttentionParams:
    return AttentionParams(
        wq=reg.weight(f"{prefix}.wq", (dim, dim), fan_in=dim),
        bq=reg.bias(f"{prefix}.bq", (dim,)),
        wk=reg.weight(f"{prefix}.wk", (dim, dim), fan_in=dim),
        bk=reg.bias(f"{prefix}.bk", (dim,)),
        wv=reg.weight(f"{prefix}.wv", (dim, dim), fan_in=dim),
        bv=reg.bias(f"{prefix}.bv", (dim,)),
        wo=reg.weight(f"{prefix}.wo", (dim, dim), fan_in=dim),
        bo=reg.bias(f"{prefix}.bo", (dim,)),
    )


def _split_heads(x: Tensor, num_heads: int, head_dim: int) -> Tensor:
    tokens = x.shape[0]
    return T.transpose(T.reshape(x, (tokens, num_heads, head_dim)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    heads, tokens, head_dim = x.shape
    return T.reshape(T.transpose(x, (1, 0, 2)), (tokens, heads * head_dim))


def attend(q_tokens: Tensor, kv_tokens: Tensor, p: AttentionParams,
           cfg: AttentionConfig) -> Tensor:
    """softmax(QK^T / sqrt(head_dim)) V per head, merged and projected."""
    if q_tokens.shape[-1] != cfg.model_dim or kv_tokens.shape[-1] != cfg.model_dim:
        raise T.ShapeError(
            f"token dim must be {cfg.model_dim}, got {q_tokens.shape} / {kv_tokens.shape}")
    q = _split_heads(T.linear(q_tokens, p.wq, p.bq), cfg.num_heads, cfg.head_dim)
    k = _split_heads(T.linear(kv_tokens, p.wk, p.bk), cfg.num_heads, cfg.head_dim)
    v = _split_heads(T.linear(kv_tokens, p.wv, p.bv), cfg.num_heads, cfg.head_dim)
    scores = T.scaled_scores(q, T.transpose(k, (0, 2, 1)), cfg.head_dim)
    if cfg.causal:
        if q_tokens.shape[0] != kv_tokens.shape[0]:
            raise T.ShapeError("causal attention needs equal query/key token counts")
        scores = scores + Tensor(T.causal_mask(q_tokens.shape[0]))
    weights = T.softmax(scores, axis=-1)
    return T.linear(_merge_heads(T.matmul(weights, v)), p.wo, p.bo)


def attention_weights(q_tokens: Tensor, kv_tokens: Tensor, p: AttentionParams,
                      cfg: AttentionConfig) -> np.ndarray:
    """Raw per-head attention matrices (heads x a x b), for dumps and tests."""
    q = _split_heads(T.linear(q_tokens, p.wq, p.bq), cfg.num_heads, cfg.head_dim)
    k = _split_heads(T.linear(kv_tokens, p.wk, p.bk), cfg.num_heads, cfg.head_dim)
    scores = T.scaled_scores(q, T.transpose(k, (0, 2, 1)), cfg.head_dim)
    if cfg.causal:
        scores = scores + Tensor(T.causal_mask(q_tokens.shape[0]))
    return T.softmax(scores, axis=-1).data.copy()


def mhsa(x: Tensor, p: AttentionParams, cfg: AttentionConfig) -> Tensor:
    return attend(x, x, p, cfg)


def mhca(q_tokens: Tensor, kv_tokens: Tensor, p: AttentionParams,
         cfg: AttentionConfig) -> Tensor:
    if cfg.causal:
        raise ValueError("cross-attention does not take a causal mask")
    return attend(q_tokens, kv_tokens, p, cfg)


@dataclass
class EncoderBlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


def encoder_block_params(reg: ParamRegistry, prefix: str, dim: int,
                         ffn_dim: int) -> EncoderBlockParams:
    return EncoderBlockParams(
        ln1_g=reg.norm_scale(f"{prefix}.ln1.g", dim),
        ln1_b=reg.norm_shift(f"{prefix}.ln1.b", dim),
        attn=attention_params(reg, f"{prefix}.attn", dim),
        ln2_g=reg.norm_scale(f"{prefix}.ln2.g", dim),
        ln2_b=reg.norm_shift(f"{prefix}.ln2.b", dim),
        w1=reg.weight(f"{prefix}.ffn.w1", (dim, ffn_dim), fan_in=dim),
        b1=reg.bias(f"{prefix}.ffn.b1", (ffn_dim,)),
        w2=reg.weight(f"{prefix}.ffn.w2", (ffn_dim, dim), fan_in=ffn_dim),
        b2=reg.bias(f"{prefix}.ffn.b2", (dim,)),
    )


def ffn(x: Tensor, blk: EncoderBlockParams) -> Tensor:
    return T.linear(T.relu(T.linear(x, blk.w1, blk.b1)), blk.w2, blk.b2)


def encoder_layer(x: Tensor, blk: EncoderBlockParams, cfg: AttentionConfig) -> Tensor:
    a = mhsa(T.layer_norm(x, blk.ln1_g, blk.ln1_b), blk.attn, cfg) + x
    return ffn(T.layer_norm(a, blk.ln2_g, blk.ln2_b), blk) + a


@dataclass
class DecoderBlockParams:
    ln1_g: Tensor
    ln1_b: Tensor
    self_attn: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    cross_attn: AttentionParams


def decoder_block_params(reg: ParamRegistry, prefix: str, dim: int) -> DecoderBlockParams:
    return DecoderBlockParams(
        ln1_g=reg.norm_scale(f"{prefix}.ln1.g", dim),
        ln1_b=reg.norm_shift(f"{prefix}.ln1.b", dim),
        self_attn=attention_params(reg, f"{prefix}.self_attn", dim),
        ln2_g=reg.norm_scale(f"{prefix}.ln2.g", dim),
        ln2_b=reg.norm_shift(f"{prefix}.ln2.b", dim),
        cross_attn=attention_params(reg, f"{prefix}.cross_attn", dim),
    )


def decoder_layer(x: Tensor, context: Tensor, blk: DecoderBlockParams,
                  self_cfg: AttentionConfig, cross_cfg: AttentionConfig) -> Tensor:
    """Masked self-attention then cross-attention, both pre-LN residual."""
    a = mhsa(T.layer_norm(x, blk.ln1_g, blk.ln1_b), blk.self_attn, self_cfg) + x
    return mhca(T.layer_norm(a, blk.ln2_g, blk.ln2_b), context,
                blk.cross_attn, cross_cfg) + a
