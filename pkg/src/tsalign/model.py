"""The full forecaster: inverted embedding, variable-token encoders for
both modalities, channel-wise cross-modality alignment, temporal
decoding, and horizon projection.

Matrices on the model path are channel-major (C x N or M x N); the
attention blocks run token-major, so encode/decode transpose at their
edges. The prompt stream stays at its own width E until alignment
contracts the two streams over the variable axis.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import blocks, tensor as T
from .data import NormStats, revin_denormalize
from .optim import ParamRegistry
from .tensor import Tensor


@dataclass
class ModelConfig:
    num_variables: int
    lookback: int
    horizon: int
    ts_dim: int = 64
    embed_dim: int = 64
    layers_ts: int = 1
    layers_prompt: int = 1
    layers_dec: int = 1
    heads: int = 8
    ffn_ratio: int = 4
    l2_weight: float = 1e-5
    use_prompt_branch: bool = True
    prompt_projection: bool = True
    decoder_causal: bool = True

    def __post_init__(self):
        for name in ("num_variables", "lookback", "horizon", "ts_dim",
                     "embed_dim", "heads", "ffn_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("layers_ts", "layers_prompt", "layers_dec"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ts_dim % self.heads != 0:
            raise ValueError("ts_dim must be divisible by heads")
        if self.use_prompt_branch and self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")


class Forecaster:
    """All trainable state plus the forward pass, one window at a time."""

    def __init__(self, cfg: ModelConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        reg = ParamRegistry(self.seed)
        self.params = reg
        c, e = cfg.ts_dim, cfg.embed_dim

        self.w_e = reg.weight("embed.w", (c, cfg.lookback), fan_in=cfg.lookback)
        self.b_e = reg.bias("embed.b", (c,))

        self.ts_cfg = blocks.AttentionConfig(c, cfg.heads)
        self.ts_blocks = [
            blocks.encoder_block_params(reg, f"ts_encoder.{i}", c, c * cfg.ffn_ratio)
            for i in range(cfg.layers_ts)
        ]

        if cfg.use_prompt_branch:
            if cfg.prompt_projection:
                self.w_in = reg.weight("prompt_proj.w", (e, e), fan_in=e)
                self.b_in = reg.bias("prompt_proj.b", (e,))
            self.prompt_cfg = blocks.AttentionConfig(e, cfg.heads)
            self.prompt_blocks = [
                blocks.encoder_block_params(reg, f"prompt_encoder.{i}", e,
                                            e * cfg.ffn_ratio)
                for i in range(cfg.layers_prompt)
            ]
            self.w_q = reg.weight("align.psi_q.w", (c, c), fan_in=c)
            self.b_q = reg.bias("align.psi_q.b", (c,))
            self.w_k = reg.weight("align.psi_k.w", (e, e), fan_in=e)
            self.b_k = reg.bias("align.psi_k.b", (e,))
            self.w_v = reg.weight("align.psi_v.w", (e, e), fan_in=e)
            self.b_v = reg.bias("align.psi_v.b", (e,))
            self.w_c = reg.weight("align.omega.w", (c, c), fan_in=c)
            self.b_c = reg.bias("align.omega.b", (c,))

        self.dec_self_cfg = blocks.AttentionConfig(c, cfg.heads,
                                                   causal=cfg.decoder_causal)
        self.dec_cross_cfg = blocks.AttentionConfig(c, cfg.heads)
        self.dec_blocks = [
            blocks.decoder_block_params(reg, f"decoder.{i}", c)
            for i in range(cfg.layers_dec)
        ]

        self.w_p = reg.weight("project.w", (cfg.horizon, c), fan_in=c)
        self.b_p = reg.bias("project.b", (cfg.horizon,))

    # -- forward pieces (channel-major unless noted) --

    def inverted_embed(self, x_norm) -> Tensor:
        """T x N normalized lookback -> C x N; one shared map per variable."""
        x = x_norm if isinstance(x_norm, Tensor) else Tensor(x_norm)
        if x.shape[0] != self.cfg.lookback:
            raise T.ShapeError(f"lookback length {x.shape[0]} != "
                               f"{self.cfg.lookback}")
        bias = T.reshape(self.b_e, (self.cfg.ts_dim, 1))
        return T.matmul(self.w_e, x) + bias

    def ts_encode(self, h: Tensor) -> Tensor:
        x = T.transpose(h)  # N x C, variables as tokens
        for blk in self.ts_blocks:
            x = blocks.encoder_layer(x, blk, self.ts_cfg)
        return T.transpose(x)

    def prompt_encode(self, l_n) -> Tensor:
        """N x E frozen last-token embeddings -> N x E, trainable encoder."""
        x = l_n if isinstance(l_n, Tensor) else Tensor(l_n)
        if self.cfg.prompt_projection:
            x = T.linear(x, self.w_in, self.b_in)
        for blk in self.prompt_blocks:
            x = blocks.encoder_layer(x, blk, self.prompt_cfg)
        return x

    def align(self, h_bar: Tensor, l_bar: Tensor) -> Tensor:
        """Channel-wise retrieval: contract both streams over variables,
        softmax over the prompt channels, aggregate back, residual add."""
        c = self.cfg.ts_dim
        q = T.matmul(self.w_q, h_bar) + T.reshape(self.b_q, (c, 1))  # C x N
        k = T.linear(l_bar, self.w_k, self.b_k)                      # N x E
        v = T.linear(l_bar, self.w_v, self.b_v)                      # N x E
        sim = T.softmax(T.matmul(q, k), axis=-1)                     # C x E
        agg = T.matmul(sim, T.transpose(v))                          # C x N
        out = T.matmul(self.w_c, agg) + T.reshape(self.b_c, (c, 1))
        return out + h_bar

    def alignment_similarity(self, h_bar: Tensor, l_bar: Tensor) -> np.ndarray:
        """The C x E channel similarity matrix after softmax, for dumps."""
        c = self.cfg.ts_dim
        q = T.matmul(self.w_q, h_bar) + T.reshape(self.b_q, (c, 1))
        k = T.linear(l_bar, self.w_k, self.b_k)
        return T.softmax(T.matmul(q, k), axis=-1).data.copy()

    def decode(self, h_c: Tensor) -> Tensor:
        x = T.transpose(h_c)  # N x C
        context = x  # keys/values come from the aligned stream itself
        for blk in self.dec_blocks:
            x = blocks.decoder_layer(x, context, blk, self.dec_self_cfg,
                                     self.dec_cross_cfg)
        return T.transpose(x)

    def project(self, h_dec: Tensor) -> Tensor:
        """C x N -> M x N in normalized units."""
        bias = T.reshape(self.b_p, (self.cfg.horizon, 1))
        return T.matmul(self.w_p, h_dec) + bias

    def forward_normalized(self, x_norm, prompt_embed=None) -> Tensor:
        h_bar = self.ts_encode(self.inverted_embed(x_norm))
        if self.cfg.use_prompt_branch:
            if prompt_embed is None:
                raise ValueError("prompt embeddings required when the prompt "
                                 "branch is enabled")
            l_bar = self.prompt_encode(prompt_embed)
            h_c = self.align(h_bar, l_bar)
        else:
            h_c = h_bar
        return self.project(self.decode(h_c))

    def forecast(self, x_norm, stats: NormStats, prompt_embed=None) -> np.ndarray:
        """Denormalized M x N predictions using the window's own stats."""
        pred = self.forward_normalized(x_norm, prompt_embed)
        return revin_denormalize(pred.data.astype(np.float64), stats)

    # -- objective --

    def l2_penalty(self) -> Tensor:
        total = Tensor(np.float32(0.0))
        for _, w in self.params.weights():
            total = total + T.sum_all(w * w)
        return total

    def loss(self, pred_norm: Tensor, target_norm) -> tuple[Tensor, Tensor]:
        """(task, prediction) losses; task adds the weighted L2 penalty."""
        target = target_norm if isinstance(target_norm, Tensor) \
            else Tensor(target_norm)
        if pred_norm.shape != target.shape:
            raise T.ShapeError(f"prediction {pred_norm.shape} != target "
                               f"{target.shape}")
        diff = pred_norm - target
        pre = T.mean_all(diff * diff)
        task = pre + Tensor(np.float32(self.cfg.l2_weight)) * self.l2_penalty()
        return task, pre

    def count_params(self) -> int:
        return self.params.count()


# -- checkpoint serialization --

CKPT_MAGIC = b"TCKP"
CKPT_VERSION = 1
_CKPT_HEAD = struct.Struct("<4sHI")


def save_checkpoint(path: str, model: Forecaster,
                    arrays: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> None:
    """Write config + seed + named little-endian f32 payloads."""
    arrays = arrays if arrays is not None else model.params.state_arrays()
    names = model.params.names()
    meta = {
        "config": asdict(model.cfg),
        "seed": model.seed,
        "params": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
        "extra": extra or {},
    }
    head_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes()
                       for n in names)
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEAD.pack(CKPT_MAGIC, CKPT_VERSION, len(head_json)))
        fh.write(head_json)
        fh.write(payload)
        fh.write(hashlib.blake2b(payload, digest_size=8).digest())


def load_checkpoint(path: str) -> tuple[Forecaster, dict]:
    """Rebuild a Forecaster with stored weights; returns (model, extra)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CKPT_HEAD.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, head_len = _CKPT_HEAD.unpack_from(raw, 0)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise ValueError(f"{path}: not a version-{CKPT_VERSION} checkpoint")
    meta = json.loads(raw[_CKPT_HEAD.size:_CKPT_HEAD.size + head_len])
    payload = raw[_CKPT_HEAD.size + head_len:-8]
    if hashlib.blake2b(payload, digest_size=8).digest() != raw[-8:]:
        raise ValueError(f"{path}: checkpoint payload checksum mismatch")
    cfg = ModelConfig(**meta["config"])
    model = Forecaster(cfg, meta["seed"])
    arrays = {}
    offset = 0
    for entry in meta["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(
            payload, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
    if offset != len(payload):
        raise ValueError(f"{path}: payload size mismatch")
    model.params.load_state_arrays(arrays)
    return model, meta.get("extra", {})
