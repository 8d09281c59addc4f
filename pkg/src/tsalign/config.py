"""Flat key = value experiment configs.

Lines are ``key = value``; ``#`` starts a comment. Every training and
model default can be overridden, and a short hash of the resolved
config is embedded in all outputs for provenance.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import ModelConfig


@dataclass
class ExperimentConfig:
    dataset_csv: str = ""
    dataset_name: str = "dataset"
    frequency: str = "1h"
    split: str = "7:1:2"
    scale: bool = True
    drop_missing: bool = False

    lookback: int = 96
    horizon: int = 24
    prompt_design: str = "P5"
    embedder: str = "stub"          # "stub" or "store"
    store_dir: str = ""             # required when embedder = store

    ts_dim: int = 64
    embed_dim: int = 64
    heads: int = 8
    layers_ts: int = 1
    layers_prompt: int = 1
    layers_dec: int = 1
    ffn_ratio: int = 4
    use_prompt_branch: bool = True
    prompt_projection: bool = True
    decoder_causal: bool = True

    l2_weight: float = 1e-5
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    patience: int = 10
    weight_decay: float = 0.0

    seed: int = 7
    out_dir: str = "out"

    def model_config(self, n_variables: int) -> ModelConfig:
        return ModelConfig(
            num_variables=n_variables,
            lookback=self.lookback,
            horizon=self.horizon,
            ts_dim=self.ts_dim,
            embed_dim=self.embed_dim,
            layers_ts=self.layers_ts,
            layers_prompt=self.layers_prompt,
            layers_dec=self.layers_dec,
            heads=self.heads,
            ffn_ratio=self.ffn_ratio,
            l2_weight=self.l2_weight,
            use_prompt_branch=self.use_prompt_branch,
            prompt_projection=self.prompt_projection,
            decoder_causal=self.decoder_causal,
        )


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def _convert(raw: str, target_type: type):
    raw = raw.strip()
    if target_type is bool:
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def parse_config(path: str | Path) -> ExperimentConfig:
    defaults = ExperimentConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', "
                                 f"got {line.rstrip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _convert(raw, types[key])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}")
    return ExperimentConfig(**values)


def write_config(cfg: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in asdict(cfg).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            fh.write(f"{key} = {value}\n")


def config_hash(cfg: ExperimentConfig) -> str:
    canon = "\n".join(f"{k}={v}" for k, v in sorted(asdict(cfg).items()))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]
