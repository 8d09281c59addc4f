"""Multivariate time series forecasting with prompt-embedding
cross-modality alignment: a variables-as-tokens encoder pair, channel
attention between the two streams, and a temporal decoder, trained on
windows with reversible per-window normalization."""

from .model import Forecaster, ModelConfig, load_checkpoint, save_checkpoint
from .optim import AdamW, ParamRegistry, adamw_step
from .tensor import Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "Forecaster",
    "ModelConfig",
    "ParamRegistry",
    "Tensor",
    "adamw_step",
    "backward",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
