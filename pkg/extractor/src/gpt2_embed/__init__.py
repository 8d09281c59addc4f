"""Offline extraction of frozen GPT-2 last-token embeddings into the
binary store format the forecaster trains from."""

from .extract import (ExtractionJob, dump_last_token_attention, embed_texts,
                      extract, load_model, report_token_stats, weights_digest)
from .storefmt import read_store, write_store

__version__ = "0.1.0"

__all__ = [
    "ExtractionJob",
    "dump_last_token_attention",
    "embed_texts",
    "extract",
    "load_model",
    "read_store",
    "report_token_stats",
    "weights_digest",
    "write_store",
    "__version__",
]
