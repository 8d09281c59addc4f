"""Writer for the embedding-store byte format the forecaster consumes.

Implemented independently from the documented layout (magic "TCMA",
u16 version, u32 embed_dim / num_variables / num_windows, u16 dtype
tag, window-major float32 payload, BLAKE2b-8 payload digest, all
little-endian); the forecaster's `inspect-store` command is the
compatibility oracle.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MAGIC = b"TCMA"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHIIIH")


def write_store(path: str, embeddings: np.ndarray) -> None:
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"need (windows, variables, dim), got {arr.shape}")
    windows, n_vars, dim = arr.shape
    payload = arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, n_vars, windows, DTYPE_F32))
        fh.write(payload)
        fh.write(hashlib.blake2b(payload, digest_size=8).digest())


def read_store(path: str) -> np.ndarray:
    """Validated read-back, used for self-checks after writing."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, dim, n_vars, windows, dtype = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION or dtype != DTYPE_F32:
        raise ValueError(f"{path}: not a supported store file")
    payload = raw[_HEADER.size:-8]
    if hashlib.blake2b(payload, digest_size=8).digest() != raw[-8:]:
        raise ValueError(f"{path}: payload digest mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(windows, n_vars, dim)
