"""Binary store of last-token prompt embeddings, plus a deterministic
stub embedder so the forecaster runs without any language model.

File layout (all integers little-endian):

    bytes 0..3    magic "TCMA"
    bytes 4..5    format version, u16 (currently 1)
    bytes 6..9    embed_dim E, u32
    bytes 10..13  num_variables N, u32
    bytes 14..17  num_windows W, u32
    bytes 18..19  dtype tag, u16 (1 = float32)
    payload       W * N * E float32 values, window-major then variable-major
    trailer       8-byte BLAKE2b digest of the payload bytes

The vector for (window w, variable v) starts at byte
``20 + 4 * E * (w * N + v)``. The digest is validated on open, so any
single corrupted payload byte is detected.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .prompts import PromptRecord

MAGIC = b"TCMA"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHIIIH")
HEADER_SIZE = _HEADER.size  # 20
TRAILER_SIZE = 8


class StoreError(ValueError):
    """Malformed store file or out-of-range key."""


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=TRAILER_SIZE).digest()


def write_store(path: str, embeddings: np.ndarray) -> None:
    """Persist a W x N x E float32 matrix; same data writes same bytes."""
    arr = np.asarray(embeddings)
    if arr.ndim != 3:
        raise StoreError(f"embeddings must be 3-D (windows, variables, dim), "
                         f"got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    windows, n_vars, dim = arr.shape
    header = _HEADER.pack(MAGIC, VERSION, dim, n_vars, windows, DTYPE_F32)
    payload = arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(_digest(payload))


@dataclass(frozen=True)
class EmbedKey:
    window_id: int
    variable_id: int


class LastTokenStore:
    """Read side of the store; payload is checksum-validated on open."""

    def __init__(self, path: str):
        self.path = path
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) < HEADER_SIZE + TRAILER_SIZE:
            raise StoreError(f"{path}: truncated store file")
        magic, version, dim, n_vars, windows, dtype = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise StoreError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise StoreError(f"{path}: unsupported version {version}")
        if dtype != DTYPE_F32:
            raise StoreError(f"{path}: unsupported dtype tag {dtype}")
        expected = HEADER_SIZE + 4 * windows * n_vars * dim + TRAILER_SIZE
        if len(raw) != expected:
            raise StoreError(f"{path}: size {len(raw)} != expected {expected}")
        payload = raw[HEADER_SIZE:len(raw) - TRAILER_SIZE]
        if _digest(payload) != raw[len(raw) - TRAILER_SIZE:]:
            raise StoreError(f"{path}: payload checksum mismatch")
        self.embed_dim = dim
        self.num_variables = n_vars
        self.num_windows = windows
        self._flat = np.frombuffer(payload, dtype="<f4")

    def offset(self, key: EmbedKey) -> int:
        """Byte offset of the key's vector inside the file."""
        return HEADER_SIZE + 4 * self.embed_dim * (
            key.window_id * self.num_variables + key.variable_id)

    def vector(self, key: EmbedKey) -> np.ndarray:
        if not (0 <= key.window_id < self.num_windows):
            raise StoreError(f"window_id {key.window_id} out of range "
                             f"[0, {self.num_windows})")
        if not (0 <= key.variable_id < self.num_variables):
            raise StoreError(f"variable_id {key.variable_id} out of range "
                             f"[0, {self.num_variables})")
        start = (self.offset(key) - HEADER_SIZE) // 4
        return np.array(self._flat[start:start + self.embed_dim])

    def window(self, window_id: int) -> np.ndarray:
        """All variable vectors of one window, N x E."""
        first = self.vector(EmbedKey(window_id, 0))
        out = np.empty((self.num_variables, self.embed_dim), dtype=np.float32)
        out[0] = first
        for v in range(1, self.num_variables):
            out[v] = self.vector(EmbedKey(window_id, v))
        return out

    def matrix(self) -> np.ndarray:
        return self._flat.reshape(self.num_windows, self.num_variables,
                                  self.embed_dim).copy()


_FEATURE_SLOTS = 8


def _bounded(x: float) -> float:
    # Monotone squash into (-10, 10): distinct stats stay distinct.
    return 10.0 * math.tanh(x / 10.0)


def stub_embed(record: PromptRecord, embed_dim: int) -> np.ndarray:
    """Deterministic unit-variance embedding of a prompt's bytes.

    The first E-8 slots expand a BLAKE2b stream of the text into uniform
    values on (-sqrt(3), sqrt(3)); the final 8 carry bounded copies of
    (trend, mean, std, last value) so the vector holds usable signal.
    Identical text always maps to identical bytes on any platform.
    """
    if embed_dim < _FEATURE_SLOTS:
        raise ValueError(f"embed_dim must be >= {_FEATURE_SLOTS}")
    text = record.text.encode("utf-8")
    n_hash = embed_dim - _FEATURE_SLOTS
    words = []
    counter = 0
    while len(words) * 16 < n_hash:
        block = hashlib.blake2b(text + b"\x00" + counter.to_bytes(4, "little"),
                                digest_size=64).digest()
        words.append(np.frombuffer(block, dtype="<u4"))
        counter += 1
    if words:
        stream = np.concatenate(words)[:n_hash].astype(np.float64)
        uniform = (stream / 2.0 ** 32) * 2.0 - 1.0
        hashed = uniform * math.sqrt(3.0)
    else:
        hashed = np.empty(0)
    feats = [record.trend_value, record.mean, record.std, record.last]
    bounded = [_bounded(f) for f in feats]
    out = np.concatenate([hashed, bounded, bounded])
    return out.astype(np.float32)


def stub_embed_all(records: list[PromptRecord], num_windows: int,
                   n_variables: int, embed_dim: int) -> np.ndarray:
    """Stub-embed a window-major prompt stream into a W x N x E matrix."""
    if len(records) != num_windows * n_variables:
        raise StoreError(f"expected {num_windows * n_variables} prompt records, "
                         f"got {len(records)}")
    out = np.empty((num_windows, n_variables, embed_dim), dtype=np.float32)
    for r in records:
        out[r.window_id, r.variable_id] = stub_embed(r, embed_dim)
    return out


def store_filename(dataset: str, split: str, lookback: int, design: str) -> str:
    """One store per (dataset, split, lookback, design): cache invalidation
    happens by construction."""
    return f"{dataset}_{split}_T{lookback}_{design}.embstore"
