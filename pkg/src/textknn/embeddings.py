"""Sentence embedding storage and cosine primitives.

File format (little-endian, bit-exact contract with the encoder bridge):
magic bytes "SEMB", u32 version=1, u64 N, u32 dim, then N*dim float32
row-major. Row index equals sentence_id. Rows are renormalized to unit
length on load regardless of what the producer wrote.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIQI")


@dataclass
class EmbeddingTable:
    """Unit-norm sentence vectors; row index = sentence_id."""

    vectors: np.ndarray
    normalized: bool = True

    @property
    def n(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def row(self, sentence_id: int) -> np.ndarray:
        return self.vectors[sentence_id]


def write_embeddings(path: str | Path, vectors: np.ndarray) -> None:
    """Write vectors in the embedding file format (atomically)."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {vectors.shape}")
    n, dim = vectors.shape
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, dim))
        fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load and validate an embedding file.

    Rows are renormalized to unit length; zero-norm rows are rejected
    because their direction is undefined.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, n, dim = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, not an embedding file")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        if dim < 1:
            raise ValueError(f"{path}: invalid dimension {dim}")
        payload = fh.read()
    expected = n * dim * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: expected {expected} data bytes for {n}x{dim} rows, found {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype="<f4").reshape(n, dim)
    vec64 = raw.astype(np.float64)
    norms = np.linalg.norm(vec64, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"{path}: zero-norm embedding row {int(zero[0])}")
    vectors = (vec64 / norms[:, None]).astype(np.float32)
    return EmbeddingTable(vectors=vectors, normalized=True)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1].

    Clamping absorbs float32 renormalization error (|dot| can exceed 1 by
    ~1e-7); it is monotone, so graph tie ordering is unaffected.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)))))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - cosine_similarity(a, b)
