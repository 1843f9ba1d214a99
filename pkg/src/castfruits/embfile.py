"""Binary embedding file format.

Layout: magic ``EMB1`` (4 bytes), dimension as u32 little-endian, count as
u64 little-endian, then count*dimension float32 little-endian values in
row-major order. Readers validate the magic and that the file size matches
the header exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIQ")


class EmbeddingFileError(ValueError):
    pass


def write_embeddings(path, matrix: np.ndarray) -> None:
    mat = np.ascontiguousarray(np.asarray(matrix, dtype=np.float32))
    if mat.ndim != 2:
        raise EmbeddingFileError(f"expected (count, dim) matrix, got shape {mat.shape}")
    count, dim = mat.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, count))
        fh.write(mat.astype("<f4", copy=False).tobytes())


def read_embeddings(path) -> np.ndarray:
    path = Path(path)
    size = path.stat().st_size
    if size < _HEADER.size:
        raise EmbeddingFileError(f"{path}: truncated header ({size} bytes)")
    with open(path, "rb") as fh:
        magic, dim, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC:
            raise EmbeddingFileError(f"{path}: bad magic {magic!r}")
        expected = _HEADER.size + 4 * dim * count
        if size != expected:
            raise EmbeddingFileError(
                f"{path}: size {size} does not match header (dim={dim}, count={count}, expected {expected})"
            )
        data = np.frombuffer(fh.read(), dtype="<f4")
    return data.reshape(count, dim).astype(np.float32, copy=True)
