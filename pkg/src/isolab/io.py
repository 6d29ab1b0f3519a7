"""Matrix serialization: plain CSV and a small binary format.

CSV: one matrix row per line, comma separators, '.' decimal point, no
header. Floats are written with repr-exact precision so a round trip is
lossless.

Binary: a 16-byte header followed by the payload.

    bytes 0..3   magic "ISOM"
    bytes 4..7   row count, little-endian u32
    bytes 8..11  column count, little-endian u32
    bytes 12..15 reserved, zero
    payload      rows*cols little-endian f64, row-major
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = [
    "save_matrix_csv",
    "load_matrix_csv",
    "save_matrix_bin",
    "load_matrix_bin",
    "MAGIC",
]

MAGIC = b"ISOM"
_HEADER = struct.Struct("<4sII4x")


def _validated(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
    return x


def save_matrix_csv(x, path) -> None:
    x = _validated(x)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        for row in x:
            f.write(",".join(f"{v:.17g}" for v in row))
            f.write("\n")


def load_matrix_csv(path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise ValueError(
                    f"{path}: line {lineno}: not a number: {bad!r}"
                ) from None
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return np.asarray(rows, dtype=np.float64)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def save_matrix_bin(x, path) -> None:
    x = _validated(x)
    rows, cols = x.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, rows, cols))
        f.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def load_matrix_bin(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = f.read(rows * cols * 8)
        if len(payload) != rows * cols * 8:
            raise ValueError(
                f"{path}: truncated payload, expected {rows * cols * 8} bytes, "
                f"got {len(payload)}"
            )
        extra = f.read(1)
        if extra:
            raise ValueError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(
        np.float64, copy=True
    )
