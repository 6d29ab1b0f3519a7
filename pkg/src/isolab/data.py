"""Dataset loading, synthetic batches, and Gram rank audits.

Batches are feature-major: data is (features x samples), one sample per
column, matching how the network consumes them. Real data arrives either
as IDX binary files (the classic image-dataset format, big-endian,
optionally gzip-compressed) or as headerless CSV with the label in the
first column.

The rank audit samples n columns without replacement, many times, and
reports the numerical Gram rank and the mean pairwise cosine similarity
per trial. Near-duplicate samples drag the rank below n, which is exactly
the degeneracy that makes gradients blow up downstream.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .rng import as_generator
from .spectral import RANK_RTOL, sample_haar_orthogonal

__all__ = [
    "Batch",
    "RankAudit",
    "load_idx",
    "load_csv_batch",
    "synth_batch",
    "rank_audit",
    "write_audit_csv",
    "project_to_width",
]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Batch:
    """A labeled sample matrix: data (features x n), integer labels (n)."""

    data: np.ndarray
    labels: np.ndarray
    source: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.data.ndim != 2:
            raise ValueError("batch data must be 2-d")
        if self.data.shape[1] != self.labels.shape[0]:
            raise ValueError(
                f"label count {self.labels.shape[0]} does not match "
                f"{self.data.shape[1]} columns"
            )

    @property
    def features(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RankAudit:
    """One audit trial: Gram rank and mean cosine of a sampled sub-batch."""

    dataset: str
    n: int
    trial: int
    rank: int
    mean_cosine: float


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        rest = f.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_idx(images_path, labels_path) -> Batch:
    """Load an IDX image/label file pair; pixels scaled to [0, 1].

    Validates the magic numbers, the dimension headers, and the payload
    length, and that both files agree on the sample count.
    """
    img = _read_bytes(images_path)
    if len(img) < 16:
        raise ValueError(f"{images_path}: truncated header")
    magic, n, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise ValueError(f"{images_path}: bad magic 0x{magic:08x}")
    expected = 16 + n * rows * cols
    if len(img) < expected:
        raise ValueError(
            f"{images_path}: truncated payload, expected {expected} bytes, "
            f"got {len(img)}"
        )
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    data = pixels.astype(np.float64).reshape(n, rows * cols).T / 255.0

    lab = _read_bytes(labels_path)
    if len(lab) < 8:
        raise ValueError(f"{labels_path}: truncated header")
    lmagic, ln = struct.unpack(">II", lab[:8])
    if lmagic != _IDX_LABELS_MAGIC:
        raise ValueError(f"{labels_path}: bad magic 0x{lmagic:08x}")
    if len(lab) < 8 + ln:
        raise ValueError(f"{labels_path}: truncated payload")
    if ln != n:
        raise ValueError(
            f"label count {ln} does not match image count {n}"
        )
    labels = np.frombuffer(lab, dtype=np.uint8, count=ln, offset=8).astype(np.int64)
    return Batch(data=data, labels=labels, source=str(images_path))


def load_csv_batch(path) -> Batch:
    """Headerless CSV, label first then features, one sample per line."""
    labels: list[int] = []
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
                if width < 2:
                    raise ValueError(
                        f"{path}: line {lineno}: need a label plus at least "
                        f"one feature"
                    )
            elif len(cells) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} fields, "
                    f"got {len(cells)}"
                )
            parsed = []
            for col, cell in enumerate(cells, 1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}, column {col}: not a number: "
                        f"{cell!r}"
                    ) from None
            labels.append(int(parsed[0]))
            rows.append(parsed[1:])
    if not rows:
        raise ValueError(f"{path}: empty file")
    data = np.asarray(rows, dtype=np.float64).T
    return Batch(data=data, labels=np.asarray(labels), source=str(path))


def synth_batch(kind: str, d: int, n: int, rng, copies: int = 2) -> Batch:
    """Synthesize a controlled batch of n columns in d dimensions.

    gaussian:        i.i.d. standard normal entries
    orthogonal_cols: n orthonormal columns (requires n <= d); Gram rank n
    duplicated:      one column repeated `copies` times among otherwise
                     fresh Gaussian columns, forcing Gram rank <= n - (copies - 1)
    """
    rng = as_generator(rng)
    if d < 1 or n < 1:
        raise ValueError("d and n must be >= 1")
    if kind == "gaussian":
        data = rng.standard_normal((d, n))
    elif kind == "orthogonal_cols":
        if n > d:
            raise ValueError(f"orthogonal_cols needs n <= d, got n={n} > d={d}")
        data = sample_haar_orthogonal(d, rng)[:, :n].copy()
    elif kind == "duplicated":
        if copies < 2:
            raise ValueError("duplicated batch needs copies >= 2")
        if copies > n:
            raise ValueError(f"copies={copies} exceeds batch size n={n}")
        base = rng.standard_normal((d, n - copies + 1))
        data = np.concatenate(
            [np.repeat(base[:, :1], copies, axis=1), base[:, 1:]], axis=1
        )
    else:
        raise ValueError(f"unknown batch kind {kind!r}")
    return Batch(
        data=data,
        labels=np.zeros(n, dtype=np.int64),
        source=f"synthetic({kind}, d={d}, n={n})",
    )


def rank_audit(batch: Batch, trials: int, n: int, rng) -> list[RankAudit]:
    """Audit the Gram rank of random n-column sub-batches.

    Per trial: draw n distinct columns, report the numerical rank of the
    sub-batch (singular values above 1e-12 of the largest, the same
    threshold the isometry gap uses) and the mean cosine similarity over
    all distinct column pairs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > batch.count:
        raise ValueError(
            f"audit batch size {n} exceeds dataset size {batch.count}"
        )
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = as_generator(rng)
    kern = kernels()
    audits: list[RankAudit] = []
    # Chunked so a 100-trial audit of wide image data stays within a few
    # tens of MB of staging memory.
    chunk = max(1, min(trials, 16))
    trial = 0
    while trial < trials:
        m = min(chunk, trials - trial)
        stack = np.empty((m, batch.features, n))
        for t in range(m):
            idx = rng.choice(batch.count, size=n, replace=False)
            stack[t] = batch.data[:, idx]
        stats = kern.rank_cos_values(stack, RANK_RTOL)
        for t in range(m):
            audits.append(
                RankAudit(
                    dataset=batch.source, n=n, trial=trial + t + 1,
                    rank=int(stats[t, 0]), mean_cosine=float(stats[t, 1]),
                )
            )
        trial += m
    return audits


def write_audit_csv(audits, path) -> None:
    """Write audit rows as CSV: dataset, n, trial, rank, mean_cosine."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("dataset,n,trial,rank,mean_cosine\n")
        for a in audits:
            f.write(
                f"{a.dataset},{a.n},{a.trial},{a.rank},{a.mean_cosine:.17g}\n"
            )


def project_to_width(batch: Batch, width: int, rng) -> Batch:
    """Project features onto `width` dimensions with fixed orthonormal rows.

    Used to feed image data into a width-d network: the projection is a
    seeded slice of an orthogonal matrix, so distances are preserved and
    the map is identical across runs with the same seed.
    """
    if width > batch.features:
        raise ValueError(
            f"cannot project {batch.features} features up to width {width}"
        )
    if width == batch.features:
        return batch
    rng = as_generator(rng)
    proj = sample_haar_orthogonal(batch.features, rng)[:width, :]
    return Batch(
        data=proj @ batch.data,
        labels=batch.labels,
        source=f"{batch.source} -> {width}d",
    )
