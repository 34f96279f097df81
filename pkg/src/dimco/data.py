"""Labeled embedding container, the DEMB binary format, and the synthetic
Gaussian-cluster generator used for desk-scale experiments.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .codes import FileFormatError

DEMB_MAGIC = b"DEMB"
DEMB_VERSION = 1


def atomic_write(path, blob: bytes) -> None:
    """Write-temp-then-rename so partial files never land at ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-dimco-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class LabeledEmbeddings:
    """N feature vectors (float64 in memory) with integer labels in [0, C)."""

    data: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"data must be (N >= 1, D), got {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise ValueError("labels length must match data rows")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("data must be finite")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


_DEMB_HEADER = struct.Struct("<4sIIII")


def write_embeddings(path, emb: LabeledEmbeddings) -> None:
    """DEMB: magic, u32 version, u32 N, u32 D, u32 C, f32 rows, u32 labels."""
    header = _DEMB_HEADER.pack(DEMB_MAGIC, DEMB_VERSION, emb.count, emb.dim, emb.class_count)
    blob = (
        header
        + np.ascontiguousarray(emb.data, dtype="<f4").tobytes()
        + emb.labels.astype("<u4").tobytes()
    )
    atomic_write(path, blob)


def read_embeddings(path) -> LabeledEmbeddings:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DEMB_HEADER.size:
        raise FileFormatError("truncated DEMB header", len(raw))
    magic, version, n, dim, c = _DEMB_HEADER.unpack_from(raw, 0)
    if magic != DEMB_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}", 0)
    if version != DEMB_VERSION:
        raise FileFormatError(f"unsupported DEMB version {version}", 4)
    offset = _DEMB_HEADER.size
    data_bytes = 4 * n * dim
    if len(raw) < offset + data_bytes:
        raise FileFormatError("truncated DEMB payload", len(raw))
    data = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=offset)
    offset += data_bytes
    if len(raw) < offset + 4 * n:
        raise FileFormatError("truncated DEMB labels", len(raw))
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=offset).astype(np.int64)
    offset += 4 * n
    if len(raw) != offset:
        raise FileFormatError("trailing bytes after DEMB labels", offset)
    if n >= 1 and labels.max() >= c:
        bad = int(np.argmax(labels >= c))
        raise FileFormatError(
            f"label {labels[bad]} out of range [0, {c})",
            _DEMB_HEADER.size + data_bytes + 4 * bad,
        )
    return LabeledEmbeddings(
        data=data.reshape(n, dim).astype(np.float64), labels=labels, class_count=c
    )


@dataclass(frozen=True)
class SynthSpec:
    classes: int
    per_class: int
    dim: int
    cluster_spread: float = 0.05
    center_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.classes, self.per_class, self.dim) < 1:
            raise ValueError("classes, per_class and dim must be positive")
        if self.cluster_spread < 0 or self.center_scale <= 0:
            raise ValueError("cluster_spread must be >= 0 and center_scale > 0")


def gen_synth(spec: SynthSpec) -> LabeledEmbeddings:
    """Gaussian blobs: uniform cluster centers plus isotropic noise."""
    rng = np.random.default_rng(spec.seed)
    centers = rng.uniform(-spec.center_scale, spec.center_scale, size=(spec.classes, spec.dim))
    data = np.repeat(centers, spec.per_class, axis=0)
    data = data + rng.normal(0.0, spec.cluster_spread, size=data.shape)
    labels = np.repeat(np.arange(spec.classes), spec.per_class)
    return LabeledEmbeddings(data=data, labels=labels, class_count=spec.classes)
