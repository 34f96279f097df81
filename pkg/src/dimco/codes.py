"""Discrete code types: k-way d-dimensional codewords, bit packing, and the
probabilistic Hamming similarity family.

A "ProbMatrix" is a (d, k) row-stochastic float64 array: row i is the
categorical distribution of symbol i. A codeword is a length-d int64 vector
with entries in [0, k). All scores and entropies are in nats; divide by
ln 2 for bits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import log

import numpy as np

from . import kernels

# Probabilities are clamped to this floor before taking logs so that
# mismatches against (near-)one-hot rows stay finite.
EPS_FLOOR = 1e-12

DCOD_MAGIC = b"DCOD"
DCOD_VERSION = 1


class FileFormatError(ValueError):
    """Malformed binary file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class CodeSpec:
    """Code geometry: k symbols per dimension, d dimensions."""

    k: int
    d: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")

    @property
    def bits_per_symbol(self) -> int:
        return (self.k - 1).bit_length()

    @property
    def code_bytes(self) -> int:
        # each codeword is padded to a byte boundary for O(1) random access
        return (self.d * self.bits_per_symbol + 7) // 8

    @property
    def size(self) -> int:
        return self.k**self.d

    @property
    def log_size(self) -> float:
        return self.d * log(self.k)


def validate_prob_matrix(p: np.ndarray, spec: CodeSpec | None = None) -> None:
    """Check row-stochasticity (1e-9) and the probability floor."""
    p = np.asarray(p)
    if p.ndim != 2:
        raise ValueError(f"expected a 2-D (d, k) array, got shape {p.shape}")
    if spec is not None and p.shape != (spec.d, spec.k):
        raise ValueError(f"shape {p.shape} does not match spec ({spec.d}, {spec.k})")
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite")
    if np.any(p < EPS_FLOOR):
        raise ValueError(f"probabilities must be >= {EPS_FLOOR}")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("each row must sum to 1 within 1e-9")


def validate_codeword(w: np.ndarray, spec: CodeSpec) -> np.ndarray:
    w = np.asarray(w)
    if w.shape != (spec.d,):
        raise ValueError(f"codeword length {w.shape} does not match d={spec.d}")
    if np.any(w < 0) or np.any(w >= spec.k):
        raise ValueError(f"symbols must lie in [0, {spec.k})")
    return w.astype(np.int64)


def argmax_codeword(p: np.ndarray) -> np.ndarray:
    """Hard code: per-row argmax, ties broken by the lowest index."""
    p = np.asarray(p)
    if p.ndim != 2:
        raise ValueError(f"expected a 2-D (d, k) array, got shape {p.shape}")
    return np.argmax(p, axis=1).astype(np.int64)


def log_prob_similarity(query: np.ndarray, support: np.ndarray) -> float:
    """Sum over dimensions of the query's log-probability of the support symbol.

    The query rows are clamped to EPS_FLOOR before logging, so exact-zero
    entries score ln(1e-12) per mismatch instead of -inf.
    """
    query = np.asarray(query, dtype=np.float64)
    support = np.asarray(support)
    if query.ndim != 2:
        raise ValueError(f"expected a 2-D (d, k) query, got shape {query.shape}")
    d, k = query.shape
    if support.shape != (d,):
        raise ValueError(f"support length {support.shape} does not match d={d}")
    if np.any(support < 0) or np.any(support >= k):
        raise ValueError(f"support symbols must lie in [0, {k})")
    picked = query[np.arange(d), support]
    return float(np.log(np.maximum(picked, EPS_FLOOR)).sum())


def partial_code_score(query: np.ndarray, assignment) -> float:
    """Score a query against a partial symbol assignment.

    ``assignment`` is an iterable of (dimension, symbol) pairs; the score is
    the sum of the query's log-probabilities at those positions. Used to rank
    database items when visualizing what individual code positions capture.
    """
    query = np.asarray(query, dtype=np.float64)
    d, k = query.shape
    pairs = list(assignment)
    dims = [i for i, _ in pairs]
    if len(set(dims)) != len(dims):
        raise ValueError("assignment contains a duplicate dimension")
    total = 0.0
    for i, j in pairs:
        if not (0 <= i < d):
            raise ValueError(f"dimension {i} out of range [0, {d})")
        if not (0 <= j < k):
            raise ValueError(f"symbol {j} out of range [0, {k})")
        total += log(max(query[i, j], EPS_FLOOR))
    return total


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Number of positions where two codewords disagree."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"codeword shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


@dataclass(frozen=True)
class PackedCodes:
    """Bit-packed codewords; immutable, safe to share across threads."""

    spec: CodeSpec
    count: int
    payload: np.ndarray  # uint8, count * spec.code_bytes long

    def __post_init__(self):
        expected = self.count * self.spec.code_bytes
        if self.payload.dtype != np.uint8 or self.payload.shape != (expected,):
            raise ValueError(
                f"payload must be uint8 of length {expected}, got "
                f"{self.payload.dtype} shape {self.payload.shape}"
            )
        self.payload.flags.writeable = False

    @property
    def nbytes(self) -> int:
        return self.payload.size


def pack(codewords: np.ndarray, spec: CodeSpec) -> PackedCodes:
    """Pack an (N, d) array of codewords, one byte-aligned run per codeword."""
    codewords = np.asarray(codewords)
    if codewords.ndim == 1:
        codewords = codewords[None, :]
    n, d = codewords.shape
    if d != spec.d:
        raise ValueError(f"codeword length {d} does not match spec d={spec.d}")
    if n and (codewords.min() < 0 or codewords.max() >= spec.k):
        raise ValueError(f"symbols must lie in [0, {spec.k})")
    if n == 0:
        payload = np.zeros(0, dtype=np.uint8)
    else:
        payload = kernels.pack_codes(
            np.ascontiguousarray(codewords, dtype=np.int64),
            spec.bits_per_symbol,
            spec.code_bytes,
        )
    return PackedCodes(spec=spec, count=n, payload=payload)


def unpack(packed: PackedCodes, index: int) -> np.ndarray:
    """Recover codeword ``index`` from the packed buffer."""
    if not (0 <= index < packed.count):
        raise IndexError(f"index {index} out of range [0, {packed.count})")
    spec = packed.spec
    start = index * spec.code_bytes
    chunk = np.ascontiguousarray(packed.payload[start : start + spec.code_bytes])
    return kernels.unpack_codes(chunk, 1, spec.d, spec.bits_per_symbol, spec.code_bytes)[0]


def unpack_all(packed: PackedCodes) -> np.ndarray:
    if packed.count == 0:
        return np.zeros((0, packed.spec.d), dtype=np.int64)
    return kernels.unpack_codes(
        packed.payload, packed.count, packed.spec.d,
        packed.spec.bits_per_symbol, packed.spec.code_bytes,
    )


# ---------------------------------------------------------------------------
# DCOD container: magic, u32 version, u32 N, u16 k, u16 d, u8 has_labels,
# packed payload, then (if has_labels) N little-endian u32 labels.
# ---------------------------------------------------------------------------

_DCOD_HEADER = struct.Struct("<4sIIHHB")


def write_dcod(path, packed: PackedCodes, labels: np.ndarray | None = None) -> None:
    from .data import atomic_write

    spec = packed.spec
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (packed.count,):
            raise ValueError(f"labels length {labels.shape} != count {packed.count}")
    header = _DCOD_HEADER.pack(
        DCOD_MAGIC, DCOD_VERSION, packed.count, spec.k, spec.d,
        1 if labels is not None else 0,
    )
    blob = header + packed.payload.tobytes()
    if labels is not None:
        blob += labels.astype("<u4").tobytes()
    atomic_write(path, blob)


def read_dcod(path) -> tuple[PackedCodes, np.ndarray | None]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DCOD_HEADER.size:
        raise FileFormatError("truncated DCOD header", len(raw))
    magic, version, count, k, d, has_labels = _DCOD_HEADER.unpack_from(raw, 0)
    if magic != DCOD_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}", 0)
    if version != DCOD_VERSION:
        raise FileFormatError(f"unsupported DCOD version {version}", 4)
    spec = CodeSpec(k=k, d=d)
    offset = _DCOD_HEADER.size
    payload_len = count * spec.code_bytes
    if len(raw) < offset + payload_len:
        raise FileFormatError("truncated DCOD payload", len(raw))
    payload = np.frombuffer(raw, dtype=np.uint8, count=payload_len, offset=offset).copy()
    offset += payload_len
    labels = None
    if has_labels:
        if len(raw) < offset + 4 * count:
            raise FileFormatError("truncated DCOD labels", len(raw))
        labels = np.frombuffer(raw, dtype="<u4", count=count, offset=offset).astype(np.int64)
        offset += 4 * count
    if len(raw) != offset:
        raise FileFormatError("trailing bytes after DCOD payload", offset)
    return PackedCodes(spec=spec, count=count, payload=payload), labels
