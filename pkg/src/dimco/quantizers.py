"""Baseline compressors: product quantization (PQ) and adaptive per-coordinate
scalar quantization (SQ), built on a hand-rolled Lloyd k-means with k-means++
seeding. Both emit codewords compatible with the shared code-database
evaluation path.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codes import CodeSpec, FileFormatError

DPQ_MAGIC = b"DPQ1"
DSQ_MAGIC = b"DSQ1"
QUANT_VERSION = 1


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centroids[c] = points[int(rng.integers(n))]
            continue
        probs = closest / total
        pick = int(rng.choice(n, p=probs))
        centroids[c] = points[pick]
        dist = ((points - centroids[c]) ** 2).sum(axis=1)
        np.minimum(closest, dist, out=closest)
    return centroids


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Lloyd iterations from a k-means++ start until the centroid shift
    drops below ``tol``. Empty clusters are reseeded to the farthest point."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    if np.unique(points, axis=0).shape[0] < k:
        warnings.warn("fewer distinct points than k; duplicate centroids expected",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    for _ in range(max_iters):
        labels, _ = kernels.kmeans_assign(points, centroids)
        new = np.empty_like(centroids)
        for c in range(k):
            member = labels == c
            if member.any():
                new[c] = points[member].mean(axis=0)
            else:
                dists = ((points - centroids[c]) ** 2).sum(axis=1)
                new[c] = points[int(dists.argmax())]
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    return centroids


@dataclass(frozen=True)
class PQCodebook:
    spec: CodeSpec
    input_dim: int  # original D, before any zero-padding
    centroids: np.ndarray  # (d, k, subspace_dim)

    @property
    def subspace_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def padded_dim(self) -> int:
        return self.spec.d * self.subspace_dim


def _pad_columns(vectors: np.ndarray, padded_dim: int) -> np.ndarray:
    if vectors.shape[1] == padded_dim:
        return vectors
    out = np.zeros((vectors.shape[0], padded_dim))
    out[:, : vectors.shape[1]] = vectors
    return out


def pq_train(embeddings: np.ndarray, spec: CodeSpec, seed: int = 0) -> PQCodebook:
    """Split each vector into d contiguous subvectors and k-means each
    subspace. Dimensions not divisible by d are zero-padded."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n, input_dim = embeddings.shape
    if n < spec.k:
        raise ValueError(f"need at least k={spec.k} training vectors, got {n}")
    sub = -(-input_dim // spec.d)
    padded = _pad_columns(embeddings, sub * spec.d)
    centroids = np.empty((spec.d, spec.k, sub))
    for i in range(spec.d):
        block = padded[:, i * sub : (i + 1) * sub]
        centroids[i] = kmeans(block, spec.k, seed=seed + i)
    return PQCodebook(spec=spec, input_dim=input_dim, centroids=centroids)


def pq_encode(codebook: PQCodebook, vectors: np.ndarray) -> np.ndarray:
    """Nearest centroid index per subspace (Euclidean, ties lowest index)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    single = vectors.ndim == 1
    if single:
        vectors = vectors[None, :]
    if vectors.shape[1] != codebook.input_dim:
        raise ValueError(
            f"vector dim {vectors.shape[1]} != codebook dim {codebook.input_dim}"
        )
    padded = _pad_columns(vectors, codebook.padded_dim)
    sub = codebook.subspace_dim
    codes = np.empty((vectors.shape[0], codebook.spec.d), dtype=np.int64)
    for i in range(codebook.spec.d):
        block = np.ascontiguousarray(padded[:, i * sub : (i + 1) * sub])
        labels, _ = kernels.kmeans_assign(block, codebook.centroids[i])
        codes[:, i] = labels
    return codes[0] if single else codes


def pq_decode(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    single = codes.ndim == 1
    if single:
        codes = codes[None, :]
    parts = [codebook.centroids[i][codes[:, i]] for i in range(codebook.spec.d)]
    recon = np.concatenate(parts, axis=1)[:, : codebook.input_dim]
    return recon[0] if single else recon


def pq_pair_tables(codebook: PQCodebook) -> np.ndarray:
    """Per-dimension (k, k) squared-distance tables for symmetric code-space kNN."""
    d, k, _ = codebook.centroids.shape
    tables = np.empty((d, k, k))
    for i in range(d):
        c = codebook.centroids[i]
        diff = c[:, None, :] - c[None, :, :]
        tables[i] = (diff * diff).sum(axis=2)
    return tables


@dataclass(frozen=True)
class SQCodebook:
    k: int
    levels: np.ndarray  # (D, k), sorted per coordinate

    @property
    def input_dim(self) -> int:
        return self.levels.shape[0]

    @property
    def spec(self) -> CodeSpec:
        return CodeSpec(k=self.k, d=self.input_dim)


def sq_train(embeddings: np.ndarray, k: int) -> SQCodebook:
    """Per-coordinate 1-D k-means levels; constant coordinates warn and
    repeat their single level."""
    if k < 2:
        raise ValueError("k must be >= 2")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n, dim = embeddings.shape
    levels = np.empty((dim, k))
    for j in range(dim):
        col = embeddings[:, j]
        if np.unique(col).size == 1:
            warnings.warn(f"coordinate {j} is constant; duplicating its level",
                          stacklevel=2)
            levels[j] = col[0]
            continue
        cents = kmeans(col[:, None], k, seed=j)
        levels[j] = np.sort(cents[:, 0])
    return SQCodebook(k=k, levels=levels)


def sq_encode(codebook: SQCodebook, vectors: np.ndarray) -> np.ndarray:
    """Nearest level per coordinate (ties lowest index)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    single = vectors.ndim == 1
    if single:
        vectors = vectors[None, :]
    if vectors.shape[1] != codebook.input_dim:
        raise ValueError(
            f"vector dim {vectors.shape[1]} != codebook dim {codebook.input_dim}"
        )
    dist = np.abs(vectors[:, :, None] - codebook.levels[None, :, :])
    codes = dist.argmin(axis=2).astype(np.int64)
    return codes[0] if single else codes


def sq_decode(codebook: SQCodebook, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    return np.take_along_axis(
        np.broadcast_to(codebook.levels, (codes.shape[0], *codebook.levels.shape)),
        codes[:, :, None],
        axis=2,
    )[:, :, 0]


def sq_pair_tables(codebook: SQCodebook) -> np.ndarray:
    diff = codebook.levels[:, :, None] - codebook.levels[:, None, :]
    return diff * diff


def compression_rate(input_dim: int, bits_in: int, spec: CodeSpec) -> float:
    """Uncompressed-to-compressed bit ratio: bits_in * D / (d * log2 k)."""
    return bits_in * input_dim / (spec.d * np.log2(spec.k))


# ---------------------------------------------------------------------------
# Codebook files. DPQ1: magic, u32 version, u32 D, u16 k, u16 d, u32
# subspace_dim, centroids f64 LE. DSQ1: magic, u32 version, u32 D, u16 k,
# levels f64 LE.
# ---------------------------------------------------------------------------


def write_pq(path, codebook: PQCodebook) -> None:
    from .data import atomic_write

    header = struct.pack(
        "<4sIIHHI",
        DPQ_MAGIC,
        QUANT_VERSION,
        codebook.input_dim,
        codebook.spec.k,
        codebook.spec.d,
        codebook.subspace_dim,
    )
    atomic_write(path, header + np.ascontiguousarray(codebook.centroids, dtype="<f8").tobytes())


def read_pq(path) -> PQCodebook:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sIIHHI")
    if len(raw) < head.size:
        raise FileFormatError("truncated DPQ1 header", len(raw))
    magic, version, input_dim, k, d, sub = head.unpack_from(raw, 0)
    if magic != DPQ_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}", 0)
    if version != QUANT_VERSION:
        raise FileFormatError(f"unsupported DPQ1 version {version}", 4)
    count = d * k * sub
    if len(raw) != head.size + 8 * count:
        raise FileFormatError("DPQ1 payload length mismatch", len(raw))
    cents = np.frombuffer(raw, dtype="<f8", count=count, offset=head.size)
    return PQCodebook(
        spec=CodeSpec(k=k, d=d),
        input_dim=input_dim,
        centroids=cents.reshape(d, k, sub).copy(),
    )


def write_sq(path, codebook: SQCodebook) -> None:
    from .data import atomic_write

    header = struct.pack("<4sIIH", DSQ_MAGIC, QUANT_VERSION, codebook.input_dim, codebook.k)
    atomic_write(path, header + np.ascontiguousarray(codebook.levels, dtype="<f8").tobytes())


def read_sq(path) -> SQCodebook:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sIIH")
    if len(raw) < head.size:
        raise FileFormatError("truncated DSQ1 header", len(raw))
    magic, version, input_dim, k = head.unpack_from(raw, 0)
    if magic != DSQ_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}", 0)
    if version != QUANT_VERSION:
        raise FileFormatError(f"unsupported DSQ1 version {version}", 4)
    count = input_dim * k
    if len(raw) != head.size + 8 * count:
        raise FileFormatError("DSQ1 payload length mismatch", len(raw))
    levels = np.frombuffer(raw, dtype="<f8", count=count, offset=head.size)
    return SQCodebook(k=k, levels=levels.reshape(input_dim, k).copy())
