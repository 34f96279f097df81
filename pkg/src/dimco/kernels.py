"""Hot numeric kernels: bit packing, packed-code scans, k-means assignment.

Each kernel has a numba ``@njit`` build and a vectorized pure-numpy twin.
Set ``DIMCO_DISABLE_NUMBA=1`` to force the numpy path (the default uses
numba when it imports). ``dimco bench`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("DIMCO_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# Bit packing. Symbols are laid out LSB-first inside each codeword's byte
# run; every codeword starts on a byte boundary.
# ---------------------------------------------------------------------------


def pack_codes_np(codes: np.ndarray, bits: int, code_bytes: int) -> np.ndarray:
    n, d = codes.shape
    shifts = np.arange(bits, dtype=np.uint64)
    bit_mat = (codes[:, :, None].astype(np.uint64) >> shifts) & 1
    bit_mat = bit_mat.reshape(n, d * bits).astype(np.uint8)
    padded = np.zeros((n, code_bytes * 8), dtype=np.uint8)
    padded[:, : d * bits] = bit_mat
    return np.packbits(padded, axis=1, bitorder="little").reshape(-1)


def unpack_codes_np(payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int) -> np.ndarray:
    bit_mat = np.unpackbits(payload.reshape(n, code_bytes), axis=1, bitorder="little")
    bit_mat = bit_mat[:, : d * bits].reshape(n, d, bits).astype(np.int64)
    weights = np.int64(1) << np.arange(bits, dtype=np.int64)
    return bit_mat @ weights


@njit(cache=True)
def pack_codes_nb(codes: np.ndarray, bits: int, code_bytes: int) -> np.ndarray:  # pragma: no cover
    n, d = codes.shape
    out = np.zeros(n * code_bytes, dtype=np.uint8)
    for i in range(n):
        base = i * code_bytes
        bitpos = 0
        for dim in range(d):
            sym = codes[i, dim]
            for j in range(bits):
                if (sym >> j) & 1:
                    out[base + (bitpos >> 3)] |= np.uint8(1 << (bitpos & 7))
                bitpos += 1
    return out


@njit(cache=True)
def unpack_codes_nb(
    payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int
) -> np.ndarray:  # pragma: no cover
    out = np.empty((n, d), dtype=np.int64)
    for i in range(n):
        base = i * code_bytes
        bitpos = 0
        for dim in range(d):
            sym = 0
            for j in range(bits):
                byte = payload[base + (bitpos >> 3)]
                sym |= ((byte >> (bitpos & 7)) & 1) << j
                bitpos += 1
            out[i, dim] = sym
    return out


# ---------------------------------------------------------------------------
# Database scans. One log-probability gather per dimension plus a sum,
# straight off the packed byte run.
# ---------------------------------------------------------------------------


def logprob_scan_np(
    payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int, logq: np.ndarray
) -> np.ndarray:
    codes = unpack_codes_np(payload, n, d, bits, code_bytes)
    return logq[np.arange(d), codes].sum(axis=1)


@njit(cache=True)
def logprob_scan_nb(
    payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int, logq: np.ndarray
) -> np.ndarray:  # pragma: no cover
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        base = i * code_bytes
        bitpos = 0
        acc = 0.0
        for dim in range(d):
            sym = 0
            for j in range(bits):
                byte = payload[base + (bitpos >> 3)]
                sym |= ((byte >> (bitpos & 7)) & 1) << j
                bitpos += 1
            acc += logq[dim, sym]
        out[i] = acc
    return out


def hamming_scan_np(
    payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int, query: np.ndarray
) -> np.ndarray:
    codes = unpack_codes_np(payload, n, d, bits, code_bytes)
    return (codes != query).sum(axis=1).astype(np.int64)


@njit(cache=True)
def hamming_scan_nb(
    payload: np.ndarray, n: int, d: int, bits: int, code_bytes: int, query: np.ndarray
) -> np.ndarray:  # pragma: no cover
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        base = i * code_bytes
        bitpos = 0
        mism = 0
        for dim in range(d):
            sym = 0
            for j in range(bits):
                byte = payload[base + (bitpos >> 3)]
                sym |= ((byte >> (bitpos & 7)) & 1) << j
                bitpos += 1
            if sym != query[dim]:
                mism += 1
        out[i] = mism
    return out


# ---------------------------------------------------------------------------
# Lloyd assignment step. Ties go to the lowest centroid index.
# ---------------------------------------------------------------------------


def kmeans_assign_np(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, float]:
    sq = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    labels = np.argmin(sq, axis=1)
    diff = points - centroids[labels]
    inertia = float((diff * diff).sum())
    return labels, inertia


@njit(cache=True)
def kmeans_assign_nb(
    points: np.ndarray, centroids: np.ndarray
) -> tuple[np.ndarray, float]:  # pragma: no cover
    n, dim = points.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    inertia = 0.0
    for i in range(n):
        best = 0
        best_sq = np.inf
        for c in range(k):
            sq = 0.0
            for j in range(dim):
                delta = points[i, j] - centroids[c, j]
                sq += delta * delta
            if sq < best_sq:
                best_sq = sq
                best = c
        labels[i] = best
        inertia += best_sq
    return labels, inertia


if NUMBA_ENABLED:
    pack_codes = pack_codes_nb
    unpack_codes = unpack_codes_nb
    logprob_scan = logprob_scan_nb
    hamming_scan = hamming_scan_nb
    kmeans_assign = kmeans_assign_nb
else:
    pack_codes = pack_codes_np
    unpack_codes = unpack_codes_np
    logprob_scan = logprob_scan_np
    hamming_scan = hamming_scan_np
    kmeans_assign = kmeans_assign_np
