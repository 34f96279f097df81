"""Code database construction, exact top-k retrieval by probabilistic Hamming
similarity, Recall@K, kNN top-1 classification, few-shot episodes, and the
checkpoint-metric correlation experiment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codes as codes_mod
from . import encoder as enc
from . import infomax, kernels
from .codes import EPS_FLOOR, CodeSpec, PackedCodes


@dataclass(frozen=True)
class CodeDatabase:
    """Support set: packed codewords plus labels."""

    packed: PackedCodes
    labels: np.ndarray
    spec: CodeSpec

    def __post_init__(self):
        if self.labels.shape != (self.packed.count,):
            raise ValueError(
                f"labels length {self.labels.shape} != code count {self.packed.count}"
            )

    @property
    def count(self) -> int:
        return self.packed.count


@dataclass(frozen=True)
class EpisodeSpec:
    ways: int
    shots: int
    queries_per_class: int = 1
    episodes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.ways < 2:
            raise ValueError("ways must be >= 2")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.queries_per_class < 1:
            raise ValueError("queries_per_class must be >= 1")


def build_database(params: enc.EncoderParams, data: np.ndarray, labels: np.ndarray) -> CodeDatabase:
    """Assign every item its hard codeword and pack the lot."""
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    spec = params.config.spec
    if data.shape[0] == 0:
        packed = codes_mod.pack(np.zeros((0, spec.d), dtype=np.int64), spec)
        return CodeDatabase(packed=packed, labels=labels.reshape(0), spec=spec)
    probs = enc.encode_batch(params, data)
    hard = np.argmax(probs, axis=2).astype(np.int64)
    return CodeDatabase(packed=codes_mod.pack(hard, spec), labels=labels, spec=spec)


def database_from_codes(codewords: np.ndarray, labels: np.ndarray, spec: CodeSpec) -> CodeDatabase:
    return CodeDatabase(
        packed=codes_mod.pack(codewords, spec), labels=np.asarray(labels), spec=spec
    )


def query_topk(db: CodeDatabase, query: np.ndarray, k_results: int):
    """Exact top-k by log-probability score; ties go to the lower index.

    Returns (indices, scores) sorted by descending score. Asking for more
    results than the database holds returns everything ranked.
    """
    query = np.asarray(query, dtype=np.float64)
    spec = db.spec
    if query.shape != (spec.d, spec.k):
        raise ValueError(f"query shape {query.shape} != ({spec.d}, {spec.k})")
    logq = np.log(np.maximum(query, EPS_FLOOR))
    scores = kernels.logprob_scan(
        db.packed.payload, db.count, spec.d, spec.bits_per_symbol, spec.code_bytes, logq
    )
    take = min(k_results, db.count)
    order = np.lexsort((np.arange(db.count), -scores))[:take]
    return order, scores[order]


def score_matrix(query_probs: np.ndarray, db_codes: np.ndarray) -> np.ndarray:
    """(M, N) log-probability scores of every query against every db code."""
    query_probs = np.asarray(query_probs, dtype=np.float64)
    m, d, k = query_probs.shape
    logq = np.log(np.maximum(query_probs, EPS_FLOOR))
    scores = np.zeros((m, db_codes.shape[0]))
    for i in range(d):
        scores += logq[:, i, :][:, db_codes[:, i]]
    return scores


def _ranked_indices(scores: np.ndarray) -> np.ndarray:
    """Row-wise ranking by descending score, ties by lower index."""
    m, n = scores.shape
    idx = np.arange(n)
    return np.stack([np.lexsort((idx, -row)) for row in scores])


def recall_at(
    db: CodeDatabase,
    query_probs: np.ndarray,
    query_labels: np.ndarray,
    ks,
    exclude_self: bool = False,
) -> dict[int, float]:
    """Fraction of queries whose top-K hits contain an item of their class.

    With ``exclude_self`` the query's own database row (same index) never
    counts as a hit.
    """
    query_probs = np.asarray(query_probs, dtype=np.float64)
    query_labels = np.asarray(query_labels)
    if query_probs.shape[0] == 0:
        raise ValueError("query split is empty")
    db_codes = codes_mod.unpack_all(db.packed)
    scores = score_matrix(query_probs, db_codes)
    ranked = _ranked_indices(scores)
    out = {}
    for k in ks:
        take = min(int(k), db.count)
        top = ranked[:, :take]
        match = db.labels[top] == query_labels[:, None]
        if exclude_self:
            match &= top != np.arange(len(query_labels))[:, None]
        out[int(k)] = float(match.any(axis=1).mean())
    return out


def knn_top1(
    db: CodeDatabase,
    queries: np.ndarray,
    query_labels: np.ndarray,
    k_neighbors: int = 200,
    pair_tables: np.ndarray | None = None,
    exclude_self: bool = False,
) -> float:
    """Majority-vote accuracy over the k nearest database entries.

    ``queries`` may be (M, d, k) probability matrices (log-probability
    scoring) or (M, d) integer codewords (negative Hamming, or negative
    table distance when ``pair_tables`` gives per-dimension (k, k) costs).
    Vote ties resolve to the lowest class id.
    """
    queries = np.asarray(queries)
    query_labels = np.asarray(query_labels)
    if queries.shape[0] == 0 or db.count == 0:
        raise ValueError("empty query split or database")
    db_codes = codes_mod.unpack_all(db.packed)
    if queries.ndim == 3:
        scores = score_matrix(queries, db_codes)
    elif queries.ndim == 2:
        if pair_tables is not None:
            scores = np.zeros((queries.shape[0], db.count))
            for i in range(db.spec.d):
                scores -= pair_tables[i][queries[:, i][:, None], db_codes[:, i][None, :]]
        else:
            scores = -(queries[:, None, :] != db_codes[None, :, :]).sum(axis=2).astype(np.float64)
    else:
        raise ValueError(f"queries must be (M, d, k) probs or (M, d) codes, got {queries.shape}")

    k_eff = min(k_neighbors, db.count if not exclude_self else db.count - 1)
    ranked = _ranked_indices(scores)
    n_classes = int(db.labels.max()) + 1
    correct = 0
    for qi in range(queries.shape[0]):
        row = ranked[qi]
        if exclude_self:
            row = row[row != qi]
        neigh = db.labels[row[:k_eff]]
        votes = np.bincount(neigh, minlength=n_classes)
        if votes.argmax() == query_labels[qi]:
            correct += 1
    return correct / queries.shape[0]


@dataclass(frozen=True)
class FewshotResult:
    accuracy: float
    ci95: float
    episodes: int


def fewshot_episode(
    params: enc.EncoderParams,
    data: np.ndarray,
    labels: np.ndarray,
    spec: EpisodeSpec,
) -> FewshotResult:
    """N-way K-shot evaluation over random episodes with a normal 95% CI.

    Each class codeword is the per-dimension argmax of the mean of its
    support probability matrices; queries pick the class with the highest
    log-probability score.
    """
    probs = enc.encode_batch(params, np.asarray(data, dtype=np.float64))
    return fewshot_from_probs(probs, np.asarray(labels), spec)


def fewshot_from_probs(probs: np.ndarray, labels: np.ndarray, spec: EpisodeSpec) -> FewshotResult:
    need = spec.shots + spec.queries_per_class
    pools = [np.flatnonzero(labels == c) for c in range(int(labels.max()) + 1)]
    eligible = [p for p in pools if p.size >= need]
    if len(eligible) < spec.ways:
        raise ValueError(
            f"need {spec.ways} classes with >= {need} items, found {len(eligible)}"
        )
    rng = np.random.default_rng(spec.seed)
    logp = np.log(np.maximum(probs, EPS_FLOOR))
    accs = np.empty(spec.episodes)
    for ep in range(spec.episodes):
        cls = rng.choice(len(eligible), size=spec.ways, replace=False)
        protos = np.empty((spec.ways, probs.shape[1]), dtype=np.int64)
        query_idx = []
        for slot, ci in enumerate(cls):
            pick = rng.choice(eligible[ci], size=need, replace=False)
            support, queries = pick[: spec.shots], pick[spec.shots :]
            protos[slot] = np.argmax(probs[support].mean(axis=0), axis=1)
            query_idx.append(queries)
        correct = 0
        for slot, queries in enumerate(query_idx):
            q_log = logp[queries]  # (q, d, k)
            sc = np.stack(
                [q_log[:, np.arange(probs.shape[1]), protos[w]].sum(axis=1)
                 for w in range(spec.ways)],
                axis=1,
            )
            correct += int((sc.argmax(axis=1) == slot).sum())
        accs[ep] = correct / (spec.ways * spec.queries_per_class)
    mean = float(accs.mean())
    ci = float(1.96 * accs.std(ddof=0) / np.sqrt(spec.episodes))
    return FewshotResult(accuracy=mean, ci95=ci, episodes=spec.episodes)


METRIC_NAMES = ("acc_5way", "acc_10way", "acc_20way", "recall_at_1", "mutual_information")


def checkpoint_metric_series(
    checkpoints,
    data: np.ndarray,
    labels: np.ndarray,
    episodes: int = 200,
    seed: int = 0,
) -> np.ndarray:
    """(5, T) metric series over checkpoints: {5,10,20}-way 1-shot accuracy,
    Recall@1 (self-excluded), and the plug-in mutual information."""
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    series = np.empty((len(METRIC_NAMES), len(checkpoints)))
    for t, params in enumerate(checkpoints):
        probs = enc.encode_batch(params, data)
        for row, ways in enumerate((5, 10, 20)):
            spec = EpisodeSpec(ways=ways, shots=1, queries_per_class=1,
                               episodes=episodes, seed=seed)
            series[row, t] = fewshot_from_probs(probs, labels, spec).accuracy
        db = build_database(params, data, labels)
        series[3, t] = recall_at(db, probs, labels, ks=[1], exclude_self=True)[1]
        series[4, t] = infomax.mutual_information_estimate(probs, labels)
    return series


def pearson_matrix(series: np.ndarray) -> np.ndarray:
    """Pairwise Pearson correlations; zero-variance rows yield NaN entries."""
    series = np.asarray(series, dtype=np.float64)
    if series.shape[1] < 3:
        raise ValueError("need at least 3 observations per metric")
    n = series.shape[0]
    out = np.eye(n)
    sd = series.std(axis=1)
    centered = series - series.mean(axis=1, keepdims=True)
    for i in range(n):
        for j in range(i + 1, n):
            if sd[i] == 0.0 or sd[j] == 0.0:
                out[i, j] = out[j, i] = np.nan
            else:
                r = float((centered[i] * centered[j]).mean() / (sd[i] * sd[j]))
                out[i, j] = out[j, i] = r
    return out


def metric_correlation(
    checkpoints,
    data: np.ndarray,
    labels: np.ndarray,
    episodes: int = 200,
    seed: int = 0,
):
    """Correlation matrix over the five evaluation metrics across checkpoints."""
    if len(checkpoints) < 3:
        raise ValueError("need at least 3 checkpoints")
    series = checkpoint_metric_series(checkpoints, data, labels, episodes, seed)
    return pearson_matrix(series), series
