"""Closed-form empirical entropy and mutual-information estimators over
batches of per-dimension categorical distributions, the pairwise-independence
regularizer, the combined training loss, and its analytic gradient with
respect to logits.

Batches are (n, d, k) float64 probability arrays plus an (n,) integer label
vector. Everything is in nats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .codes import EPS_FLOOR


def _as_batch(probs: np.ndarray, labels: np.ndarray | None = None):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 3:
        raise ValueError(f"expected (n, d, k) probabilities, got shape {probs.shape}")
    if probs.shape[0] == 0:
        raise ValueError("batch must contain at least one item")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (probs.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match batch size {probs.shape[0]}"
            )
        if labels.min() < 0:
            raise ValueError("labels must be non-negative")
    return probs, labels


def categorical_entropy(probs: np.ndarray) -> float | np.ndarray:
    """Shannon entropy -sum p ln p of the trailing axis, with 0 ln 0 = 0.

    Accepts a single simplex vector or any array of them stacked along
    leading axes; values lie in [0, ln k].
    """
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("probabilities must sum to 1 within 1e-9")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    out = -terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def _entropy_of_means(probs: np.ndarray) -> float:
    """Sum over dimensions of the entropy of the batch-mean rows."""
    mean = probs.mean(axis=0)  # (d, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mean > 0.0, mean * np.log(mean), 0.0)
    return float(-terms.sum())


def marginal_entropy_estimate(probs: np.ndarray, labels: np.ndarray | None = None) -> float:
    """Entropy of the code distribution, estimated per dimension from the
    batch-averaged categorical rows and summed."""
    probs, _ = _as_batch(probs, labels)
    return _entropy_of_means(probs)


def conditional_entropy_estimate(probs: np.ndarray, labels: np.ndarray) -> float:
    """Class-frequency-weighted marginal entropy within each class."""
    probs, labels = _as_batch(probs, labels)
    n = probs.shape[0]
    total = 0.0
    for y in np.unique(labels):
        member = labels == y
        weight = member.sum() / n
        total += weight * _entropy_of_means(probs[member])
    return total


def mutual_information_estimate(probs: np.ndarray, labels: np.ndarray) -> float:
    """Plug-in estimate of the code/label mutual information, in [0, d ln k]."""
    mi = marginal_entropy_estimate(probs) - conditional_entropy_estimate(probs, labels)
    if -1e-9 < mi < 0.0:
        mi = 0.0  # Jensen guarantees >= 0; absorb rounding
    return mi


def sample_dimension_pairs(d: int, count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Sample ``count`` distinct unordered dimension pairs (fewer if d is small)."""
    total = d * (d - 1) // 2
    take = min(count, total)
    if take <= 0:
        return []
    flat = rng.choice(total, size=take, replace=False)
    pairs = []
    for f in flat:
        # invert the row-major upper-triangle enumeration
        i = 0
        offset = int(f)
        while offset >= d - 1 - i:
            offset -= d - 1 - i
            i += 1
        pairs.append((i, i + 1 + offset))
    return pairs


def independence_regularizer(probs: np.ndarray, pairs) -> float:
    """Mean over dimension pairs of KL(product of marginals || plug-in joint).

    The joint of dims (a, b) is the batch mean of per-item outer products;
    its entries are clamped at EPS_FLOOR inside the log.
    """
    probs, _ = _as_batch(probs)
    pairs = list(pairs)
    if not pairs:
        warnings.warn("independence_regularizer called with no pairs; returning 0",
                      stacklevel=2)
        return 0.0
    d = probs.shape[1]
    mean = probs.mean(axis=0)
    total = 0.0
    for a, b in pairs:
        if a == b:
            raise ValueError(f"pair ({a}, {b}) must use distinct dimensions")
        if not (0 <= a < d and 0 <= b < d):
            raise ValueError(f"pair ({a}, {b}) out of range for d={d}")
        product = np.outer(mean[a], mean[b])
        joint = np.einsum("nu,nv->uv", probs[:, a, :], probs[:, b, :]) / probs.shape[0]
        logq = np.log(np.maximum(joint, EPS_FLOOR))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(product > 0.0, product * (np.log(product) - logq), 0.0)
        total += float(terms.sum())
    return total / len(pairs)


@dataclass(frozen=True)
class LossReport:
    """One loss evaluation: entropies, mutual information, regularizer, total."""

    marginal_entropy: float
    conditional_entropy: float
    mutual_information: float
    regularizer: float
    total: float
    lam: float


def total_loss(probs: np.ndarray, labels: np.ndarray, lam: float = 1.0, pairs=()) -> LossReport:
    """Training loss: -(mutual information) + lam * independence regularizer."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    probs, labels = _as_batch(probs, labels)
    me = marginal_entropy_estimate(probs)
    ce = conditional_entropy_estimate(probs, labels)
    mi = me - ce
    if -1e-9 < mi < 0.0:
        mi = 0.0
    pairs = list(pairs)
    reg = independence_regularizer(probs, pairs) if pairs else 0.0
    return LossReport(
        marginal_entropy=me,
        conditional_entropy=ce,
        mutual_information=mi,
        regularizer=reg,
        total=-mi + lam * reg,
        lam=lam,
    )


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the trailing axis with max-subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _loss_grad_wrt_probs(probs: np.ndarray, labels: np.ndarray, lam: float, pairs) -> np.ndarray:
    n, d, k = probs.shape
    mean = probs.mean(axis=0)  # (d, k)
    log_mean = np.log(np.maximum(mean, 1e-300))

    # d(-MI)/dp[n,i,j] = (ln pbar[i,j] - ln qbar_y[i,j]) / n. Entries where a
    # class mean underflowed to exactly 0 are zeroed: they are multiplied by
    # that same zero probability in the softmax backward step, so this is exact.
    grad = np.empty_like(probs)
    for y in np.unique(labels):
        member = labels == y
        class_mean = probs[member].mean(axis=0)
        diff = np.where(
            class_mean > 0.0,
            log_mean - np.log(np.maximum(class_mean, 1e-300)),
            0.0,
        )
        grad[member] = diff / n

    if lam > 0.0 and pairs:
        reg_grad = np.zeros_like(probs)
        for a, b in pairs:
            pa, pb = mean[a], mean[b]
            product = np.outer(pa, pb)
            joint = np.einsum("nu,nv->uv", probs[:, a, :], probs[:, b, :]) / n
            clamp_off = joint >= EPS_FLOOR
            logq = np.log(np.maximum(joint, EPS_FLOOR))
            # dKL/dP = ln P - ln Q + 1, with P = pa (x) pb flowing through both
            # marginals; zero-probability cells are zeroed as above.
            with np.errstate(divide="ignore", invalid="ignore"):
                front = np.where(product > 0.0, np.log(product) - logq + 1.0, 0.0)
                # dKL/dQ = -P/Q where the clamp is inactive
                ratio = np.where(clamp_off & (product > 0.0), product / joint, 0.0)
            reg_grad[:, a, :] += (front @ pb)[None, :] / n
            reg_grad[:, b, :] += (pa @ front)[None, :] / n
            reg_grad[:, a, :] -= probs[:, b, :] @ ratio.T / n
            reg_grad[:, b, :] -= probs[:, a, :] @ ratio / n
        grad += (lam / len(pairs)) * reg_grad
    return grad


def loss_gradient(
    logits: np.ndarray, labels: np.ndarray, lam: float = 1.0, pairs=()
) -> np.ndarray:
    """Analytic gradient of total_loss(softmax_rows(logits)) w.r.t. the logits.

    Returns an (n, d, k) array; verified against central finite differences
    in the test suite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    labels = np.asarray(labels)
    pairs = list(pairs)
    probs = softmax_rows(logits)
    gp = _loss_grad_wrt_probs(probs, labels, lam, pairs)
    # softmax backward per row: p * (g - <g, p>)
    inner = (gp * probs).sum(axis=-1, keepdims=True)
    return probs * (gp - inner)
