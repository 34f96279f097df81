"""Training loop: balanced class batches, Adam updates, per-step loss log."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import infomax


class TrainingDiverged(RuntimeError):
    """Raised when the loss leaves the finite range; carries the partial log."""

    def __init__(self, message: str, log: "TrainLog"):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    classes_per_batch: int | None = None  # None: min(10, class count)
    items_per_class: int = 10
    lam: float = 1.0
    ind_pairs_per_batch: int | None = None  # None: d pairs
    seed: int = 0
    per_class_limit: int | None = None

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.items_per_class < 1:
            raise ValueError("items_per_class must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


@dataclass
class StepRecord:
    epoch: int
    step: int
    marginal_entropy: float
    conditional_entropy: float
    mutual_information: float
    regularizer: float
    total: float


@dataclass
class TrainLog:
    records: list[StepRecord] = field(default_factory=list)
    diverged: bool = False

    def epoch_means(self, fieldname: str) -> np.ndarray:
        if not self.records:
            return np.zeros(0)
        epochs = max(r.epoch for r in self.records) + 1
        sums = np.zeros(epochs)
        counts = np.zeros(epochs)
        for r in self.records:
            sums[r.epoch] += getattr(r, fieldname)
            counts[r.epoch] += 1
        return sums / np.maximum(counts, 1)

    def to_tsv(self) -> str:
        header = (
            "epoch\tstep\tmarginal_entropy\tconditional_entropy\t"
            "mutual_information\tregularizer\ttotal"
        )
        lines = [header]
        for r in self.records:
            lines.append(
                f"{r.epoch}\t{r.step}\t{r.marginal_entropy:.9f}\t"
                f"{r.conditional_entropy:.9f}\t{r.mutual_information:.9f}\t"
                f"{r.regularizer:.9f}\t{r.total:.9f}"
            )
        return "\n".join(lines) + "\n"


def class_pools(labels: np.ndarray, per_class_limit: int | None = None) -> list[np.ndarray]:
    """Indices per class, optionally truncated to the first ``per_class_limit``."""
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    pools = []
    for c in range(n_classes):
        pool = np.flatnonzero(labels == c)
        if per_class_limit is not None:
            pool = pool[:per_class_limit]
        pools.append(pool)
    return pools


def sample_balanced_batch(
    pools: list[np.ndarray],
    classes_per_batch: int,
    items_per_class: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pick classes_per_batch distinct classes, items_per_class items each.

    Classes with fewer items than requested are sampled with replacement, so
    the batch stays balanced even at one stored example per class.
    """
    nonempty = [c for c, p in enumerate(pools) if p.size > 0]
    if classes_per_batch > len(nonempty):
        raise ValueError(
            f"classes_per_batch={classes_per_batch} exceeds the "
            f"{len(nonempty)} populated classes"
        )
    chosen = rng.choice(len(nonempty), size=classes_per_batch, replace=False)
    picks = []
    for ci in chosen:
        pool = pools[nonempty[ci]]
        replace = pool.size < items_per_class
        picks.append(rng.choice(pool, size=items_per_class, replace=replace))
    return np.concatenate(picks)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])


def adam_step(
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place on ``arrays`` and ``state``."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; aborting update")
    state.t += 1
    correct1 = 1.0 - beta1**state.t
    correct2 = 1.0 - beta2**state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        a -= lr * (m / correct1) / (np.sqrt(v / correct2) + eps)


def train(
    data: np.ndarray,
    labels: np.ndarray,
    encoder_config: enc.EncoderConfig,
    config: TrainConfig,
    checkpoint_every: int | None = None,
):
    """Run the full loop: sample balanced batch, loss, gradients, Adam step.

    Returns (params, log) or (params, log, checkpoints) when
    ``checkpoint_every`` (in epochs) is set. Raises TrainingDiverged with the
    partial log attached if the loss leaves the finite range.
    """
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    if data.shape[0] == 0:
        raise ValueError("dataset is empty")
    if data.shape[0] != labels.shape[0]:
        raise ValueError("data and labels disagree on length")

    rng = np.random.default_rng(config.seed)
    pools = class_pools(labels, config.per_class_limit)
    n_classes = len([p for p in pools if p.size > 0])
    cpb = config.classes_per_batch
    if cpb is None:
        cpb = min(10, n_classes)
    batch_size = cpb * config.items_per_class
    steps_per_epoch = max(1, -(-data.shape[0] // batch_size))

    d = encoder_config.spec.d
    n_pairs = config.ind_pairs_per_batch if config.ind_pairs_per_batch is not None else d

    params = enc.init(encoder_config)
    arrays = params.as_list()
    state = AdamState.zeros_like(arrays)
    log = TrainLog()
    checkpoints = []

    for epoch in range(config.epochs):
        for step in range(steps_per_epoch):
            idx = sample_balanced_batch(pools, cpb, config.items_per_class, rng)
            batch_x = data[idx]
            batch_y = labels[idx]
            logits = enc.forward(params, batch_x)
            probs = infomax.softmax_rows(logits)
            pairs = sample_dimension_pairs_for_step(d, n_pairs, config.lam, rng)
            report = infomax.total_loss(probs, batch_y, lam=config.lam, pairs=pairs)
            log.records.append(
                StepRecord(
                    epoch=epoch,
                    step=step,
                    marginal_entropy=report.marginal_entropy,
                    conditional_entropy=report.conditional_entropy,
                    mutual_information=report.mutual_information,
                    regularizer=report.regularizer,
                    total=report.total,
                )
            )
            if not np.isfinite(report.total) or abs(report.total) > 1e6:
                log.diverged = True
                raise TrainingDiverged(
                    f"loss {report.total} at epoch {epoch} step {step}", log
                )
            upstream = infomax.loss_gradient(logits, batch_y, lam=config.lam, pairs=pairs)
            grads = enc.backward(params, batch_x, upstream)
            adam_step(
                arrays,
                grads.as_list(),
                state,
                config.lr,
                config.beta1,
                config.beta2,
                config.adam_eps,
            )
        if checkpoint_every is not None and (epoch + 1) % checkpoint_every == 0:
            checkpoints.append(params.copy())

    if checkpoint_every is not None:
        return params, log, checkpoints
    return params, log


def sample_dimension_pairs_for_step(
    d: int, n_pairs: int, lam: float, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Fresh regularizer pairs each step; empty when disabled or d < 2."""
    if lam <= 0.0 or n_pairs <= 0 or d < 2:
        return []
    return infomax.sample_dimension_pairs(d, n_pairs, rng)
