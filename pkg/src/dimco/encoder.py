"""Feed-forward encoder mapping D-dimensional features to (d, k) logit
matrices through a factorized code head (D -> hidden... -> bottleneck -> k*d),
with manual forward/backward passes in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .codes import EPS_FLOOR, CodeSpec, FileFormatError
from .infomax import softmax_rows

DMDL_MAGIC = b"DMDL"
DMDL_VERSION = 1

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    spec: CodeSpec
    bottleneck: int = 128
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.bottleneck)
        if any(v < 1 for v in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        """Linear-map sizes: input -> hidden... -> bottleneck -> k*d.

        The last two maps form the factorized code head and compose without
        an activation between them.
        """
        return (
            self.input_dim,
            *self.hidden_dims,
            self.bottleneck,
            self.spec.k * self.spec.d,
        )

    @property
    def n_hidden(self) -> int:
        return len(self.hidden_dims)


@dataclass
class EncoderParams:
    config: EncoderConfig
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def as_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_list(cls, config: EncoderConfig, arrays) -> "EncoderParams":
        arrays = list(arrays)
        return cls(config=config, weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init(config: EncoderConfig) -> EncoderParams:
    """Uniform fan-based weights, zero biases; deterministic given the seed."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    dims = config.layer_dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(config=config, weights=weights, biases=biases)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def _forward_cache(params: EncoderParams, inputs: np.ndarray):
    config = params.config
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != config.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != configured {config.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    activations = [x]
    pre = []
    n_hidden = config.n_hidden
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = activations[-1] @ w + b
        pre.append(z)
        if i < n_hidden:
            activations.append(_activate(z, config.activation))
        else:
            activations.append(z)
    return activations, pre


def forward(params: EncoderParams, inputs: np.ndarray) -> np.ndarray:
    """Logits for a batch: (m, d, k)."""
    activations, _ = _forward_cache(params, inputs)
    m = activations[-1].shape[0]
    spec = params.config.spec
    return activations[-1].reshape(m, spec.d, spec.k)


def backward(params: EncoderParams, inputs: np.ndarray, upstream: np.ndarray) -> EncoderParams:
    """Gradients of sum(upstream * logits) with respect to every parameter.

    Returns an EncoderParams-shaped container of gradients.
    """
    config = params.config
    activations, pre = _forward_cache(params, inputs)
    m = activations[0].shape[0]
    spec = config.spec
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (m, spec.d, spec.k):
        raise ValueError(
            f"upstream shape {upstream.shape} != expected {(m, spec.d, spec.k)}"
        )
    delta = upstream.reshape(m, spec.d * spec.k)
    n_hidden = config.n_hidden
    grads_w = [np.empty_like(w) for w in params.weights]
    grads_b = [np.empty_like(b) for b in params.biases]
    for i in range(len(params.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i].T
            if i - 1 < n_hidden:
                delta = delta * _activate_grad(pre[i - 1], config.activation)
    return EncoderParams(config=config, weights=grads_w, biases=grads_b)


def encode_batch(params: EncoderParams, inputs: np.ndarray) -> np.ndarray:
    """Per-item (d, k) probability matrices via row-softmax of the logits.

    Rows are floored at EPS_FLOOR (and renormalized) only when the softmax
    actually underflows, so ordinary outputs are untouched.
    """
    probs = softmax_rows(forward(params, inputs))
    low = probs < EPS_FLOOR
    if low.any():
        probs = np.maximum(probs, EPS_FLOOR)
        probs = probs / probs.sum(axis=-1, keepdims=True)
        probs = np.maximum(probs, EPS_FLOOR)
    return probs


# ---------------------------------------------------------------------------
# DMDL checkpoint: magic, u32 version, config (u32 fields in declaration
# order, hidden_dims length-prefixed, u64 seed), then all parameters as
# little-endian f64 in layer order, row-major.
# ---------------------------------------------------------------------------


def write_checkpoint(path, params: EncoderParams) -> None:
    from .data import atomic_write

    config = params.config
    parts = [DMDL_MAGIC, struct.pack("<I", DMDL_VERSION)]
    parts.append(struct.pack("<II", config.input_dim, len(config.hidden_dims)))
    for h in config.hidden_dims:
        parts.append(struct.pack("<I", h))
    parts.append(
        struct.pack(
            "<IIIIQ",
            config.bottleneck,
            config.spec.k,
            config.spec.d,
            _ACTIVATIONS.index(config.activation),
            config.seed,
        )
    )
    for arr in params.as_list():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    atomic_write(path, b"".join(parts))


def read_checkpoint(path) -> EncoderParams:
    with open(path, "rb") as fh:
        raw = fh.read()

    offset = 0

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if len(raw) < offset + size:
            raise FileFormatError("truncated DMDL file", len(raw))
        vals = struct.unpack_from(fmt, raw, offset)
        offset += size
        return vals

    magic, version = take("<4sI")
    if magic != DMDL_MAGIC:
        raise FileFormatError(f"bad magic {magic!r}", 0)
    if version != DMDL_VERSION:
        raise FileFormatError(f"unsupported DMDL version {version}", 4)
    input_dim, n_hidden = take("<II")
    hidden = tuple(take("<I")[0] for _ in range(n_hidden))
    bottleneck, k, d, act_idx, seed = take("<IIIIQ")
    if act_idx >= len(_ACTIVATIONS):
        raise FileFormatError(f"unknown activation code {act_idx}", offset - 12)
    config = EncoderConfig(
        input_dim=input_dim,
        hidden_dims=hidden,
        spec=CodeSpec(k=k, d=d),
        bottleneck=bottleneck,
        activation=_ACTIVATIONS[act_idx],
        seed=seed,
    )
    params = EncoderParams(config=config)
    dims = config.layer_dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w_count = fan_in * fan_out
        w_bytes = 8 * w_count
        if len(raw) < offset + w_bytes + 8 * fan_out:
            raise FileFormatError("truncated DMDL parameters", len(raw))
        w = np.frombuffer(raw, dtype="<f8", count=w_count, offset=offset)
        params.weights.append(w.reshape(fan_in, fan_out).copy())
        offset += w_bytes
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        params.biases.append(b.copy())
        offset += 8 * fan_out
    if len(raw) != offset:
        raise FileFormatError("trailing bytes after DMDL parameters", offset)
    return params
