"""Discrete infomax codes: learn k-way d-dimensional codes that maximize the
empirical mutual information with labels, retrieve by probabilistic Hamming
similarity, and compare against classical quantizers.
"""

from .bound import BoundInputs, lemma1_bound, monte_carlo_verify, theorem1_gap
from .codes import (
    EPS_FLOOR,
    CodeSpec,
    FileFormatError,
    PackedCodes,
    argmax_codeword,
    hamming_distance,
    log_prob_similarity,
    pack,
    partial_code_score,
    read_dcod,
    unpack,
    unpack_all,
    write_dcod,
)
from .data import LabeledEmbeddings, SynthSpec, gen_synth, read_embeddings, write_embeddings
from .encoder import (
    EncoderConfig,
    EncoderParams,
    encode_batch,
    forward,
    init,
    read_checkpoint,
    write_checkpoint,
)
from .infomax import (
    LossReport,
    categorical_entropy,
    conditional_entropy_estimate,
    independence_regularizer,
    loss_gradient,
    marginal_entropy_estimate,
    mutual_information_estimate,
    total_loss,
)
from .quantizers import (
    PQCodebook,
    SQCodebook,
    compression_rate,
    kmeans,
    pq_encode,
    pq_train,
    sq_encode,
    sq_train,
)
from .retrieval import (
    CodeDatabase,
    EpisodeSpec,
    build_database,
    fewshot_episode,
    knn_top1,
    metric_correlation,
    query_topk,
    recall_at,
)
from .trainer import TrainConfig, TrainingDiverged, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "BoundInputs", "lemma1_bound", "monte_carlo_verify", "theorem1_gap",
    "EPS_FLOOR", "CodeSpec", "FileFormatError", "PackedCodes",
    "argmax_codeword", "hamming_distance", "log_prob_similarity", "pack",
    "partial_code_score", "read_dcod", "unpack", "unpack_all", "write_dcod",
    "LabeledEmbeddings", "SynthSpec", "gen_synth", "read_embeddings",
    "write_embeddings", "EncoderConfig", "EncoderParams", "encode_batch",
    "forward", "init", "read_checkpoint", "write_checkpoint", "LossReport",
    "categorical_entropy", "conditional_entropy_estimate",
    "independence_regularizer", "loss_gradient", "marginal_entropy_estimate",
    "mutual_information_estimate", "total_loss", "PQCodebook", "SQCodebook",
    "compression_rate", "kmeans", "pq_encode", "pq_train", "sq_encode",
    "sq_train", "CodeDatabase", "EpisodeSpec", "build_database",
    "fewshot_episode", "knn_top1", "metric_correlation", "query_topk",
    "recall_at", "TrainConfig", "TrainingDiverged", "adam_step", "train",
    "__version__",
]
