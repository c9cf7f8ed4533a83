"""Few-shot classification over dual embedding banks.

A key-value cache holds two encoders' support features over shared one-hot
values; queries retrieve per-class evidence through a sharpness-modulated
affinity, the three resulting logit vectors are z-scored and fused with
adaptive distribution-similarity weights, and the cache keys can be
fine-tuned by gradient descent. Everything operates on precomputed embedding
banks stored in a small binary format.
"""

from .adapter import (
    CacheModel,
    ZeroShotHead,
    branch_logits,
    fused_logits,
    load_cache,
    logit_bundle,
    phi,
    save_cache,
    zero_shot_logits,
)
from .banks import (
    EmbeddingBank,
    Manifest,
    load_bank,
    load_manifest,
    one_hot,
    sample_support,
    write_bank,
    write_manifest,
)
from .ensemble import (
    MODES,
    LogitBundle,
    fuse,
    similarity_weights,
    softmax_pair,
    z_normalize,
)
from .errors import (
    BankFormatError,
    BankShapeError,
    DataError,
    DegenerateLogitsError,
    EngineError,
    InsufficientCandidatesError,
    InsufficientShotsError,
    LabelRangeError,
    ManifestError,
    NonFiniteDataError,
    TruncatedBankError,
    ZeroVectorError,
)
from .estimator import FusionCacheClassifier
from .expansion import (
    CandidatePool,
    expand_support,
    filter_top_k,
    load_scores,
    recompute_scores,
    write_scores,
)
from .metrics import EvalReport, accuracy, aurc, evaluate, nll
from .train import TrainConfig, TrainResult, adamw_step, ce_loss, cosine_lr, train

__all__ = [
    "BankFormatError",
    "BankShapeError",
    "CacheModel",
    "CandidatePool",
    "DataError",
    "DegenerateLogitsError",
    "EmbeddingBank",
    "EngineError",
    "EvalReport",
    "FusionCacheClassifier",
    "InsufficientCandidatesError",
    "InsufficientShotsError",
    "LabelRangeError",
    "LogitBundle",
    "MODES",
    "Manifest",
    "ManifestError",
    "NonFiniteDataError",
    "TrainConfig",
    "TrainResult",
    "TruncatedBankError",
    "ZeroShotHead",
    "ZeroVectorError",
    "accuracy",
    "adamw_step",
    "aurc",
    "branch_logits",
    "ce_loss",
    "cosine_lr",
    "evaluate",
    "expand_support",
    "filter_top_k",
    "fuse",
    "fused_logits",
    "load_bank",
    "load_cache",
    "load_manifest",
    "load_scores",
    "logit_bundle",
    "nll",
    "one_hot",
    "phi",
    "recompute_scores",
    "sample_support",
    "save_cache",
    "similarity_weights",
    "softmax_pair",
    "train",
    "write_bank",
    "write_manifest",
    "write_scores",
    "z_normalize",
    "zero_shot_logits",
]

__version__ = "0.1.0"
