"""Dual-key cache adapter: sharpness-modulated affinities over two key matrices.

The cache stores one key matrix per encoder view plus a frozen one-hot value
matrix. A query retrieves per-class evidence as sum_j phi(q . key_j) over the
support rows of each class, where phi(x) = exp(-beta * (1 - x)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .banks import EmbeddingBank, check_paired, one_hot, read_block, write_block
from .errors import BankFormatError, BankShapeError, TruncatedBankError
from .validation import as_matrix, check_finite

MKCP_MAGIC = b"MKCP"
MKCP_VERSION = 1
_CP_HEADER = struct.Struct("<4sId")


def phi(x, beta: float):
    """Affinity modulator exp(-beta * (1 - x)); phi(1) == 1, increasing in x."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return np.exp(-beta * (1.0 - np.asarray(x, dtype=np.float64)))


@dataclass
class ZeroShotHead:
    """Per-class text embedding matrix; rows must be unit norm."""

    text_matrix: np.ndarray

    def __post_init__(self):
        self.text_matrix = as_matrix(self.text_matrix, "text head")
        check_finite(self.text_matrix, "text head")
        norms = np.linalg.norm(self.text_matrix, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise BankShapeError("text head rows must be unit norm (within 1e-5)")

    @property
    def n_classes(self) -> int:
        return self.text_matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.text_matrix.shape[1]

    @classmethod
    def from_bank(cls, bank: EmbeddingBank) -> "ZeroShotHead":
        return cls(bank.features)


@dataclass
class CacheModel:
    """Two learnable key matrices over one frozen one-hot value matrix.

    Keys are unit-norm at construction; training may move them off the unit
    sphere, so loaded checkpoints skip the norm check. The two views may have
    different widths.
    """

    keys_clip: np.ndarray
    keys_dino: np.ndarray
    values: np.ndarray
    beta: float = 0.6

    def __post_init__(self):
        self.keys_clip = as_matrix(self.keys_clip, "clip keys")
        self.keys_dino = as_matrix(self.keys_dino, "dino keys")
        self.values = as_matrix(self.values, "values")
        check_finite(self.keys_clip, "clip keys")
        check_finite(self.keys_dino, "dino keys")
        rows = {self.keys_clip.shape[0], self.keys_dino.shape[0], self.values.shape[0]}
        if len(rows) != 1:
            raise BankShapeError(
                "keys and values disagree on rows: "
                f"clip={self.keys_clip.shape[0]} dino={self.keys_dino.shape[0]} "
                f"values={self.values.shape[0]}"
            )
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        ok = np.all(np.isin(self.values, (0.0, 1.0))) and np.all(
            self.values.sum(axis=1) == 1.0
        )
        if not ok:
            raise BankShapeError("values must be one-hot rows")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.values, axis=1)

    @classmethod
    def from_banks(cls, clip_bank: EmbeddingBank, dino_bank: EmbeddingBank,
                   n_classes: int, beta: float = 0.6) -> "CacheModel":
        """Build an untrained cache; key rows must be unit norm here."""
        if clip_bank.labels is None:
            raise BankShapeError("cache construction requires labeled banks")
        check_paired(clip_bank, dino_bank, "cache key banks")
        for name, bank in (("clip", clip_bank), ("dino", dino_bank)):
            norms = np.linalg.norm(bank.features, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-5):
                raise BankShapeError(f"{name} key rows must be unit norm at construction")
        values = one_hot(clip_bank.labels, n_classes)
        return cls(clip_bank.features.copy(), dino_bank.features.copy(), values, beta)

    def copy(self) -> "CacheModel":
        return CacheModel(
            self.keys_clip.copy(), self.keys_dino.copy(), self.values.copy(), self.beta
        )


def zero_shot_logits(queries: np.ndarray, head: ZeroShotHead) -> np.ndarray:
    """Row b, column n = dot(query_b, text_n)."""
    queries = as_matrix(queries, "queries")
    if queries.shape[1] != head.dim:
        raise BankShapeError(
            f"query dim {queries.shape[1]} != text head dim {head.dim}"
        )
    return queries @ head.text_matrix.T


def branch_logits(queries: np.ndarray, keys: np.ndarray, values: np.ndarray,
                  beta: float) -> np.ndarray:
    """Per-class sums of modulated query-key affinities: phi(Q K^T) V."""
    queries = as_matrix(queries, "queries")
    keys = as_matrix(keys, "keys")
    values = as_matrix(values, "values")
    if queries.shape[1] != keys.shape[1]:
        raise BankShapeError(
            f"query dim {queries.shape[1]} != key dim {keys.shape[1]}"
        )
    if keys.shape[0] != values.shape[0]:
        raise BankShapeError(
            f"key rows {keys.shape[0]} != value rows {values.shape[0]}"
        )
    return phi(queries @ keys.T, beta) @ values


def logit_bundle(cache: CacheModel, head: ZeroShotHead, queries_clip: np.ndarray,
                 queries_dino: np.ndarray) -> "LogitBundle":
    """Run both cache branches and the zero-shot head over a query batch."""
    from .ensemble import LogitBundle

    if head.n_classes != cache.n_classes:
        raise BankShapeError(
            f"text head has {head.n_classes} classes, cache has {cache.n_classes}"
        )
    return LogitBundle(
        p_zs=zero_shot_logits(queries_clip, head),
        p_clip=branch_logits(queries_clip, cache.keys_clip, cache.values, cache.beta),
        p_dino=branch_logits(queries_dino, cache.keys_dino, cache.values, cache.beta),
    )


def fused_logits(cache: CacheModel, head: ZeroShotHead, queries_clip: np.ndarray,
                 queries_dino: np.ndarray, mode: str = "adaptive_zs_base") -> np.ndarray:
    """Full evaluation pipeline: branch logits, z-scoring, mode fusion."""
    from .ensemble import fuse

    return fuse(logit_bundle(cache, head, queries_clip, queries_dino), mode)


def save_cache(path, cache: CacheModel) -> None:
    """Checkpoint: MKCP header then three label-free MKEB blocks."""
    with open(path, "wb") as fh:
        fh.write(_CP_HEADER.pack(MKCP_MAGIC, MKCP_VERSION, cache.beta))
        write_block(fh, EmbeddingBank(cache.keys_clip))
        write_block(fh, EmbeddingBank(cache.keys_dino))
        write_block(fh, EmbeddingBank(cache.values))


def load_cache(path) -> CacheModel:
    with open(path, "rb") as fh:
        header = fh.read(_CP_HEADER.size)
        if len(header) != _CP_HEADER.size:
            raise TruncatedBankError(f"{path}: truncated MKCP header")
        magic, version, beta = _CP_HEADER.unpack(header)
        if magic != MKCP_MAGIC:
            raise BankFormatError(f"bad magic {magic!r}, expected {MKCP_MAGIC!r}")
        if version != MKCP_VERSION:
            raise BankFormatError(f"unsupported MKCP version {version}")
        keys_clip = read_block(fh)
        keys_dino = read_block(fh)
        values = read_block(fh)
        if fh.read(1):
            raise BankShapeError(f"{path}: trailing bytes after declared payload")
    return CacheModel(keys_clip.features, keys_dino.features, values.features, beta)
