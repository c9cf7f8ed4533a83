"""Support-set expansion: top-k selection from a scored candidate pool.

Candidates arrive as two row-aligned banks (one per encoder view) plus a
sidecar score file. MKSC layout (little-endian):
    magic "MKSC" | version u32=1 | rows u64 | rows*float32 scores
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .banks import EmbeddingBank, check_paired, one_hot
from .errors import (
    BankFormatError,
    BankShapeError,
    InsufficientCandidatesError,
    NonFiniteDataError,
    TruncatedBankError,
)

MKSC_MAGIC = b"MKSC"
MKSC_VERSION = 1
_SC_HEADER = struct.Struct("<4sIQ")


@dataclass
class CandidatePool:
    """Scored candidates in both encoder spaces, row-aligned with shared labels."""

    clip: EmbeddingBank
    dino: EmbeddingBank
    scores: np.ndarray

    def __post_init__(self):
        if self.clip.labels is None:
            raise BankShapeError("candidate pool requires labeled banks")
        check_paired(self.clip, self.dino, "candidate banks")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or self.scores.shape[0] != self.clip.rows:
            raise BankShapeError(
                f"scores shape {self.scores.shape} does not match "
                f"{self.clip.rows} candidates"
            )
        if not np.all(np.isfinite(self.scores)):
            raise NonFiniteDataError("candidate scores contain non-finite values")

    @property
    def rows(self) -> int:
        return self.clip.rows

    @property
    def labels(self) -> np.ndarray:
        return self.clip.labels

    def take(self, idx: np.ndarray) -> "CandidatePool":
        return CandidatePool(
            EmbeddingBank(self.clip.features[idx].copy(), self.clip.labels[idx].copy()),
            EmbeddingBank(self.dino.features[idx].copy(), self.dino.labels[idx].copy()),
            self.scores[idx].copy(),
        )


def load_scores(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_SC_HEADER.size)
        if len(header) != _SC_HEADER.size:
            raise TruncatedBankError(f"{path}: truncated MKSC header")
        magic, version, rows = _SC_HEADER.unpack(header)
        if magic != MKSC_MAGIC:
            raise BankFormatError(f"bad magic {magic!r}, expected {MKSC_MAGIC!r}")
        if version != MKSC_VERSION:
            raise BankFormatError(f"unsupported MKSC version {version}")
        payload = fh.read(rows * 4)
        if len(payload) != rows * 4:
            raise TruncatedBankError(f"{path}: expected {rows} scores")
        if fh.read(1):
            raise BankShapeError(f"{path}: trailing bytes after declared payload")
    scores = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteDataError(f"{path}: scores contain non-finite values")
    return scores


def write_scores(path, scores) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteDataError("scores contain non-finite values")
    with open(path, "wb") as fh:
        fh.write(_SC_HEADER.pack(MKSC_MAGIC, MKSC_VERSION, scores.shape[0]))
        fh.write(np.ascontiguousarray(scores, dtype="<f4").tobytes())


def recompute_scores(pool: CandidatePool, text_matrix: np.ndarray) -> np.ndarray:
    """Score each candidate as the dot of its clip-view row with its class text row."""
    text_matrix = np.asarray(text_matrix, dtype=np.float64)
    if text_matrix.shape[1] != pool.clip.dim:
        raise BankShapeError(
            f"text head dim {text_matrix.shape[1]} != candidate dim {pool.clip.dim}"
        )
    return np.einsum("ij,ij->i", pool.clip.features, text_matrix[pool.labels])


def filter_top_k(pool: CandidatePool, k_per_class: int) -> CandidatePool:
    """Keep the k highest-scoring candidates of every class present in the pool.

    Ties break toward the lower original row index; the two views are sliced
    with the same indices. Output groups classes in ascending order, keeping
    file order within each class, which makes the operation idempotent.
    """
    if k_per_class < 0:
        raise ValueError(f"k must be >= 0, got {k_per_class}")
    selected = []
    for c in np.unique(pool.labels):
        idx = np.flatnonzero(pool.labels == c)
        if idx.size < k_per_class:
            raise InsufficientCandidatesError(
                f"class {int(c)} has {idx.size} candidates, need {k_per_class}"
            )
        # stable sort on negated scores: equal scores keep ascending index
        order = np.argsort(-pool.scores[idx], kind="stable")[:k_per_class]
        selected.append(np.sort(idx[order]))
    if not selected:
        idx = np.zeros(0, dtype=np.int64)
    else:
        idx = np.concatenate(selected)
    return pool.take(idx)


def expand_support(
    support_clip: EmbeddingBank | None,
    support_dino: EmbeddingBank | None,
    filtered: CandidatePool | None,
    n_classes: int | None = None,
) -> tuple[EmbeddingBank, EmbeddingBank, np.ndarray]:
    """Merge real support rows with filtered synthetic rows.

    Synthetic rows are appended after the real block, grouped by class. Either
    side may be absent: shots=0 gives a purely synthetic cache, k'=0 keeps the
    real support as-is. Returns the merged clip/dino banks and the regenerated
    one-hot value matrix.
    """
    if support_clip is None and filtered is None:
        raise BankShapeError("nothing to merge: no support rows and no candidates")
    if (support_clip is None) != (support_dino is None):
        raise BankShapeError("support banks must be given for both views or neither")

    parts_clip, parts_dino, parts_labels = [], [], []
    if support_clip is not None and support_clip.rows:
        if support_clip.labels is None:
            raise BankShapeError("support banks must carry labels")
        check_paired(support_clip, support_dino, "support banks")
        parts_clip.append(support_clip.features)
        parts_dino.append(support_dino.features)
        parts_labels.append(support_clip.labels)
    if filtered is not None and filtered.rows:
        if parts_clip:
            if filtered.clip.dim != support_clip.dim:
                raise BankShapeError(
                    f"candidate clip dim {filtered.clip.dim} != support dim "
                    f"{support_clip.dim}"
                )
            if filtered.dino.dim != support_dino.dim:
                raise BankShapeError(
                    f"candidate dino dim {filtered.dino.dim} != support dim "
                    f"{support_dino.dim}"
                )
        parts_clip.append(filtered.clip.features)
        parts_dino.append(filtered.dino.features)
        parts_labels.append(filtered.labels)
    if not parts_clip:
        raise BankShapeError("merge produced zero rows")

    labels = np.concatenate(parts_labels)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    merged_clip = EmbeddingBank(np.vstack(parts_clip), labels.copy())
    merged_dino = EmbeddingBank(np.vstack(parts_dino), labels.copy())
    return merged_clip, merged_dino, one_hot(labels, n_classes)
