"""Embedding banks, the MKEB file format, dataset manifests, and support sampling.

MKEB layout (little-endian):
    magic "MKEB" | version u32=1 | rows u64 | dim u32 | label flag u8 | 3 zero bytes
    rows*dim float32 row-major | [rows u32 labels if flag]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BankFormatError,
    BankShapeError,
    InsufficientShotsError,
    ManifestError,
    TruncatedBankError,
)
from .validation import as_matrix, check_finite, check_labels, l2_normalize

MKEB_MAGIC = b"MKEB"
MKEB_VERSION = 1
_HEADER = struct.Struct("<4sIQIB3s")


@dataclass
class EmbeddingBank:
    """A rows x dim matrix of feature vectors with optional per-row class labels.

    Features are float64 in memory; files store float32. Rows are expected to
    be unit-norm once loaded with normalization on.
    """

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
                raise BankShapeError(
                    f"labels shape {self.labels.shape} does not match "
                    f"{self.features.shape[0]} rows"
                )

    @property
    def rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def normalized(self) -> "EmbeddingBank":
        return EmbeddingBank(l2_normalize(self.features), self.labels)


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedBankError(f"expected {n} bytes for {what}, got {len(data)}")
    return data


def read_block(fh) -> EmbeddingBank:
    """Read one MKEB block from an open binary stream (no normalization)."""
    header = _read_exact(fh, _HEADER.size, "MKEB header")
    magic, version, rows, dim, flag, _reserved = _HEADER.unpack(header)
    if magic != MKEB_MAGIC:
        raise BankFormatError(f"bad magic {magic!r}, expected {MKEB_MAGIC!r}")
    if version != MKEB_VERSION:
        raise BankFormatError(f"unsupported MKEB version {version}")
    if flag not in (0, 1):
        raise BankFormatError(f"label flag must be 0 or 1, got {flag}")
    if rows == 0 or dim == 0:
        raise BankShapeError(f"bank must be non-empty, header says {rows}x{dim}")
    payload = _read_exact(fh, rows * dim * 4, "feature payload")
    features = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).astype(np.float64)
    labels = None
    if flag:
        raw = _read_exact(fh, rows * 4, "label payload")
        labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    check_finite(features, "bank features")
    return EmbeddingBank(features, labels)


def write_block(fh, bank: EmbeddingBank) -> None:
    """Write one MKEB block to an open binary stream."""
    if bank.rows == 0 or bank.dim == 0:
        raise BankShapeError(f"refusing to write empty bank {bank.rows}x{bank.dim}")
    check_finite(bank.features, "bank features")
    flag = 1 if bank.labels is not None else 0
    fh.write(_HEADER.pack(MKEB_MAGIC, MKEB_VERSION, bank.rows, bank.dim, flag, b"\0\0\0"))
    fh.write(np.ascontiguousarray(bank.features, dtype="<f4").tobytes())
    if flag:
        if bank.labels.size and bank.labels.min() < 0:
            raise BankShapeError("labels must be non-negative to serialize as u32")
        fh.write(np.ascontiguousarray(bank.labels, dtype="<u4").tobytes())


def load_bank(path, normalize: bool = True) -> EmbeddingBank:
    """Load an MKEB file; rows are L2-normalized unless normalize is off."""
    with open(path, "rb") as fh:
        bank = read_block(fh)
        if fh.read(1):
            raise BankShapeError(f"{path}: trailing bytes after declared payload")
    if normalize:
        bank = bank.normalized()
    return bank


def write_bank(path, bank: EmbeddingBank) -> None:
    with open(path, "wb") as fh:
        write_block(fh, bank)


def one_hot(labels, n_classes: int) -> np.ndarray:
    """Index list -> rows x n_classes matrix with a single 1 per row."""
    labels = check_labels(labels, n_classes)
    out = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def sample_support_indices(labels: np.ndarray, shots: int, seed: int,
                           n_classes: int | None = None) -> np.ndarray:
    """Pick `shots` row indices per class, uniform without replacement.

    Selection shuffles within-class positions with one seeded generator,
    consuming classes in ascending order; the chosen rows are returned in
    file order (ascending index) within each class group.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    if shots < 0:
        raise ValueError(f"shots must be >= 0, got {shots}")
    rng = np.random.default_rng(seed)
    picked = []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size < shots:
            raise InsufficientShotsError(
                f"class {c} has {idx.size} rows, need {shots}"
            )
        sel = rng.permutation(idx.size)[:shots]
        picked.append(np.sort(idx[sel]))
    if not picked:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(picked)


def sample_support(bank: EmbeddingBank, shots: int, seed: int,
                   n_classes: int | None = None) -> EmbeddingBank:
    """N-way `shots`-shot subset of a labeled bank, deterministic for a seed."""
    if bank.labels is None:
        raise BankShapeError("support sampling requires a labeled bank")
    idx = sample_support_indices(bank.labels, shots, seed, n_classes)
    return EmbeddingBank(bank.features[idx].copy(), bank.labels[idx].copy())


def check_paired(a: EmbeddingBank, b: EmbeddingBank, what: str = "paired banks") -> None:
    """Paired banks must agree row-for-row on ordering and labels."""
    if a.rows != b.rows:
        raise BankShapeError(f"{what} disagree on rows: {a.rows} vs {b.rows}")
    if (a.labels is None) != (b.labels is None):
        raise BankShapeError(f"{what}: one side is labeled, the other is not")
    if a.labels is not None and not np.array_equal(a.labels, b.labels):
        raise BankShapeError(f"{what} disagree on labels")


@dataclass
class Manifest:
    """Dataset manifest: class names, shot count, seed, and named bank paths."""

    class_names: list[str]
    shots: int
    seed: int
    banks: dict[str, str] = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def bank_path(self, name: str) -> Path:
        if name not in self.banks:
            raise ManifestError(f"manifest has no bank named {name!r}")
        return self.root / self.banks[name]

    def has_bank(self, name: str) -> bool:
        return name in self.banks

    def load(self, name: str, normalize: bool = True) -> EmbeddingBank:
        return load_bank(self.bank_path(name), normalize=normalize)


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    for key in ("class_names", "shots", "seed", "banks"):
        if key not in raw:
            raise ManifestError(f"manifest {path} is missing {key!r}")
    names = raw["class_names"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ManifestError("class_names must be a list of strings")
    if len(names) < 2:
        raise ManifestError(f"need at least 2 classes, got {len(names)}")
    shots = raw["shots"]
    seed = raw["seed"]
    if not isinstance(shots, int) or shots < 0:
        raise ManifestError(f"shots must be a non-negative integer, got {shots!r}")
    if not isinstance(seed, int) or seed < 0:
        raise ManifestError(f"seed must be a non-negative integer, got {seed!r}")
    banks = raw["banks"]
    if not isinstance(banks, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in banks.items()
    ):
        raise ManifestError("banks must map names to relative paths")
    return Manifest(list(names), shots, seed, dict(banks), path.parent)


def write_manifest(path, manifest: Manifest) -> None:
    payload = {
        "class_names": manifest.class_names,
        "shots": manifest.shots,
        "seed": manifest.seed,
        "banks": manifest.banks,
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
