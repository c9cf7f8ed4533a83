"""Logit fusion: per-sample z-scoring, distribution-similarity weights, modes.

All modes first z-score each branch's logit vector across the class axis
(population std), which makes the fused argmax invariant to positive affine
transforms of any raw branch. The adaptive modes weight the two cache branches
by softmax of their dot products with a base distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLogitsError
from .validation import as_matrix, check_finite

MODES = (
    "adaptive_zs_base",
    "adaptive_clip_base",
    "adaptive_dino_base",
    "average",
    "maximum",
    "clip_only",
    "dino_only",
)

_ADAPTIVE_BASE = {
    "adaptive_zs_base": "zs",
    "adaptive_clip_base": "clip",
    "adaptive_dino_base": "dino",
}


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown ensemble mode {mode!r}, expected one of {MODES}")
    return mode


def z_normalize(logits: np.ndarray) -> np.ndarray:
    """Per-row zero mean, unit population std. Constant rows are an error."""
    z, _ = z_normalize_with_std(logits)
    return z


def z_normalize_with_std(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """As z_normalize, also returning the per-row population std (for chain rules)."""
    arr = np.asarray(logits, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    arr = as_matrix(arr, "logits")
    check_finite(arr, "logits")
    if arr.shape[1] < 2:
        raise ValueError(f"need at least 2 classes to z-score, got {arr.shape[1]}")
    # exact-constant detection; a std threshold would misfire on rows whose
    # mean rounds away from the repeated value
    spread = arr.max(axis=1) - arr.min(axis=1)
    if np.any(spread == 0.0):
        bad = int(np.flatnonzero(spread == 0.0)[0])
        raise DegenerateLogitsError(
            f"logit row {bad} is constant across classes; cannot z-score"
        )
    mean = arr.mean(axis=1, keepdims=True)
    std = np.sqrt(np.mean((arr - mean) ** 2, axis=1, keepdims=True))
    z = (arr - mean) / std
    if squeeze:
        return z[0], std[:, 0]
    return z, std[:, 0]


def similarity_weights(p_clip_n: np.ndarray, p_dino_n: np.ndarray,
                       base_n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample dot of each normalized branch with the normalized base."""
    p_clip_n = np.asarray(p_clip_n, dtype=np.float64)
    p_dino_n = np.asarray(p_dino_n, dtype=np.float64)
    base_n = np.asarray(base_n, dtype=np.float64)
    w_clip = np.sum(p_clip_n * base_n, axis=-1)
    w_dino = np.sum(p_dino_n * base_n, axis=-1)
    return w_clip, w_dino


def softmax_pair(w_clip: np.ndarray, w_dino: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-way softmax with max-subtraction stabilization."""
    w_clip = np.asarray(w_clip, dtype=np.float64)
    w_dino = np.asarray(w_dino, dtype=np.float64)
    m = np.maximum(w_clip, w_dino)
    e_clip = np.exp(w_clip - m)
    e_dino = np.exp(w_dino - m)
    total = e_clip + e_dino
    return e_clip / total, e_dino / total


@dataclass
class LogitBundle:
    """The three branch logits for a batch, plus fusion outputs once fused."""

    p_zs: np.ndarray
    p_clip: np.ndarray
    p_dino: np.ndarray
    p_en: np.ndarray | None = field(default=None)
    w_clip: np.ndarray | None = field(default=None)
    w_dino: np.ndarray | None = field(default=None)
    a_clip: np.ndarray | None = field(default=None)
    a_dino: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.p_zs = as_matrix(self.p_zs, "p_zs")
        self.p_clip = as_matrix(self.p_clip, "p_clip")
        self.p_dino = as_matrix(self.p_dino, "p_dino")
        if self.p_zs.shape != self.p_clip.shape or self.p_zs.shape != self.p_dino.shape:
            raise ValueError(
                "branch logits disagree on shape: "
                f"{self.p_zs.shape} / {self.p_clip.shape} / {self.p_dino.shape}"
            )
        for name, arr in (("p_zs", self.p_zs), ("p_clip", self.p_clip),
                          ("p_dino", self.p_dino)):
            check_finite(arr, name)


def fuse_normalized(u: np.ndarray, v: np.ndarray, t: np.ndarray,
                    mode: str) -> tuple[np.ndarray, dict]:
    """Fuse already z-scored branches (u=zero-shot, v=clip, t=dino).

    Returns the fused matrix and the intermediates the trainer's backward
    pass needs (weights for adaptive modes, the max mask for maximum).
    """
    check_mode(mode)
    state: dict = {"mode": mode}
    if mode in _ADAPTIVE_BASE:
        base = {"zs": u, "clip": v, "dino": t}[_ADAPTIVE_BASE[mode]]
        w_clip, w_dino = similarity_weights(v, t, base)
        a_clip, a_dino = softmax_pair(w_clip, w_dino)
        fused = u + a_clip[:, None] * v + a_dino[:, None] * t
        state.update(w_clip=w_clip, w_dino=w_dino, a_clip=a_clip, a_dino=a_dino,
                     base=_ADAPTIVE_BASE[mode])
    elif mode == "average":
        fused = u + 0.5 * (v + t)
    elif mode == "maximum":
        mask = v >= t
        fused = u + np.where(mask, v, t)
        state["max_mask"] = mask
    elif mode == "clip_only":
        fused = u + v
    else:  # dino_only
        fused = u + t
    return fused, state


def fuse(bundle: LogitBundle, mode: str = "adaptive_zs_base") -> np.ndarray:
    """Z-score all three branches per sample, then combine per the mode.

    Fills the bundle's p_en and, for adaptive modes, the similarity weights
    and their softmax.
    """
    u = z_normalize(bundle.p_zs)
    v = z_normalize(bundle.p_clip)
    t = z_normalize(bundle.p_dino)
    fused, state = fuse_normalized(u, v, t, mode)
    bundle.p_en = fused
    bundle.w_clip = state.get("w_clip")
    bundle.w_dino = state.get("w_dino")
    bundle.a_clip = state.get("a_clip")
    bundle.a_dino = state.get("a_dino")
    return fused
