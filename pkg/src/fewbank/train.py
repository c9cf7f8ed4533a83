"""Fine-tuning of the cache keys: cross-entropy on the fused logits,
hand-derived reverse-mode gradients, AdamW with decoupled decay, cosine LR.

Only the two key matrices receive gradients; the text head, the value matrix,
and the query features stay frozen throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adapter import CacheModel, ZeroShotHead, phi, zero_shot_logits
from .ensemble import check_mode, fuse_normalized, z_normalize_with_std
from .errors import BankShapeError
from .metrics import log_softmax
from .metrics import nll as _mean_nll
from .validation import as_matrix, check_labels


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr0: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    beta_sharpness: float = 0.6
    mode: str = "adaptive_zs_base"
    detach_weights: bool = False
    loss_branch: bool = False

    def validate(self) -> "TrainConfig":
        # epochs=0 is a supported no-op (untrained cache passthrough)
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("optimizer betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.beta_sharpness <= 0:
            raise ValueError(f"beta_sharpness must be positive, got {self.beta_sharpness}")
        check_mode(self.mode)
        return self


def ce_loss(fused_logits: np.ndarray, labels) -> float:
    """Mean -log softmax(fused)[label]; same quantity the metrics report as NLL."""
    return _mean_nll(fused_logits, labels)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at step 0 to 0 at step == total_steps."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class AdamWState:
    """First/second moment accumulators for one parameter matrix."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamWState":
        return cls(np.zeros_like(param), np.zeros_like(param))


def adamw_step(param: np.ndarray, grad: np.ndarray, state: AdamWState,
               lr: float, cfg: TrainConfig) -> None:
    """One bias-corrected update in place; weight decay is decoupled
    (lr * wd * param subtracted separately, using the pre-update param)."""
    if param.shape != grad.shape or param.shape != state.m.shape:
        raise BankShapeError("param/grad/state shapes disagree")
    state.step += 1
    t = state.step
    state.m[...] = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    state.v[...] = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1 ** t)
    v_hat = state.v / (1.0 - cfg.beta2 ** t)
    param -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps) + lr * cfg.weight_decay * param


def _znorm_backward(h: np.ndarray, z: np.ndarray, std: np.ndarray) -> np.ndarray:
    # d/dp of z=(p-mean)/std given upstream h: (h - mean(h) - z*mean(h*z)) / std
    n = h.shape[1]
    h_bar = h.sum(axis=1, keepdims=True) / n
    hz_bar = (h * z).sum(axis=1, keepdims=True) / n
    return (h - h_bar - z * hz_bar) / std[:, None]


def loss_and_key_grads(
    cache: CacheModel,
    head: ZeroShotHead,
    queries_clip: np.ndarray,
    queries_dino: np.ndarray,
    labels,
    mode: str = "adaptive_zs_base",
    detach_weights: bool = False,
    loss_branch: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Cross-entropy of the fused batch and its exact gradients w.r.t. both keys.

    The chain runs through phi, the per-sample z-scoring, the similarity
    weights, and the two-way softmax. detach_weights treats the softmax
    weights as constants; loss_branch swaps the objective for the unweighted
    sum of the three normalized logits.
    """
    queries_clip = as_matrix(queries_clip, "clip queries")
    queries_dino = as_matrix(queries_dino, "dino queries")
    labels = check_labels(labels, cache.n_classes)
    beta = cache.beta
    b = queries_clip.shape[0]

    # forward, keeping intermediates
    aff_clip = queries_clip @ cache.keys_clip.T
    aff_dino = queries_dino @ cache.keys_dino.T
    mod_clip = phi(aff_clip, beta)
    mod_dino = phi(aff_dino, beta)
    p_clip = mod_clip @ cache.values
    p_dino = mod_dino @ cache.values
    p_zs = zero_shot_logits(queries_clip, head)

    u, _ = z_normalize_with_std(p_zs)
    v, std_v = z_normalize_with_std(p_clip)
    t, std_t = z_normalize_with_std(p_dino)

    if loss_branch:
        out = u + v + t
        state = {"mode": "branch_sum"}
    else:
        out, state = fuse_normalized(u, v, t, mode)

    loss = ce_loss(out, labels)

    # d loss / d out for the batch mean of -log softmax
    g = np.exp(log_softmax(out))
    g[np.arange(b), labels] -= 1.0
    g /= b

    # fuse backward: gradients w.r.t. the normalized branch vectors v, t
    if state["mode"] == "branch_sum":
        dv, dt = g.copy(), g.copy()
    elif mode in ("adaptive_zs_base", "adaptive_clip_base", "adaptive_dino_base"):
        a_clip, a_dino = state["a_clip"], state["a_dino"]
        dv = a_clip[:, None] * g
        dt = a_dino[:, None] * g
        if not detach_weights:
            s_clip = (g * v).sum(axis=1)
            s_dino = (g * t).sum(axis=1)
            s_bar = a_clip * s_clip + a_dino * s_dino
            dw_clip = a_clip * (s_clip - s_bar)
            dw_dino = a_dino * (s_dino - s_bar)
            base_name = state["base"]
            base = {"zs": u, "clip": v, "dino": t}[base_name]
            dv += dw_clip[:, None] * base
            dt += dw_dino[:, None] * base
            dbase = dw_clip[:, None] * v + dw_dino[:, None] * t
            if base_name == "clip":
                dv += dbase
            elif base_name == "dino":
                dt += dbase
            # zs base: the gradient into u ends at the frozen text head
    elif mode == "average":
        dv, dt = 0.5 * g, 0.5 * g
    elif mode == "maximum":
        mask = state["max_mask"]
        dv = np.where(mask, g, 0.0)
        dt = np.where(mask, 0.0, g)
    elif mode == "clip_only":
        dv, dt = g.copy(), np.zeros_like(g)
    else:  # dino_only
        dv, dt = np.zeros_like(g), g.copy()

    # z-scoring backward, then phi(Q K^T) V backward for each branch
    dp_clip = _znorm_backward(dv, v, std_v)
    dp_dino = _znorm_backward(dt, t, std_t)
    daff_clip = (dp_clip @ cache.values.T) * (beta * mod_clip)
    daff_dino = (dp_dino @ cache.values.T) * (beta * mod_dino)
    dkeys_clip = daff_clip.T @ queries_clip
    dkeys_dino = daff_dino.T @ queries_dino
    return loss, dkeys_clip, dkeys_dino


@dataclass
class TrainResult:
    cache: CacheModel
    epoch_losses: list[float] = field(default_factory=list)


def train(
    cache: CacheModel,
    head: ZeroShotHead,
    support_clip: np.ndarray,
    support_dino: np.ndarray,
    labels,
    cfg: TrainConfig,
) -> TrainResult:
    """Fine-tune both key matrices on the expanded support set.

    The support features double as the (frozen) query batch; only the keys
    move. Deterministic for a fixed seed: one generator drives the per-epoch
    shuffles, batches keep their slice order, and the last partial batch is
    kept. Returns a cache copy and the per-epoch mean loss trace.
    """
    cfg.validate()
    support_clip = as_matrix(support_clip, "clip support")
    support_dino = as_matrix(support_dino, "dino support")
    labels = check_labels(labels, cache.n_classes)
    n = support_clip.shape[0]
    if n == 0:
        raise BankShapeError("cannot train on an empty support set")
    if support_dino.shape[0] != n or labels.shape[0] != n:
        raise BankShapeError("support views and labels disagree on rows")

    trained = cache.copy()
    if cfg.epochs == 0:
        return TrainResult(trained, [])

    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * batches_per_epoch
    rng = np.random.default_rng(cfg.seed)
    opt_clip = AdamWState.like(trained.keys_clip)
    opt_dino = AdamWState.like(trained.keys_dino)

    step = 0
    losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, d_clip, d_dino = loss_and_key_grads(
                trained, head,
                support_clip[idx], support_dino[idx], labels[idx],
                mode=cfg.mode,
                detach_weights=cfg.detach_weights,
                loss_branch=cfg.loss_branch,
            )
            lr = cosine_lr(step, total_steps, cfg.lr0)
            adamw_step(trained.keys_clip, d_clip, opt_clip, lr, cfg)
            adamw_step(trained.keys_dino, d_dino, opt_dino, lr, cfg)
            step += 1
            epoch_loss += loss * idx.shape[0]
        losses.append(epoch_loss / n)
    return TrainResult(trained, losses)
