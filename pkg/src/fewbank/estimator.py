"""Scikit-learn style wrapper so the cache-fusion classifier composes with
pipelines, grid search, and cloning.

X stacks the two encoder views side by side: columns [0, clip_dim) are the
first view, the rest the second. With clip_dim=None both branches share the
full feature block (single-view operation).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .adapter import CacheModel, ZeroShotHead, fused_logits
from .ensemble import check_mode
from .errors import BankShapeError
from .metrics import log_softmax
from .train import TrainConfig, train
from .validation import as_matrix, check_finite, l2_normalize


class FusionCacheClassifier(BaseEstimator, ClassifierMixin):
    """Few-shot classifier over a dual-key cache with adaptive logit fusion.

    Parameters
    ----------
    clip_dim : int or None
        Width of the first view inside X; None means both views use all of X.
    text_head : array of shape (n_classes, clip view dim) or None
        Per-class text embeddings, row order matching sorted class labels.
        None falls back to normalized class centroids of the first view.
    beta : float
        Affinity sharpness.
    mode : str
        Ensemble mode, one of fewbank.MODES.
    epochs, batch_size, lr, weight_decay, seed : training hyperparameters;
        epochs=0 keeps the cache training-free.
    normalize : bool
        L2-normalize view rows of X (both in fit and predict).
    """

    def __init__(self, clip_dim=None, text_head=None, beta=0.6,
                 mode="adaptive_zs_base", epochs=0, batch_size=64, lr=1e-4,
                 weight_decay=0.01, seed=0, normalize=True,
                 detach_weights=False, loss_branch=False):
        self.clip_dim = clip_dim
        self.text_head = text_head
        self.beta = beta
        self.mode = mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed
        self.normalize = normalize
        self.detach_weights = detach_weights
        self.loss_branch = loss_branch

    def _split_views(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = as_matrix(X, "X")
        check_finite(X, "X")
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise BankShapeError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        if self.clip_dim is None:
            clip, dino = X, X
        else:
            if not 0 < self.clip_dim < X.shape[1]:
                raise BankShapeError(
                    f"clip_dim={self.clip_dim} must split {X.shape[1]} columns"
                )
            clip, dino = X[:, :self.clip_dim], X[:, self.clip_dim:]
        if self.normalize:
            clip = l2_normalize(clip, "clip view")
            dino = l2_normalize(dino, "dino view")
        return clip, dino

    def fit(self, X, y):
        check_mode(self.mode)
        X = as_matrix(X, "X")
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} rows")
        self.n_features_in_ = X.shape[1]
        clip, dino = self._split_views(X)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("need at least 2 classes")
        n_classes = self.classes_.shape[0]

        if self.text_head is not None:
            head = ZeroShotHead(np.asarray(self.text_head, dtype=np.float64))
            if head.n_classes != n_classes:
                raise BankShapeError(
                    f"text_head has {head.n_classes} rows for {n_classes} classes"
                )
            if head.dim != clip.shape[1]:
                raise BankShapeError(
                    f"text_head dim {head.dim} != clip view dim {clip.shape[1]}"
                )
        else:
            centroids = np.vstack([clip[encoded == c].mean(axis=0)
                                   for c in range(n_classes)])
            head = ZeroShotHead(l2_normalize(centroids, "class centroids"))
        self.head_ = head

        values = np.zeros((X.shape[0], n_classes))
        values[np.arange(X.shape[0]), encoded] = 1.0
        cache = CacheModel(clip, dino, values, beta=self.beta)
        cfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr0=self.lr,
            weight_decay=self.weight_decay, seed=self.seed,
            beta_sharpness=self.beta, mode=self.mode,
            detach_weights=self.detach_weights, loss_branch=self.loss_branch,
        )
        result = train(cache, head, clip, dino, encoded, cfg)
        self.cache_ = result.cache
        self.loss_trace_ = result.epoch_losses
        return self

    def _check_fitted(self):
        if not hasattr(self, "cache_"):
            raise NotFittedError("fit the classifier before predicting")

    def decision_function(self, X) -> np.ndarray:
        """Fused ensemble logits, one row per sample."""
        self._check_fitted()
        clip, dino = self._split_views(X)
        return fused_logits(self.cache_, self.head_, clip, dino, self.mode)

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(log_softmax(self.decision_function(X)))

    def predict(self, X) -> np.ndarray:
        fused = self.decision_function(X)
        return self.classes_[np.argmax(fused, axis=1)]
