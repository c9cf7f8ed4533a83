"""Evaluation metrics over fused logits: accuracy, NLL, risk-coverage area.

AURC here is the unweighted mean of selective risks over all achievable
coverage levels: samples sorted by max-softmax confidence (descending, ties by
original index), risk at level k = errors among the top k divided by k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_matrix, check_finite, check_labels


@dataclass
class EvalReport:
    accuracy: float
    nll: float
    aurc: float
    n_samples: int

    @property
    def aurc_x1000(self) -> float:
        return self.aurc * 1000.0

    def tsv_row(self) -> str:
        return "\t".join([
            f"{self.accuracy:.6f}",
            f"{self.nll:.6f}",
            f"{self.aurc_x1000:.6f}",
            str(self.n_samples),
        ])


def _checked(fused, labels) -> tuple[np.ndarray, np.ndarray]:
    fused = as_matrix(fused, "logits")
    check_finite(fused, "logits")
    if fused.shape[0] == 0:
        raise ValueError("empty batch")
    labels = check_labels(labels, fused.shape[1])
    if labels.shape[0] != fused.shape[0]:
        raise ValueError(
            f"{labels.shape[0]} labels for {fused.shape[0]} logit rows"
        )
    return fused, labels


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def accuracy(fused, labels) -> float:
    """Fraction of rows whose argmax hits the label; ties go to the lowest class."""
    fused, labels = _checked(fused, labels)
    return float(np.mean(np.argmax(fused, axis=1) == labels))


def nll(fused, labels) -> float:
    """Mean negative log softmax probability of the true class."""
    fused, labels = _checked(fused, labels)
    ls = log_softmax(fused)
    return float(-np.mean(ls[np.arange(labels.shape[0]), labels]))


def aurc(fused, labels) -> float:
    """Mean selective risk over coverage levels 1/B .. 1."""
    fused, labels = _checked(fused, labels)
    n = fused.shape[0]
    conf = np.exp(log_softmax(fused)).max(axis=1)
    order = np.argsort(-conf, kind="stable")
    wrong = (np.argmax(fused, axis=1) != labels).astype(np.float64)[order]
    risks = np.cumsum(wrong) / np.arange(1, n + 1)
    return float(np.mean(risks))


def evaluate(fused, labels) -> EvalReport:
    fused, labels = _checked(fused, labels)
    return EvalReport(
        accuracy=accuracy(fused, labels),
        nll=nll(fused, labels),
        aurc=aurc(fused, labels),
        n_samples=int(fused.shape[0]),
    )
