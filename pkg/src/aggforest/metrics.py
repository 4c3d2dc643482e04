"""Evaluation metrics: ROC AUC, log loss, mean squared error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata


@dataclass
class EvalReport:
    metric: str
    value: float
    n_samples: int
    per_class: dict = field(default_factory=dict)


def roc_auc(scores, labels) -> float:
    """Probability that a positive outranks a negative, ties counted half.

    Computed from midranks: auc = (R+ - n+(n+ + 1)/2) / (n+ n-), where R+ is
    the rank sum of the positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    r_pos = float(ranks[labels].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def multiclass_auc(proba, labels) -> tuple[float, dict]:
    """Unweighted mean of per-class one-versus-rest AUCs.

    ``labels`` are encoded class ids matching the probability columns.
    Returns (mean, per-class dict).  Every class must appear.
    """
    proba = np.asarray(proba, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    k = proba.shape[1]
    present = np.bincount(labels, minlength=k)
    missing = np.flatnonzero(present == 0)
    if missing.size:
        raise ValueError(f"classes absent from labels: {missing.tolist()}")
    per_class = {}
    for c in range(k):
        per_class[c] = roc_auc(proba[:, c], labels == c)
    return float(np.mean(list(per_class.values()))), per_class


def log_loss(proba, labels) -> float:
    """Mean negative log probability of the true class."""
    proba = np.asarray(proba, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    picked = proba[np.arange(labels.shape[0]), labels]
    if (picked <= 0).any():
        bad = int(np.flatnonzero(picked <= 0)[0])
        raise ValueError(f"zero probability for the true class at row {bad}")
    return float(-np.log(picked).mean())


def mse(pred, y) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return float(((pred - y) ** 2).mean())
