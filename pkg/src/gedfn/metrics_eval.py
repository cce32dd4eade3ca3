"""ROC-AUC via the Mann-Whitney rank statistic, plus accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError


def _doubled_midranks(scores):
    """Twice the 1-based average rank of every score, as exact integers."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = s.shape[0]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    # a tie block occupying positions a..b-1 has average rank (a+1+b)/2
    block = np.repeat(starts + 1 + ends, ends - starts)
    out = np.empty(n, dtype=np.int64)
    out[order] = block
    return out


def auc(scores, labels) -> float:
    """Area under the ROC curve; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise EvaluationError("scores and labels differ in length")
    if np.isnan(scores).any():
        raise EvaluationError("scores contain NaN")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise EvaluationError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")
    r2 = int(_doubled_midranks(scores)[pos].sum())
    u2 = r2 - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


@dataclass
class EvalResult:
    auc: float
    accuracy: float
    n_pos: int
    n_neg: int


def evaluate(p_hat, labels) -> EvalResult:
    labels = np.asarray(labels)
    acc = float(np.mean((np.asarray(p_hat) > 0.5).astype(int) == labels))
    return EvalResult(auc(p_hat, labels), acc, int((labels == 1).sum()), int((labels == 0).sum()))
