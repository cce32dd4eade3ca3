"""Feature importance by finite perturbation of the inputs.

For each feature j every evaluation sample is scaled ``x_ij -> x_ij (1 + delta)``
with the other features held fixed, and the score is the mean ratio of the
change in predicted class-1 probability to ``|delta x_ij|``. Features are
ranked by the absolute score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import neuralnet as nn
from .errors import ParameterError, ScoringError


@dataclass
class ImportanceReport:
    scores: np.ndarray
    ranking: np.ndarray
    delta: float
    n_eval: int

    @property
    def abs_scores(self) -> np.ndarray:
        return np.abs(self.scores)

    @property
    def ranks(self) -> np.ndarray:
        """1-based rank of every feature."""
        r = np.empty_like(self.ranking)
        r[self.ranking] = np.arange(1, len(self.ranking) + 1)
        return r


def rank_features(scores) -> np.ndarray:
    """Indices sorted by ``|score|`` descending, lower index first on ties."""
    a = np.abs(np.asarray(scores, dtype=np.float64))
    return np.lexsort((np.arange(a.size), -a))


def importance_scores(params: nn.ModelParams, spec: nn.NetworkSpec, X_eval, delta: float = 0.05,
                      epsilon_floor: float = 1e-6, features=None, chunk: int = 64) -> ImportanceReport:
    """Signed perturbation scores for every feature (or the subset ``features``).

    Unscored features get 0. Perturbed copies are evaluated ``chunk``
    features at a time to bound memory.
    """
    X = np.ascontiguousarray(X_eval, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ParameterError("X_eval must be a non-empty 2-D array")
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    n, p = X.shape
    base = nn.predict_proba(params, spec, X)
    feats = np.arange(p) if features is None else np.asarray(features, dtype=np.int64)
    scores = np.zeros(p)
    for start in range(0, len(feats), chunk):
        block = feats[start:start + chunk]
        stacked = np.repeat(X[None, :, :], len(block), axis=0)
        for b, j in enumerate(block):
            stacked[b, :, j] *= 1.0 + delta
        pert = nn.predict_proba(params, spec, stacked.reshape(-1, p)).reshape(len(block), n)
        for b, j in enumerate(block):
            if not np.isfinite(pert[b]).all():
                raise ScoringError(f"non-finite prediction when perturbing feature {int(j)}")
            denom = np.maximum(np.abs(delta * X[:, j]), epsilon_floor)
            scores[j] = np.mean((pert[b] - base) / denom)
    return ImportanceReport(scores=scores, ranking=rank_features(scores), delta=float(delta), n_eval=n)


def top_fraction(report: ImportanceReport, fraction: float) -> np.ndarray:
    """The first ``ceil(fraction * p)`` features of the ranking."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    k = math.ceil(round(fraction * len(report.ranking), 9))
    return report.ranking[:k]
