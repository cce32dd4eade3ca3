"""Synthetic benchmark data: Gaussian features whose covariance decays with
graph distance, and binary outcomes from a thresholded logistic model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, ParameterError
from .graph_core import (
    UNREACHABLE,
    FeatureGraph,
    PredictorSet,
    all_pairs_distances,
    generate_ba_graph,
    select_predictors,
)

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0)


def covariance_from_distances(D: np.ndarray, base: float = 0.7) -> np.ndarray:
    """``base ** D`` elementwise, with unreachable pairs mapped to 0."""
    if not 0.0 < base < 1.0:
        raise ParameterError(f"base must lie in (0, 1), got {base}")
    D = np.asarray(D)
    reach = D != UNREACHABLE
    top = int(D.max()) if D.size else 0
    table = base ** np.arange(max(top, 0) + 1, dtype=np.float64)
    cov = np.where(reach, table[np.where(reach, D, 0)], 0.0)
    return cov


@dataclass
class GaussianSampler:
    """Lower-triangular factor of ``cov + jitter * I``."""

    factor: np.ndarray
    jitter: float

    @property
    def p(self) -> int:
        return self.factor.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample_features(self, n, seed)


def make_sampler(cov: np.ndarray) -> GaussianSampler:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ParameterError("covariance must be square")
    if not np.array_equal(cov, cov.T):
        raise ParameterError("covariance must be symmetric")
    eye = np.eye(cov.shape[0])
    for lam in JITTER_LADDER:
        try:
            factor = np.linalg.cholesky(cov + lam * eye if lam else cov)
        except np.linalg.LinAlgError:
            continue
        if lam:
            log.warning("covariance not positive definite; added jitter %g", lam)
        return GaussianSampler(factor, lam)
    raise GenerationError("covariance could not be factorized with jitter <= 1.0")


def sample_features(sampler: GaussianSampler, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, sampler.p))
    return z @ sampler.factor.T


@dataclass
class OutcomeSpec:
    beta: np.ndarray
    beta0: float
    threshold: float
    balance_mode: str


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def labels_from_coefficients(X, beta, beta0, threshold):
    """``y_i = 1[logistic(x_i . beta + beta0) > threshold]`` and the probabilities."""
    prob = sigmoid(X @ beta + beta0)
    return (prob > threshold).astype(np.int64), prob


def generate_outcome(X: np.ndarray, predictors: PredictorSet, seed=None,
                     balance_mode: str = "median", threshold: float = 0.5,
                     negative_prob: float = 0.5):
    """Draw coefficients for the true predictors and label every sample.

    Coefficient magnitudes are uniform on (0.1, 0.2); each is negated with
    probability ``negative_prob``. In ``median`` mode the intercept is 0 and
    the threshold is the median probability, which splits the samples in
    half. In ``fixed`` mode the intercept is uniform on (-0.5, 0.5) and
    ``threshold`` is used.
    """
    n, p = X.shape
    idx = predictors.all
    if idx.size and (idx.min() < 0 or idx.max() >= p):
        raise ParameterError("predictor index out of range")
    if not 0.0 <= negative_prob <= 1.0:
        raise ParameterError(f"negative_prob must lie in [0, 1], got {negative_prob}")
    rng = np.random.default_rng(seed)
    mag = rng.uniform(0.1, 0.2, size=idx.size)
    sign = np.where(rng.random(idx.size) < negative_prob, -1.0, 1.0)
    beta = np.zeros(p)
    beta[idx] = mag * sign
    if balance_mode == "median":
        beta0 = 0.0
        prob = sigmoid(X @ beta)
        t = float(np.median(prob))
    elif balance_mode == "fixed":
        if not 0.0 < threshold < 1.0:
            raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
        beta0 = float(rng.uniform(-0.5, 0.5))
        prob = sigmoid(X @ beta + beta0)
        t = float(threshold)
    else:
        raise ParameterError(f"unknown balance_mode {balance_mode!r}")
    if np.ptp(prob) == 0.0:
        raise GenerationError("all outcome probabilities are equal; labels would be degenerate")
    y = (prob > t).astype(np.int64)
    return y, OutcomeSpec(beta=beta, beta0=beta0, threshold=t, balance_mode=balance_mode)


@dataclass
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    predictors: PredictorSet
    outcome: OutcomeSpec
    graph: FeatureGraph
    seed: int | None
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def generate_dataset(p: int = 5000, n: int = 400, p0: int = 40, n_cores: int = 2,
                     singleton_fraction: float = 0.0, seed=None, m: int = 1,
                     base: float = 0.7, balance_mode: str = "median",
                     threshold: float = 0.5, graph: FeatureGraph | None = None,
                     min_class_fraction: float = 0.05,
                     negative_prob: float = 0.5) -> SyntheticDataset:
    """Graph, predictor set, features and labels from one seed.

    Pass ``graph`` to reuse a fixed feature graph across replicates.
    """
    ss = np.random.SeedSequence(seed)
    s_graph, s_pred, s_x, s_y = ss.spawn(4)
    if graph is None:
        graph = generate_ba_graph(p, m, seed=np.random.default_rng(s_graph))
    elif graph.p != p:
        raise ParameterError(f"graph has {graph.p} vertices, expected {p}")
    predictors = select_predictors(graph, p0, n_cores, singleton_fraction,
                                   seed=np.random.default_rng(s_pred))
    sampler = make_sampler(covariance_from_distances(all_pairs_distances(graph), base))
    X = sample_features(sampler, n, seed=np.random.default_rng(s_x))
    jitter = sampler.jitter
    del sampler
    if p0 == 0:
        # no signal: labels are a fair coin, independent of X
        rng = np.random.default_rng(s_y)
        y = np.zeros(n, dtype=np.int64)
        y[rng.permutation(n)[: n // 2]] = 1
        outcome = OutcomeSpec(np.zeros(p), 0.0, 0.5, "random")
    else:
        y, outcome = generate_outcome(X, predictors, seed=np.random.default_rng(s_y),
                                      balance_mode=balance_mode, threshold=threshold,
                                      negative_prob=negative_prob)
    frac = y.mean()
    if min(frac, 1 - frac) < min_class_fraction:
        raise GenerationError(f"class balance {frac:.3f} outside configured bounds")
    return SyntheticDataset(X=X, y=y, predictors=predictors, outcome=outcome, graph=graph,
                            seed=seed, jitter=jitter,
                            meta=dict(p=p, n=n, p0=p0, n_cores=n_cores,
                                      singleton_fraction=singleton_fraction, m=m, base=base,
                                      balance_mode=balance_mode, negative_prob=negative_prob))
