"""Mini-batch training, train/test splitting and the simulation grid."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neuralnet as nn
from .errors import DivergenceError, GedfnError, ParameterError
from .graph_core import adjacency, generate_ba_graph
from .metrics_eval import auc
from .synthgen import generate_dataset

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    train_fraction: float = 0.8
    seed: int = 0
    l2_penalty: float = 0.0
    dropout_rate: float = 0.0
    early_stop: int | None = None
    stratify: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ParameterError("batch_size >= 1, epochs >= 0 and lr > 0 are required")
        if self.early_stop is not None and self.early_stop < 1:
            raise ParameterError("early_stop patience must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides):
        """Build from a ``key = value`` file using CLI flag names (``l2``, ``batch-size``...)."""
        from .io import read_config

        aliases = {"l2": "l2_penalty", "dropout": "dropout_rate", "no_stratify": "stratify"}
        types = {"lr": float, "batch_size": int, "epochs": int, "train_fraction": float, "seed": int,
                 "l2_penalty": float, "dropout_rate": float, "early_stop": int, "beta1": float,
                 "beta2": float, "adam_eps": float}
        values = {}
        for key, raw in read_config(path).items():
            name = aliases.get(key, key)
            if name == "stratify":
                flag = raw.lower() in ("1", "true", "yes", "on")
                values[name] = not flag if key == "no_stratify" else flag
            elif name in types:
                values[name] = types[name](raw)
            else:
                raise ParameterError(f"{path}: unknown training key {key!r}")
        values.update(overrides)
        return cls(**values)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def split(y, ratio: float = 0.8, seed=None, stratify: bool = True):
    """Random train/test partition of ``range(len(y))``, returned as index arrays.

    With ``stratify`` the training size ``round(ratio * n)`` is shared among
    classes by largest remainder, so both sides keep the label mix. A class
    missing from one side is an error unless that side is too small to
    hold every class; a class with fewer than two samples always is.
    """
    y = np.asarray(y)
    n = y.shape[0]
    if n < 5:
        raise ParameterError(f"need at least 5 samples to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    n_train = int(round(ratio * n))
    if stratify:
        classes = np.unique(y)
        members = [np.flatnonzero(y == c) for c in classes]
        if len(classes) < 2 or min(len(mb) for mb in members) < 2:
            raise ParameterError("every class needs at least two samples to appear on both sides")
        exact = np.array([len(mb) * n_train / n for mb in members])
        take = np.floor(exact).astype(int)
        for i in np.argsort(-(exact - take), kind="stable")[: n_train - take.sum()]:
            take[i] += 1
        train, test = [], []
        for mb, k in zip(members, take):
            perm = rng.permutation(mb)
            train.append(perm[:k])
            test.append(perm[k:])
        train = np.sort(np.concatenate(train))
        test = np.sort(np.concatenate(test))
        for c in classes:
            # a side smaller than the number of classes cannot hold them all
            short = any(len(side) < len(classes) for side in (train, test))
            if not short and (not (y[train] == c).any() or not (y[test] == c).any()):
                raise ParameterError(f"class {c!r} missing from one side of the split")
    else:
        perm = rng.permutation(n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return train, test


@dataclass
class TrainLog:
    epoch_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    steps: int = 0
    stopped_early: bool = False
    wall_time: float = 0.0


def train_model(spec: nn.NetworkSpec, X, y, config: TrainConfig, X_val=None, y_val=None,
                params: nn.ModelParams | None = None, callback=None):
    """Adam over shuffled mini-batches for ``config.epochs`` epochs.

    Returns ``(params, state, log)``. ``callback(step, params)`` runs after
    every update. With ``config.early_stop = k`` and a validation set,
    training stops after ``k`` epochs without improvement of the held-out
    loss and the best parameters are returned.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    if config.batch_size > n:
        raise ParameterError(f"batch_size {config.batch_size} exceeds {n} training samples")
    ss = np.random.SeedSequence(config.seed)
    s_init, s_shuffle, s_drop = ss.spawn(3)
    if params is None:
        params = nn.init_params(spec, np.random.default_rng(s_init))
    state = nn.AdamState.zeros_like(params)
    shuffle = np.random.default_rng(s_shuffle)
    drop_rng = np.random.default_rng(s_drop)
    history = TrainLog()
    t0 = time.perf_counter()
    best = (math.inf, None)
    bad = 0
    for _epoch in range(config.epochs):
        order = shuffle.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            trace = nn.forward(params, spec, X[idx], mode="train", seed=drop_rng)
            batch_loss = nn.loss(trace, y[idx])
            if not np.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at step {state.t + 1}", step=state.t + 1)
            grads = nn.add_l2(nn.backward(params, spec, trace, y[idx]), params, config.l2_penalty)
            nn.adam_step(params, grads, state, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.adam_eps)
            total += batch_loss * len(idx)
            if callback is not None:
                callback(state.t, params)
        history.epoch_loss.append(total / n)
        if X_val is not None:
            vl = nn.loss(nn.forward(params, spec, X_val), y_val)
            history.val_loss.append(vl)
            if config.early_stop is not None:
                if vl < best[0]:
                    best, bad = (vl, params.copy()), 0
                else:
                    bad += 1
                    if bad >= config.early_stop:
                        history.stopped_early = True
                        params = best[1]
                        break
    history.steps = state.t
    history.wall_time = time.perf_counter() - t0
    return params, state, history


# --- simulation grid ---------------------------------------------------------

BENCHMARK_CELLS = [(40, 2), (80, 4), (120, 6), (160, 8), (200, 10)]
BENCHMARK_SINGLETONS = (0.0, 0.5, 1.0)


def dfn_first_width(p0: int) -> int:
    """First hidden width of the unmasked baseline: 512 for 40 predictors, else 1024."""
    return 512 if p0 <= 40 else 1024


@dataclass
class ExperimentGrid:
    p: int = 5000
    n: int = 400
    cells: list = field(default_factory=lambda: list(BENCHMARK_CELLS))
    singleton_fractions: tuple = BENCHMARK_SINGLETONS
    replicates: int = 10
    models: tuple = ("GEDFN", "DFN")
    m: int = 1
    freeze_graph: bool = False
    negative_prob: float = 0.5

    def __post_init__(self):
        self.cells = [tuple(c) for c in self.cells]
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        bad = set(self.models) - {"GEDFN", "DFN"}
        if bad:
            raise ParameterError(f"unknown models {sorted(bad)}")

    def jobs(self):
        for p0, cores in self.cells:
            for sf in self.singleton_fractions:
                yield (p0, cores, sf)


def replicate_seed(base_seed: int, cell: tuple, replicate: int) -> int:
    """Deterministic per-(cell, replicate) seed."""
    p0, cores, sf = cell
    key = [int(base_seed), int(p0), int(cores), int(round(sf * 1000)), int(replicate)]
    return int(np.random.SeedSequence(key).generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class RunResult:
    model: str
    p0: int
    n_cores: int
    singleton_fraction: float
    replicate: int
    seed: int
    auc: float
    train_loss: float
    epochs: int
    wall_time: float
    config_fingerprint: str
    error: str | None = None


def build_spec(model: str, p: int, p0: int, mask=None, dropout=0.0, dfn_width=None):
    if model == "GEDFN":
        return nn.gedfn_spec(p, mask, dropout=dropout)
    return nn.dfn_spec(p, first=dfn_width or dfn_first_width(p0), dropout=dropout)


def prepare_replicate(grid: ExperimentGrid, cell: tuple, replicate: int, base_seed: int,
                      config: TrainConfig, graph=None):
    """Dataset, split and per-replicate training config, all derived from the replicate seed.

    Returns ``(data, train_idx, test_idx, config)``.
    """
    p0, cores, sf = cell
    seed = replicate_seed(base_seed, cell, replicate)
    data = generate_dataset(grid.p, grid.n, p0, cores, sf, seed=seed, m=grid.m, graph=graph,
                            negative_prob=grid.negative_prob)
    s_split, s_train = np.random.SeedSequence(seed).spawn(2)
    train, test = split(data.y, config.train_fraction, np.random.default_rng(s_split), config.stratify)
    train_seed = int(s_train.generate_state(1)[0])
    return data, train, test, TrainConfig(**{**asdict(config), "seed": train_seed})


def run_replicate(grid: ExperimentGrid, cell: tuple, replicate: int, base_seed: int,
                  config: TrainConfig, graph=None):
    """Generate one dataset and fit every model in ``grid.models`` on the same split."""
    p0, cores, sf = cell
    seed = replicate_seed(base_seed, cell, replicate)
    data, train, test, cfg = prepare_replicate(grid, cell, replicate, base_seed, config, graph)
    mask = None
    results = []
    for model in grid.models:
        if model == "GEDFN" and mask is None:
            mask = nn.MaskStructure.from_dense(adjacency(data.graph))
        spec = build_spec(model, grid.p, p0, mask, config.dropout_rate)
        t0 = time.perf_counter()
        try:
            params, _, hist = train_model(spec, data.X[train], data.y[train], cfg)
            score = auc(nn.predict_proba(params, spec, data.X[test]), data.y[test])
            err = None
            tl, ne = hist.epoch_loss[-1] if hist.epoch_loss else float("nan"), len(hist.epoch_loss)
        except GedfnError as exc:
            score, err, tl, ne = float("nan"), f"{type(exc).__name__}: {exc}", float("nan"), 0
        results.append(RunResult(model, p0, cores, sf, replicate, seed, score, tl, ne,
                                 time.perf_counter() - t0, cfg.fingerprint(), err))
        log.info("cell p0=%d sf=%.2f rep=%d %s AUC=%.4f", p0, sf, replicate, model, score)
    return results


def _run_job(args):
    return run_replicate(*args)


def run_grid(grid: ExperimentGrid, base_seed: int = 0, config: TrainConfig | None = None,
             workers: int = 1, progress=None):
    """Run every (cell, replicate) and return ``(summary_rows, replicate_results)``.

    Jobs are independent; ``workers > 1`` fans them out over processes.
    Failed replicates are kept with ``error`` set and excluded from the cell
    mean.
    """
    config = config or TrainConfig()
    graph = generate_ba_graph(grid.p, grid.m, seed=base_seed) if grid.freeze_graph else None
    jobs = [(grid, cell, r, base_seed, config, graph)
            for cell in grid.jobs() for r in range(grid.replicates)]
    results: list[RunResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for out in pool.map(_run_job, jobs):
                results.extend(out)
                if progress:
                    progress(out)
    else:
        for job in jobs:
            out = _run_job(job)
            results.extend(out)
            if progress:
                progress(out)
    return summarize(results), results


def summarize(results):
    rows = []
    keys = sorted({(r.p0, r.n_cores, r.singleton_fraction, r.model) for r in results},
                  key=lambda k: (k[2], k[0], k[3]))
    for p0, cores, sf, model in keys:
        rs = sorted((r for r in results if (r.p0, r.n_cores, r.singleton_fraction, r.model)
                     == (p0, cores, sf, model)), key=lambda r: r.replicate)
        ok = [r.auc for r in rs if r.error is None]
        if len(ok) < len(rs):
            warnings.warn(f"{len(rs) - len(ok)} replicate(s) failed in cell p0={p0} sf={sf} {model}")
        rows.append({
            "p0": p0, "n_cores": cores, "singleton_fraction": sf, "model": model,
            "mean_auc": float(np.mean(ok)) if ok else float("nan"),
            "sd_auc": float(np.std(ok, ddof=1)) if len(ok) > 1 else float("nan"),
            "n_completed": len(ok), "replicate_aucs": [r.auc for r in rs],
        })
    return rows
