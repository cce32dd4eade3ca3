"""Feedforward classifier with an optional graph-masked first layer.

Weights use the ``(in_dim, out_dim)`` convention, ``Z = X @ W + b``. The
first layer of a masked network maps ``p`` inputs to ``p`` hidden units and
its effective weight is ``W * A``. Two storage modes exist for that layer:

* ``dense``: ``W`` is a full ``p x p`` array. Entries where ``A == 0`` start at
  zero and their gradient is multiplied by ``A``, so they stay exactly zero.
* ``sparse``: only the nonzeros of ``A`` are stored, grouped by hidden unit.

Both modes draw the same initial values and compute the same function.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ContractError, ParameterError

DENSE_MASK_LIMIT = 2000
PROB_EPS = 1e-12


class MaskStructure:
    """Nonzero pattern of an adjacency mask, grouped by hidden unit.

    Hidden unit ``j`` reads inputs ``rows[ptr[j]:ptr[j+1]]`` (ascending).
    """

    def __init__(self, rows, ptr, p):
        self.rows = np.ascontiguousarray(rows, dtype=np.int64)
        self.ptr = np.ascontiguousarray(ptr, dtype=np.int64)
        self.p = int(p)
        self.cols = np.repeat(np.arange(self.p, dtype=np.int64), np.diff(self.ptr))
        self._dense = None

    @classmethod
    def from_dense(cls, mask):
        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ContractError(f"mask must be square, got shape {mask.shape}")
        # column-major scan groups nonzeros by hidden unit, rows ascending
        cols, rows = np.nonzero(mask.T)
        ptr = np.zeros(mask.shape[1] + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=mask.shape[1]), out=ptr[1:])
        return cls(rows, ptr, mask.shape[0])

    @property
    def nnz(self) -> int:
        return int(self.rows.shape[0])

    def to_dense(self, dtype=np.float64):
        a = np.zeros((self.p, self.p), dtype=dtype)
        a[self.rows, self.cols] = 1
        return a

    @property
    def dense(self) -> np.ndarray:
        """Cached float64 0/1 matrix; do not modify."""
        if self._dense is None:
            self._dense = self.to_dense()
            self._dense.setflags(write=False)
        return self._dense

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.p).tobytes())
        h.update(self.ptr.tobytes())
        h.update(self.rows.tobytes())
        return h.hexdigest()


@dataclass
class NetworkSpec:
    """Architecture of a feedforward classifier.

    ``hidden`` lists hidden-layer widths; with a mask the first entry must
    equal ``input_dim``. ``dropout`` is one rate per hidden layer (a scalar
    is broadcast).
    """

    input_dim: int
    hidden: list
    n_out: int = 2
    mask: MaskStructure | None = None
    dropout: object = 0.0
    storage: str = "auto"

    def __post_init__(self):
        self.hidden = [int(h) for h in self.hidden]
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ParameterError("layer widths must be positive")
        if self.n_out != 2:
            raise ParameterError("only binary classification (n_out=2) is supported")
        if self.mask is not None and not isinstance(self.mask, MaskStructure):
            self.mask = MaskStructure.from_dense(self.mask)
        if self.mask is not None:
            if self.mask.p != self.input_dim:
                raise ContractError(f"mask is {self.mask.p}x{self.mask.p}, input_dim is {self.input_dim}")
            if not self.hidden or self.hidden[0] != self.input_dim:
                raise ContractError("a masked first layer needs h_in == input_dim")
        if np.isscalar(self.dropout):
            self.dropout = [float(self.dropout)] * len(self.hidden)
        self.dropout = [float(r) for r in self.dropout]
        if len(self.dropout) != len(self.hidden) or any(not 0 <= r < 1 for r in self.dropout):
            raise ParameterError("dropout needs one rate in [0, 1) per hidden layer")
        if self.storage not in ("auto", "dense", "sparse"):
            raise ParameterError(f"unknown storage {self.storage!r}")

    @property
    def widths(self):
        return [self.input_dim, *self.hidden, self.n_out]

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def masked(self) -> bool:
        return self.mask is not None

    @property
    def sparse(self) -> bool:
        if not self.masked:
            return False
        if self.storage == "auto":
            return self.input_dim > DENSE_MASK_LIMIT
        return self.storage == "sparse"

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "n_out": self.n_out,
            "dropout": list(self.dropout),
            "storage": self.storage,
            "mask_fingerprint": self.mask.fingerprint() if self.masked else None,
        }


def gedfn_spec(p, mask, hidden=(64, 16), **kw) -> NetworkSpec:
    """The masked architecture ``p -> p (masked) -> 64 -> 16 -> 2``."""
    return NetworkSpec(p, [p, *hidden], mask=mask, **kw)


def dfn_spec(p, first=512, hidden=(64, 16), **kw) -> NetworkSpec:
    return NetworkSpec(p, [first, *hidden], **kw)


@dataclass
class ModelParams:
    """``weights[k]`` and ``biases[k]`` of layer ``k``.

    For a sparse masked first layer ``weights[0]`` is the 1-D array of
    nonzero values in :class:`MaskStructure` order.
    """

    weights: list
    biases: list

    def arrays(self):
        return [*self.weights, *self.biases]

    def copy(self):
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def effective_first_layer(self, spec: NetworkSpec) -> np.ndarray:
        """First-layer weight as the dense ``W * A`` (or ``W`` when unmasked)."""
        w = self.weights[0]
        if not spec.masked:
            return w
        if spec.sparse:
            out = np.zeros((spec.input_dim, spec.input_dim))
            out[spec.mask.rows, spec.mask.cols] = w
            return out
        return w * spec.mask.dense


def init_params(spec: NetworkSpec, seed=None) -> ModelParams:
    """Normal weights with std ``sqrt(2 / fan_in)``, zero biases.

    Values are drawn output-unit by output-unit, so a masked layer draws only
    its unmasked entries and an all-ones mask reproduces the dense draw.
    For the masked layer ``fan_in`` is the mask's row count ``p``.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        std = np.sqrt(2.0 / fan_in)
        if k == 0 and spec.masked:
            vals = rng.standard_normal(spec.mask.nnz) * std
            if spec.sparse:
                w = vals
            else:
                w = np.zeros((fan_in, fan_out))
                w[spec.mask.rows, spec.mask.cols] = vals
        else:
            w = np.ascontiguousarray(rng.standard_normal((fan_out, fan_in)).T) * std
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


@dataclass
class ForwardTrace:
    X: np.ndarray
    pre: list = field(default_factory=list)
    act: list = field(default_factory=list)
    drop: list = field(default_factory=list)
    probs: np.ndarray | None = None

    @property
    def p_hat(self) -> np.ndarray:
        return self.probs[:, 1]


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _first_layer(params, spec, X):
    w, b = params.weights[0], params.biases[0]
    if spec.masked:
        if spec.sparse:
            m = spec.mask
            return _kernels.masked_forward(X, m.rows, m.ptr, w, b)
        return X @ (w * spec.mask.dense) + b
    return X @ w + b


def forward(params: ModelParams, spec: NetworkSpec, X, mode: str = "eval", seed=None) -> ForwardTrace:
    """Run the network; ``mode="train"`` enables inverted dropout."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ContractError(f"expected X with {spec.input_dim} columns, got shape {X.shape}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    rng = None
    trace = ForwardTrace(X)
    h = X
    last = spec.n_layers - 1
    for k in range(spec.n_layers):
        if k == 0:
            mu = _first_layer(params, spec, X)
        else:
            mu = h @ params.weights[k] + params.biases[k]
        trace.pre.append(mu)
        if k == last:
            trace.probs = softmax(mu)
            break
        h = relu(mu)
        rate = spec.dropout[k]
        if mode == "train" and rate > 0:
            if rng is None:
                rng = np.random.default_rng(seed)
            keep = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * keep
            trace.drop.append(keep)
        else:
            trace.drop.append(None)
        trace.act.append(h)
    return trace


def predict_proba(params, spec, X) -> np.ndarray:
    """Probability of class 1 in eval mode."""
    return forward(params, spec, X, mode="eval").p_hat


def loss(trace: ForwardTrace, y) -> float:
    """Mean binary cross-entropy of the class-1 probability."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(trace.p_hat, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def backward(params: ModelParams, spec: NetworkSpec, trace: ForwardTrace, y) -> ModelParams:
    """Gradients of :func:`loss` for every weight and bias.

    The first-layer weight gradient of a masked network is zero wherever
    the mask is zero. ReLU's derivative at 0 is taken as 0.
    """
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    delta = trace.probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    for k in range(spec.n_layers - 1, -1, -1):
        gb[k] = delta.sum(axis=0)
        if k > 0:
            gw[k] = trace.act[k - 1].T @ delta
            dh = delta @ params.weights[k].T
            if trace.drop[k - 1] is not None:
                dh = dh * trace.drop[k - 1]
            delta = dh * (trace.pre[k - 1] > 0)
        elif spec.masked and spec.sparse:
            m = spec.mask
            gw[0] = _kernels.masked_weight_grad(trace.X, np.ascontiguousarray(delta), m.rows, m.ptr)
        elif spec.masked:
            gw[0] = (trace.X.T @ delta) * spec.mask.dense
        else:
            gw[0] = trace.X.T @ delta
    return ModelParams(gw, gb)


def add_l2(grads: ModelParams, params: ModelParams, scale: float) -> ModelParams:
    """Add the gradient of ``scale/2 * sum ||W||^2`` (weights only)."""
    if scale:
        for g, w in zip(grads.weights, params.weights):
            g += scale * w
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams):
        return cls([np.zeros_like(a) for a in params.arrays()],
                   [np.zeros_like(a) for a in params.arrays()], 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr=1e-3,
              beta1=0.9, beta2=0.999, eps=1e-8, t=None):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    t = state.t + 1 if t is None else int(t)
    if t < 1:
        raise ParameterError("Adam step index must be >= 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for a, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        _kernels.adam_update(a, g, m, v, lr, beta1, beta2, eps, c1, c2)
    state.t = t
    return params, state


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(path, spec: NetworkSpec, params: ModelParams, state: AdamState | None = None,
                    seed=None, extra: dict | None = None):
    """Write an ``.npz`` holding spec, mask structure, parameters and optimizer state."""
    meta = {"format": "gedfn-checkpoint/1", "spec": spec.to_dict(), "seed": seed,
            "adam_t": state.t if state is not None else None, "extra": extra or {}}
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{k}"] = w
        arrays[f"b{k}"] = b
    if spec.masked:
        arrays["mask_rows"] = spec.mask.rows
        arrays["mask_ptr"] = spec.mask.ptr
    if state is not None:
        for i, (m, v) in enumerate(zip(state.m, state.v)):
            arrays[f"adam_m{i}"] = m
            arrays[f"adam_v{i}"] = v
    from .io import atomic_write

    with atomic_write(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: ``(spec, params, state, meta)``."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        s = meta["spec"]
        mask = None
        if s["mask_fingerprint"] is not None:
            mask = MaskStructure(z["mask_rows"], z["mask_ptr"], s["input_dim"])
            if mask.fingerprint() != s["mask_fingerprint"]:
                raise ContractError(f"{path}: mask fingerprint mismatch")
        spec = NetworkSpec(s["input_dim"], s["hidden"], s["n_out"], mask=mask,
                           dropout=s["dropout"], storage=s["storage"])
        n = spec.n_layers
        params = ModelParams([z[f"W{k}"] for k in range(n)], [z[f"b{k}"] for k in range(n)])
        state = None
        if meta["adam_t"] is not None:
            k = 2 * n
            state = AdamState([z[f"adam_m{i}"] for i in range(k)],
                              [z[f"adam_v{i}"] for i in range(k)], meta["adam_t"])
    return spec, params, state, meta
