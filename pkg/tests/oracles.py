"""Reference implementations used only by the tests."""
import numpy as np

from gedfn import neuralnet as nn
from gedfn.graph_core import UNREACHABLE


def floyd_warshall(graph):
    p = graph.p
    d = np.full((p, p), np.inf)
    np.fill_diagonal(d, 0.0)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    d[u, v] = 1.0
    d[v, u] = 1.0
    for k in range(p):
        np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :], out=d)
    return np.where(np.isinf(d), UNREACHABLE, d).astype(np.int64)


def reachability_distances(graph):
    """Smallest k with (A^k)_ij > 0, from boolean matrix powers."""
    p = graph.p
    a = np.zeros((p, p), dtype=np.int64)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    a[u, v] = a[v, u] = 1
    d = np.full((p, p), UNREACHABLE, dtype=np.int64)
    np.fill_diagonal(d, 0)
    power = np.eye(p, dtype=np.int64)
    for k in range(1, p):
        power = ((power @ a) > 0).astype(np.int64)
        d[(power > 0) & (d == UNREACHABLE)] = k
    return d


def auc_pairs(scores, labels):
    """Explicit count over every positive/negative pair."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = ties = 0
    for s in pos:
        wins += int((s > neg).sum())
        ties += int((s == neg).sum())
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def numerical_gradient(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def random_mask(p, rng, density=0.3):
    a = (rng.random((p, p)) < density).astype(int)
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 1)
    return a


def _objective(params, spec, X, y, seed):
    return nn.loss(nn.forward(params, spec, X, mode="train", seed=seed), y)


def gradient_check(spec, X, y, seed=0, dropout_seed=5, h=1e-5):
    """Max relative error of backprop vs central differences, or None near a ReLU kink."""
    params = nn.init_params(spec, seed)
    trace = nn.forward(params, spec, X, mode="train", seed=dropout_seed)
    if any(np.abs(mu).min() < 1e-3 for mu in trace.pre[:-1]):
        return None
    grads = nn.backward(params, spec, trace, y)
    worst = 0.0
    for arr, g in zip(params.arrays(), grads.arrays()):
        num = numerical_gradient(lambda: _objective(params, spec, X, y, dropout_seed), arr, h)
        rel = np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-6)
        worst = max(worst, rel.max())
    return worst


def random_config(rng):
    p = int(rng.integers(2, 11))
    n = int(rng.integers(3, 12))
    depth = int(rng.integers(0, 3))
    masked = bool(rng.integers(0, 2))
    hidden = [int(w) for w in rng.integers(1, 9, size=depth)]
    if masked:
        hidden = [p] + hidden
        mask = random_mask(p, rng, rng.uniform(0.1, 0.6))
    else:
        mask = None
    dropout = float(rng.choice([0.0, 0.0, 0.3]))
    storage = str(rng.choice(["dense", "sparse"]))
    spec = nn.NetworkSpec(p, hidden, mask=mask, dropout=dropout, storage=storage)
    return spec, rng.standard_normal((n, p)), rng.integers(0, 2, n)
