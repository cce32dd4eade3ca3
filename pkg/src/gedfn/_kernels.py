"""Hot loops, compiled with numba when available.

Set ``GEDFN_NO_NUMBA=1`` to force the pure-numpy implementations. Both paths
return identical results up to floating-point summation order.
"""
import os

import numpy as np

UNREACHABLE = -1

_DISABLED = os.environ.get("GEDFN_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:  # pragma: no cover - depends on environment
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def backend():
    return "numba" if HAVE_NUMBA else "numpy"


# --- preferential attachment -------------------------------------------------

def _ba_edges_py(p, m, uniforms):
    # Repeated-nodes list: each vertex appears once per incident edge, so a
    # uniform draw from it is a degree-proportional draw.
    n_edges = m * (p - m)
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    repeated = np.empty(2 * n_edges, dtype=np.int64)
    n_rep = 0
    e = 0
    u = 0
    targets = np.empty(m, dtype=np.int64)
    for i in range(m):
        targets[i] = i
    for v in range(m, p):
        for i in range(m):
            src[e] = v
            dst[e] = targets[i]
            e += 1
            repeated[n_rep] = targets[i]
            repeated[n_rep + 1] = v
            n_rep += 2
        # draw m distinct targets for the next vertex
        k = 0
        while k < m and v + 1 < p:
            if u >= uniforms.shape[0]:
                return src, dst, -1
            t = repeated[int(uniforms[u] * n_rep)]
            u += 1
            dup = False
            for q in range(k):
                if targets[q] == t:
                    dup = True
                    break
            if not dup:
                targets[k] = t
                k += 1
    return src, dst, u


# --- breadth-first all-pairs distances ------------------------------------

def _bfs_all_pairs_py(indptr, indices, p):
    dist = np.full((p, p), UNREACHABLE, dtype=np.int32)
    queue = np.empty(p, dtype=np.int64)
    for s in range(p):
        row = dist[s]
        row[s] = 0
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            v = queue[head]
            head += 1
            dv = row[v] + 1
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if row[w] == UNREACHABLE:
                    row[w] = dv
                    queue[tail] = w
                    tail += 1
    return dist


def _bfs_all_pairs_np(indptr, indices, p):
    # Frontier expansion over all sources at once, boolean matrices.
    import scipy.sparse as sp

    adj = sp.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(p, p))
    dist = np.full((p, p), UNREACHABLE, dtype=np.int32)
    np.fill_diagonal(dist, 0)
    frontier = np.eye(p, dtype=bool)
    seen = frontier.copy()
    d = 0
    while frontier.any():
        d += 1
        nxt = np.asarray((adj @ frontier.T.astype(np.int8)).T > 0) & ~seen
        dist[nxt] = d
        seen |= nxt
        frontier = nxt
    return dist


# --- sparse masked layer -----------------------------------------------------
# Nonzeros are stored grouped by output unit: unit j reads inputs
# rows[ptr[j]:ptr[j+1]] with weights vals[ptr[j]:ptr[j+1]].

def _masked_forward_py(X, rows, ptr, vals, bias):
    n = X.shape[0]
    h = ptr.shape[0] - 1
    out = np.empty((n, h))
    for i in range(n):
        for j in range(h):
            acc = bias[j]
            for k in range(ptr[j], ptr[j + 1]):
                acc += X[i, rows[k]] * vals[k]
            out[i, j] = acc
    return out


def _masked_forward_np(X, rows, ptr, vals, bias):
    out = np.zeros((X.shape[0], ptr.shape[0] - 1))
    full = np.flatnonzero(np.diff(ptr) > 0)
    if full.size:
        # reduceat misreads empty segments, so only non-empty units are summed
        out[:, full] = np.add.reduceat(X[:, rows] * vals, ptr[full], axis=1)
    return out + bias


def _masked_weight_grad_py(X, dout, rows, ptr):
    n = X.shape[0]
    h = ptr.shape[0] - 1
    g = np.zeros(rows.shape[0])
    for j in range(h):
        for k in range(ptr[j], ptr[j + 1]):
            r = rows[k]
            acc = 0.0
            for i in range(n):
                acc += X[i, r] * dout[i, j]
            g[k] = acc
    return g


def _masked_weight_grad_np(X, dout, rows, ptr):
    cols = np.repeat(np.arange(ptr.shape[0] - 1), np.diff(ptr))
    return np.einsum("ik,ik->k", X[:, rows], dout[:, cols])


# --- Adam ------------------------------------------------------------------

def _adam_update_py(a, g, m, v, lr, beta1, beta2, eps, c1, c2):
    a = a.reshape(-1)
    g = g.reshape(-1)
    m = m.reshape(-1)
    v = v.reshape(-1)
    for i in range(a.shape[0]):
        gi = g[i]
        mi = m[i] * beta1 + (1.0 - beta1) * gi
        vi = v[i] * beta2 + (1.0 - beta2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        a[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


def _adam_update_np(a, g, m, v, lr, beta1, beta2, eps, c1, c2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    a -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


if HAVE_NUMBA:
    ba_edges = njit(cache=True)(_ba_edges_py)
    bfs_all_pairs = njit(cache=True)(_bfs_all_pairs_py)
    masked_forward = njit(cache=True)(_masked_forward_py)
    masked_weight_grad = njit(cache=True)(_masked_weight_grad_py)
    adam_update = njit(cache=True)(_adam_update_py)
else:
    ba_edges = _ba_edges_py
    bfs_all_pairs = _bfs_all_pairs_np
    masked_forward = _masked_forward_np
    masked_weight_grad = _masked_weight_grad_np
    adam_update = _adam_update_np
