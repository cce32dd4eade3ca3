"""Time the numba kernels against their numpy fallbacks at simulation scale.

    python benchmarks/bench_kernels.py [--p 5000] [--repeat 5]

Both implementations run in the same process (the numba side is compiled
from the same source the package uses), so the comparison does not depend
on ``GEDFN_NO_NUMBA``. Compilation time is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np
from numba import njit

from gedfn import _kernels as K
from gedfn.graph_core import adjacency, generate_ba_graph
from gedfn.neuralnet import MaskStructure


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p", type=int, default=5000)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    g = generate_ba_graph(args.p, 1, seed=0)
    mask = MaskStructure.from_dense(adjacency(g))
    X = rng.standard_normal((args.batch, args.p))
    vals = rng.standard_normal(mask.nnz)
    bias = np.zeros(args.p)
    dout = rng.standard_normal((args.batch, args.p))
    indptr, indices = g.csr()
    adam_n = args.p * 512
    a, gr = rng.standard_normal(adam_n), rng.standard_normal(adam_n)
    m, v = np.zeros(adam_n), np.ones(adam_n)
    adam_args = (a, gr, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)

    cases = [
        ("masked forward", K._masked_forward_py, K._masked_forward_np, (X, mask.rows, mask.ptr, vals, bias)),
        ("masked weight grad", K._masked_weight_grad_py, K._masked_weight_grad_np, (X, dout, mask.rows, mask.ptr)),
        (f"adam update ({adam_n} params)", K._adam_update_py, K._adam_update_np, adam_args),
        ("all-pairs BFS", K._bfs_all_pairs_py, K._bfs_all_pairs_np, (indptr, indices, args.p)),
    ]
    print(f"p={args.p} batch={args.batch} nnz={mask.nnz}")
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, py, np_fn, fargs in cases:
        tn = best_of(njit(py), fargs, args.repeat)
        tp = best_of(np_fn, fargs, args.repeat)
        print(f"{name:32s} {tn * 1e3:10.2f} {tp * 1e3:10.2f} {tp / tn:8.1f}x")
    u = np.random.default_rng(1).random(4 * args.p)
    tn = best_of(njit(K._ba_edges_py), (args.p, 1, u), args.repeat)
    tp = best_of(K._ba_edges_py, (args.p, 1, u), 1)
    print(f"{'BA graph (interpreted loop)':32s} {tn * 1e3:10.2f} {tp * 1e3:10.2f} {tp / tn:8.1f}x")


if __name__ == "__main__":
    main()
