"""Feature graphs: scale-free generation, adjacency, hop distances and
selection of true-predictor sets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import UNREACHABLE
from .errors import GenerationError, ParameterError

__all__ = [
    "UNREACHABLE",
    "FeatureGraph",
    "PredictorSet",
    "generate_ba_graph",
    "adjacency",
    "all_pairs_distances",
    "select_predictors",
    "read_edge_list",
]


@dataclass(frozen=True)
class FeatureGraph:
    """Undirected simple graph on ``p`` vertices.

    ``edges`` is an ``(E, 2)`` int array with ``i < j`` in every row, sorted
    and free of duplicates. Self-loops are never stored.
    """

    p: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.p < 1:
            raise ParameterError(f"p must be positive, got {self.p}")
        if e.size and (e.min() < 0 or e.max() >= self.p):
            raise ParameterError("edge index out of range")
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if e.size else e
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_pairs(cls, p, pairs):
        return cls(p, np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2))

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.p)

    def csr(self):
        """Symmetric neighbour lists as ``(indptr, indices)``."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.p + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.p), out=indptr[1:])
        return indptr, dst[order].astype(np.int64)

    def neighbors(self, v) -> np.ndarray:
        indptr, indices = self.csr()
        return indices[indptr[v]:indptr[v + 1]]

    def is_connected(self) -> bool:
        return bool((all_pairs_distances_from(self, 0) != UNREACHABLE).all())


@dataclass
class PredictorSet:
    clique_members: np.ndarray
    singletons: np.ndarray
    cores: np.ndarray
    used_two_hop: bool = False
    groups: list = field(default_factory=list)

    @property
    def all(self) -> np.ndarray:
        return np.concatenate([self.clique_members, self.singletons]).astype(np.int64)

    @property
    def size(self) -> int:
        return int(len(self.clique_members) + len(self.singletons))


def generate_ba_graph(p: int, m: int = 1, seed=None) -> FeatureGraph:
    """Barabasi-Albert preferential attachment graph.

    Vertices ``0..m-1`` seed the process; vertex ``m`` links to all of them and
    every later vertex links to ``m`` distinct existing vertices chosen with
    probability proportional to their current degree.
    """
    if not isinstance(p, (int, np.integer)) or p < 2:
        raise ParameterError(f"p must be an integer >= 2, got {p!r}")
    if not isinstance(m, (int, np.integer)) or not 1 <= m < p:
        raise ParameterError(f"m must satisfy 1 <= m < p, got m={m!r}, p={p}")
    p, m = int(p), int(m)
    rng = np.random.default_rng(seed)
    size = 4 * m * p + 64
    # random(k) is a prefix of random(K) for K > k, so growing the buffer
    # keeps the graph identical for a given seed.
    seq = np.random.SeedSequence(rng.integers(2**63))
    while True:
        uniforms = np.random.default_rng(seq).random(size)
        src, dst, used = _kernels.ba_edges(p, m, uniforms)
        if used >= 0:
            break
        size *= 2
    return FeatureGraph(p, np.column_stack([src, dst]))


def adjacency(graph: FeatureGraph, dtype=np.int8) -> np.ndarray:
    """Binary adjacency with unit diagonal."""
    a = np.zeros((graph.p, graph.p), dtype=dtype)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    a[u, v] = 1
    a[v, u] = 1
    np.fill_diagonal(a, 1)
    return a


def all_pairs_distances(graph: FeatureGraph) -> np.ndarray:
    """Hop-count matrix; unreachable pairs hold ``UNREACHABLE`` (-1)."""
    indptr, indices = graph.csr()
    return _kernels.bfs_all_pairs(indptr, indices, graph.p)


def all_pairs_distances_from(graph: FeatureGraph, source: int) -> np.ndarray:
    indptr, indices = graph.csr()
    dist = np.full(graph.p, UNREACHABLE, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for w in indices[indptr[v]:indptr[v + 1]]:
                if dist[w] == UNREACHABLE:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist


def _split_evenly(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _two_hop(indptr, indices, v):
    """Vertices at distance exactly 1 or 2 from ``v``."""
    hop1 = indices[indptr[v]:indptr[v + 1]]
    out = set(int(w) for w in hop1)
    for w in hop1:
        out.update(int(x) for x in indices[indptr[w]:indptr[w + 1]])
    out.discard(int(v))
    return out


def _grow_cliques(indptr, indices, cores, quotas, rng):
    taken = set(int(c) for c in cores)
    groups = []
    used_two_hop = False
    for core, quota in zip(cores, quotas):
        group = [int(core)]
        need = quota - 1
        hop1 = indices[indptr[core]:indptr[core + 1]]
        avail = np.array([w for w in hop1 if int(w) not in taken], dtype=np.int64)
        pick = [int(w) for w in rng.permutation(avail)[:need]]
        group.extend(pick)
        taken.update(pick)
        need -= len(pick)
        if need > 0:
            used_two_hop = True
            second = np.array(sorted(w for w in _two_hop(indptr, indices, core) if w not in taken),
                              dtype=np.int64)
            if len(second) < need:
                raise GenerationError(
                    f"core {int(core)} cannot supply {quota} clique members within 2 hops")
            pick = [int(w) for w in rng.permutation(second)[:need]]
            group.extend(pick)
            taken.update(pick)
        groups.append(np.array(group, dtype=np.int64))
    return groups, used_two_hop


def select_predictors(graph: FeatureGraph, p0: int, n_cores: int,
                      singleton_fraction: float = 0.0, seed=None) -> PredictorSet:
    """Pick ``p0`` true predictors: cliques grown around high-degree cores
    plus scattered singletons.

    Cores are drawn uniformly from the top decile of vertices by degree,
    restricted to those whose 2-hop neighbourhood can hold a clique. Each
    core gets an even share of the clique quota, filled with random
    neighbours; when a core's direct neighbourhood runs short the remainder
    comes from its 2-hop neighbourhood. Singletons are drawn from vertices
    that are neither clique members nor adjacent to any core.
    """
    p = graph.p
    if not 0 <= p0 <= p:
        raise ParameterError(f"p0 must lie in [0, {p}], got {p0}")
    if not 0.0 <= singleton_fraction <= 1.0:
        raise ParameterError(f"singleton_fraction must lie in [0, 1], got {singleton_fraction}")
    rng = np.random.default_rng(seed)
    n_single = int(round(singleton_fraction * p0))
    n_clique = p0 - n_single
    empty = np.empty(0, dtype=np.int64)

    cores = empty
    members: list[int] = []
    groups: list = []
    used_two_hop = False
    indptr, indices = graph.csr()

    if n_clique > 0:
        if n_cores < 1:
            raise ParameterError("n_cores must be >= 1 when cliques are requested")
        if n_cores > n_clique:
            raise ParameterError(f"cannot build {n_cores} cliques from {n_clique} predictors")
        deg = graph.degree
        quotas = _split_evenly(n_clique, n_cores)
        top = max(int(math.ceil(p / 10)), n_cores)
        pool = np.argsort(-deg, kind="stable")[:top]
        # only hubs whose 2-hop neighbourhood can hold the largest clique
        reach = np.array([len(_two_hop(indptr, indices, v)) for v in pool])
        pool = np.sort(pool[reach >= quotas[0] - 1])
        if len(pool) < n_cores:
            raise GenerationError(
                f"only {len(pool)} high-degree vertices can anchor a clique of {quotas[0]}")
        for _attempt in range(20):
            cores = np.sort(rng.choice(pool, size=n_cores, replace=False)).astype(np.int64)
            try:
                groups, used_two_hop = _grow_cliques(indptr, indices, cores, quotas, rng)
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(f"could not place {n_cores} disjoint cliques of ~{quotas[0]}")
        members = [int(v) for g in groups for v in g]

    singletons = empty
    if n_single > 0:
        excluded = np.zeros(p, dtype=bool)
        excluded[np.asarray(members, dtype=np.int64)] = True
        for c in cores:
            excluded[c] = True
            excluded[indices[indptr[c]:indptr[c + 1]]] = True
        pool = np.flatnonzero(~excluded)
        if len(pool) < n_single:
            raise GenerationError(f"only {len(pool)} vertices available for {n_single} singletons")
        singletons = np.sort(rng.choice(pool, size=n_single, replace=False)).astype(np.int64)

    return PredictorSet(
        clique_members=np.asarray(members, dtype=np.int64),
        singletons=singletons,
        cores=cores,
        used_two_hop=used_two_hop,
        groups=groups,
    )


def read_edge_list(path):
    """Parse a whitespace-separated edge list.

    Returns the graph and the list of vertex names in first-appearance order
    (position = vertex index).
    """
    index: dict[str, int] = {}
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 2:
                raise ParameterError(f"{path}:{lineno}: expected two vertex identifiers")
            ids = []
            for name in parts[:2]:
                if name not in index:
                    index[name] = len(index)
                ids.append(index[name])
            pairs.append(ids)
    names = list(index)
    if not names:
        raise ParameterError(f"{path}: no edges")
    return FeatureGraph.from_pairs(len(names), pairs), names
