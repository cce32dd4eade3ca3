"""Reading and writing expression matrices, labels, edge lists and results.

Expression files are delimited text with samples as rows: a header row
``sample_id,<feature>,...`` followed by one row per sample. Label files hold
``sample_id,label`` rows, with an optional header. Graphs are whitespace
separated edge lists of feature names. Floats are written with 17
significant digits so a write/read cycle is lossless.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError
from .graph_core import FeatureGraph, read_edge_list

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


@dataclass
class IngestedDataset:
    X: np.ndarray
    y: np.ndarray | None
    feature_names: list
    sample_ids: list
    dropped_features: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def index(self) -> dict:
        return {name: i for i, name in enumerate(self.feature_names)}


@contextmanager
def atomic_write(path, mode="w", **kw):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _delimiter(first_line: str) -> str:
    return "\t" if "\t" in first_line else ","


def read_expression(path, transpose: bool = False):
    """Return ``(X, sample_ids, feature_names)``.

    With ``transpose`` the file has features as rows and samples as columns.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        rows = [r for r in csv.reader(fh, delimiter=_delimiter(first)) if r]
    if len(rows) < 2:
        raise IngestionError(f"{path}: expected a header row and at least one data row")
    header = [h.strip() for h in rows[0][1:]]
    row_ids = [r[0].strip() for r in rows[1:]]
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric expression value ({exc})") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise IngestionError(f"{path}: ragged rows")
    if transpose:
        values, header, row_ids = values.T.copy(), row_ids, header
    feature_names, sample_ids = header, row_ids
    for kind, names in (("feature", feature_names), ("sample", sample_ids)):
        seen = set()
        dups = sorted({n for n in names if n in seen or seen.add(n)})
        if dups:
            raise IngestionError(f"{path}: duplicate {kind} name(s): {', '.join(dups[:10])}")
    return values, sample_ids, feature_names


def read_labels(path, positive_label=None, known_ids=None) -> dict:
    """Map sample id to 0/1.

    Numeric labels must already be 0/1. Any other labels need
    ``positive_label``; every other value then maps to 0. A first row whose
    id is not in ``known_ids`` is treated as a header.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        rows = [r for r in csv.reader(fh, delimiter=_delimiter(first)) if r]
    if rows and known_ids is not None and rows[0][0].strip() not in known_ids:
        rows = rows[1:]
    if any(len(r) < 2 for r in rows):
        raise IngestionError(f"{path}: every row needs sample_id and label")
    raw = {r[0].strip(): r[1].strip() for r in rows}
    if positive_label is not None:
        return {k: int(v == str(positive_label)) for k, v in raw.items()}
    bad = sorted({v for v in raw.values() if v not in ("0", "1", "0.0", "1.0")})
    if bad:
        raise IngestionError(f"{path}: unmappable label value(s) {bad}; pass a positive label")
    return {k: int(float(v)) for k, v in raw.items()}


def zscore(X, feature_names=None):
    """Standardize columns to mean 0 and sample sd 1 (n - 1 denominator).

    Constant columns are dropped. Returns ``(Z, kept, mean, sd)`` where
    ``kept`` indexes the surviving columns.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise IngestionError("z-scoring needs at least two samples")
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    kept = np.flatnonzero(np.ptp(X, axis=0) > 0)
    if kept.size < X.shape[1]:
        gone = np.setdiff1d(np.arange(X.shape[1]), kept)
        names = [feature_names[i] for i in gone] if feature_names is not None else gone.tolist()
        log.warning("dropping %d constant feature(s): %s", gone.size, names[:10])
    Z = (X[:, kept] - mean[kept]) / sd[kept]
    return Z, kept, mean[kept], sd[kept]


def subgraph(graph: FeatureGraph, names: list, keep: list) -> FeatureGraph:
    """Induced subgraph on ``keep`` (names), indexed in ``keep`` order."""
    pos = {n: i for i, n in enumerate(keep)}
    idx = np.array([pos.get(n, -1) for n in names], dtype=np.int64)
    e = idx[graph.edges]
    e = e[(e >= 0).all(axis=1)]
    return FeatureGraph(len(keep), e)


def ingest(expression_path, labels_path=None, edgelist_path=None, positive_label=None,
           transpose: bool = False, standardize: bool = False):
    """Load data and graph into one feature index space.

    Features missing from the graph are dropped, then features are ordered
    by name; samples without a label are dropped and samples are ordered by
    id. Returns ``(IngestedDataset, FeatureGraph)`` (the graph is ``None``
    when no edge list is given).
    """
    X, sample_ids, feature_names = read_expression(expression_path, transpose)
    counts = {"samples_in": len(sample_ids), "features_in": len(feature_names)}
    graph = None
    if edgelist_path is not None:
        full, gnames = read_edge_list(edgelist_path)
        shared = set(gnames) & set(feature_names)
        if not shared:
            raise IngestionError("no feature of the expression matrix appears in the graph")
        keep = sorted(shared)
    else:
        keep = sorted(feature_names)
    col = {n: i for i, n in enumerate(feature_names)}
    X = X[:, [col[n] for n in keep]]
    dropped = sorted(set(feature_names) - set(keep))

    y = None
    if labels_path is not None:
        labels = read_labels(labels_path, positive_label, known_ids=set(sample_ids))
        missing = [s for s in sample_ids if s not in labels]
        if missing:
            log.warning("%d sample(s) without a label dropped", len(missing))
        order = sorted(s for s in sample_ids if s in labels)
        if not order:
            raise IngestionError("no sample has a label")
    else:
        order = sorted(sample_ids)
    row = {s: i for i, s in enumerate(sample_ids)}
    X = X[[row[s] for s in order]]
    if labels_path is not None:
        y = np.array([labels[s] for s in order], dtype=np.int64)

    if standardize:
        X, kept, _, _ = zscore(X, keep)
        if kept.size < len(keep):
            dropped += [keep[i] for i in np.setdiff1d(np.arange(len(keep)), kept)]
            keep = [keep[i] for i in kept]
    if edgelist_path is not None:
        graph = subgraph(full, gnames, keep)
    counts.update(samples=len(order), features=len(keep))
    log.info("ingested %d -> %d features, %d samples", counts["features_in"], len(keep), len(order))
    return IngestedDataset(X, y, list(keep), order, sorted(dropped), counts), graph


# --- writers -----------------------------------------------------------------

def write_expression(path, X, sample_ids, feature_names):
    with atomic_write(path, newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *feature_names])
        for sid, row in zip(sample_ids, X):
            w.writerow([sid, *(FLOAT_FMT % v for v in row)])


def write_labels(path, sample_ids, y):
    with atomic_write(path, newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label"])
        for sid, lab in zip(sample_ids, y):
            w.writerow([sid, int(lab)])


def write_edge_list(path, graph: FeatureGraph, names):
    with atomic_write(path) as fh:
        for u, v in graph.edges:
            fh.write(f"{names[u]} {names[v]}\n")


def synthetic_names(n, p):
    wf, ws = len(str(max(p - 1, 0))), len(str(max(n - 1, 0)))
    return [f"s{i:0{ws}d}" for i in range(n)], [f"g{j:0{wf}d}" for j in range(p)]


def export_dataset(directory, dataset):
    """Write ``expression.csv``, ``labels.csv`` and ``graph.txt`` for a synthetic dataset.

    Names are zero-padded so their sorted order is the column order.
    """
    d = Path(directory)
    sids, fnames = synthetic_names(dataset.n, dataset.p)
    write_expression(d / "expression.csv", dataset.X, sids, fnames)
    write_labels(d / "labels.csv", sids, dataset.y)
    graph = dataset.graph
    isolated = np.flatnonzero(graph.degree == 0)
    write_edge_list(d / "graph.txt", graph, fnames)
    if isolated.size:
        # isolated vertices have no edge line; list them as self-pairs, which
        # the reader registers as vertices and the graph drops as self-loops
        with open(d / "graph.txt", "a") as fh:
            for v in isolated:
                fh.write(f"{fnames[v]} {fnames[v]}\n")
    with atomic_write(d / "predictors.json") as fh:
        json.dump({"clique_members": [fnames[i] for i in dataset.predictors.clique_members],
                   "singletons": [fnames[i] for i in dataset.predictors.singletons],
                   "cores": [fnames[i] for i in dataset.predictors.cores]}, fh, indent=1)
    return d


def write_rows(path, rows, fieldnames):
    with atomic_write(path, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_json(path, obj):
    with atomic_write(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise IngestionError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.lstrip("-").replace("-", "_")] = v
    return out
