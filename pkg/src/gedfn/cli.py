"""Command-line entry point: ``gedfn simulate|train|evaluate|importance|rerun``.

Errors are reported on stderr as one line ``gedfn-error[<kind>]: <message>``
with exit code 1 (usage), 2 (data) or 3 (numerical divergence).
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from . import neuralnet as nn
from .errors import GedfnError, ParameterError
from .graph_core import adjacency
from .importance import importance_scores, top_fraction
from .io import file_sha256, ingest, read_config, read_expression, write_json, write_rows
from .metrics_eval import evaluate
from .trainer import BENCHMARK_CELLS, BENCHMARK_SINGLETONS, ExperimentGrid, TrainConfig, run_grid, split, train_model

log = logging.getLogger("gedfn")

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, default=None)
    g.add_argument("--batch-size", type=int, default=None)
    g.add_argument("--epochs", type=int, default=None)
    g.add_argument("--l2", type=float, default=None, dest="l2_penalty")
    g.add_argument("--dropout", type=float, default=None, dest="dropout_rate")
    g.add_argument("--train-fraction", type=float, default=None)
    g.add_argument("--no-stratify", action="store_true", default=None)
    g.add_argument("--config", type=Path, help="key = value file; command-line flags win")


def build_parser():
    parser = _Parser(prog="gedfn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gedfn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.set_defaults(_sub=sub)

    s = sub.add_parser("simulate", help="synthetic GEDFN vs DFN benchmark")
    s.add_argument("--grid", choices=["full"], help="run every cell of the standard benchmark grid")
    s.add_argument("--p", type=int, default=5000)
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--p0", type=int, default=40)
    s.add_argument("--cores", type=int, default=None, help="default: p0 / 20")
    s.add_argument("--singleton-frac", type=float, default=0.0)
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--m", type=int, default=1, help="edges per new vertex in the BA graph")
    s.add_argument("--models", default="GEDFN,DFN")
    s.add_argument("--freeze-graph", action="store_true")
    s.add_argument("--negative-prob", type=float, default=0.5,
                   help="probability that a true coefficient is negative")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", type=Path, required=True)
    _add_train_flags(s)

    t = sub.add_parser("train", help="fit a model on an expression matrix")
    t.add_argument("--expr", type=Path, required=True)
    t.add_argument("--labels", type=Path, required=True)
    t.add_argument("--graph", type=Path, required=True)
    t.add_argument("--positive-label", default=None)
    t.add_argument("--transpose", action="store_true", help="expression file is features x samples")
    t.add_argument("--no-zscore", action="store_true")
    t.add_argument("--dense", action="store_true", help="fully connected first layer (DFN)")
    t.add_argument("--dfn-width", type=int, default=512)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--checkpoint-out", type=Path, required=True)
    t.add_argument("--out", type=Path, default=None, help="directory for logs and manifest")
    _add_train_flags(t)

    e = sub.add_parser("evaluate", help="AUC and accuracy of a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--expr", type=Path, required=True)
    e.add_argument("--labels", type=Path, required=True)
    e.add_argument("--positive-label", default=None)
    e.add_argument("--transpose", action="store_true")
    e.add_argument("--test-only", action="store_true", help="restrict to the checkpoint's test split")
    e.add_argument("--out", type=Path, default=None)

    i = sub.add_parser("importance", help="perturbation importance scores from a checkpoint")
    i.add_argument("--checkpoint", type=Path, required=True)
    i.add_argument("--expr", type=Path, required=True)
    i.add_argument("--transpose", action="store_true")
    i.add_argument("--delta", type=float, default=0.05)
    i.add_argument("--epsilon-floor", type=float, default=1e-6)
    i.add_argument("--top-frac", type=float, default=0.05)
    i.add_argument("--all-samples", action="store_true", help="score on every sample, not the test split")
    i.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("rerun", help="repeat a run from its manifest")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, required=True)
    return parser


def _train_config(args, seed) -> TrainConfig:
    values = {k: getattr(args, k) for k in
              ("lr", "batch_size", "epochs", "l2_penalty", "dropout_rate", "train_fraction")
              if getattr(args, k, None) is not None}
    if getattr(args, "no_stratify", None):
        values["stratify"] = False
    return TrainConfig(seed=seed, **values)


def _apply_config(parser, sub, args, argv):
    """Re-parse with values from ``--config`` installed as subcommand defaults."""
    sp = sub.choices[args.command]
    actions = {a.dest: a for a in sp._actions}
    aliases = {"l2": "l2_penalty", "dropout": "dropout_rate"}
    defaults = {}
    for key, raw in read_config(args.config).items():
        dest = aliases.get(key, key)
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} in {args.config}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[dest] = action.type(raw) if action.type else raw
            except ValueError:
                raise UsageError(f"bad value {raw!r} for config key {key!r}") from None
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _manifest(args, argv, config, started, inputs=(), extra=None):
    return {
        "tool": "gedfn",
        "version": __version__,
        "subcommand": args.command,
        "argv": list(argv),
        "config": asdict(config) if config is not None else None,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): file_sha256(p) for p in inputs if p is not None},
        "numpy": np.__version__,
        "python": platform.python_version(),
        "backend": _kernels.backend(),
        "wall_time": time.time() - started,
        **(extra or {}),
    }


def cmd_simulate(args, argv):
    started = time.time()
    config = _train_config(args, args.seed)
    if args.grid == "full":
        cells, sfs = BENCHMARK_CELLS, BENCHMARK_SINGLETONS
    else:
        cores = args.cores if args.cores is not None else max(args.p0 // 20, 1 if args.p0 else 0)
        cells, sfs = [(args.p0, cores)], (args.singleton_frac,)
    models = tuple(m.strip().upper() for m in args.models.split(",") if m.strip())
    grid = ExperimentGrid(p=args.p, n=args.n, cells=cells, singleton_fractions=sfs,
                          replicates=args.replicates, models=models, m=args.m,
                          freeze_graph=args.freeze_graph, negative_prob=args.negative_prob)
    summary, results = run_grid(grid, args.seed, config, workers=args.workers)
    out = args.out
    rep_rows = []
    keyed = {}
    for r in results:
        keyed.setdefault((r.p0, r.n_cores, r.singleton_fraction, r.replicate, r.seed), {})[r.model] = r
    for (p0, cores, sf, rep, seed), by_model in sorted(keyed.items()):
        row = {"p0": p0, "n_cores": cores, "singleton_fraction": sf, "replicate": rep, "seed": seed}
        for m in models:
            row[f"{m.lower()}_auc"] = repr(by_model[m].auc)
            row[f"{m.lower()}_train_loss"] = repr(by_model[m].train_loss)
            if by_model[m].error:
                row[f"{m.lower()}_error"] = by_model[m].error
        rep_rows.append(row)
    fields = ["p0", "n_cores", "singleton_fraction", "replicate", "seed"]
    for m in models:
        fields += [f"{m.lower()}_auc", f"{m.lower()}_train_loss", f"{m.lower()}_error"]
    write_rows(out / "replicates.csv", rep_rows, fields)
    for row in summary:
        row["replicate_aucs"] = ";".join(repr(a) for a in row["replicate_aucs"])
        row["mean_auc"], row["sd_auc"] = repr(row["mean_auc"]), repr(row["sd_auc"])
    write_rows(out / "summary.csv", summary,
               ["p0", "n_cores", "singleton_fraction", "model", "mean_auc", "sd_auc",
                "n_completed", "replicate_aucs"])
    write_json(out / "manifest.json", _manifest(
        args, argv, config, started, [args.config] if args.config else (),
        {"replicate_seeds": sorted({r.seed for r in results}),
         "config_fingerprints": sorted({r.config_fingerprint for r in results})}))
    for row in summary:
        print(f"p0={row['p0']} singletons={row['singleton_fraction']} {row['model']}: "
              f"mean AUC {float(row['mean_auc']):.4f} ({row['n_completed']} replicates)")
    return 0


def _load(path):
    spec, params, _, meta = nn.load_checkpoint(path)
    return spec, params, meta["extra"]


def _prepare(extra, expr, transpose, labels=None, positive_label=None):
    """Read a matrix, align it to the checkpoint's features and apply its z-score."""
    from .io import read_labels

    X, sids, fnames = read_expression(expr, transpose)
    col = {n: i for i, n in enumerate(fnames)}
    missing = [f for f in extra["feature_names"] if f not in col]
    if missing:
        raise GedfnError(f"{expr}: {len(missing)} model feature(s) missing, e.g. {missing[:5]}")
    order = sorted(sids)
    row = {s: i for i, s in enumerate(sids)}
    X = X[np.ix_([row[s] for s in order], [col[f] for f in extra["feature_names"]])]
    if extra.get("zscore_mean") is not None:
        X = (X - np.asarray(extra["zscore_mean"])) / np.asarray(extra["zscore_sd"])
    y = None
    if labels is not None:
        lab = read_labels(labels, positive_label or extra.get("positive_label"), known_ids=set(sids))
        keep = [i for i, s in enumerate(order) if s in lab]
        order = [order[i] for i in keep]
        X = X[keep]
        y = np.array([lab[s] for s in order], dtype=np.int64)
    return X, y, order


def cmd_train(args, argv):
    started = time.time()
    config = _train_config(args, args.seed)
    data, graph = ingest(args.expr, args.labels, args.graph, args.positive_label, args.transpose)
    p = len(data.feature_names)
    X = data.X
    mean = sd = None
    constant = []
    if not args.no_zscore:
        from .io import subgraph, zscore

        X, kept, mean, sd = zscore(X, data.feature_names)
        if kept.size < p:
            names = [data.feature_names[i] for i in kept]
            constant = sorted(set(data.feature_names) - set(names))
            graph = subgraph(graph, data.feature_names, names)
            data.feature_names = names
            p = kept.size
    train, test = split(data.y, config.train_fraction, config.seed, config.stratify)
    if args.dense:
        spec = nn.dfn_spec(p, first=args.dfn_width, dropout=config.dropout_rate)
    else:
        spec = nn.gedfn_spec(p, adjacency(graph), dropout=config.dropout_rate)
    params, state, hist = train_model(spec, X[train], data.y[train], config,
                                      X_val=X[test], y_val=data.y[test])
    res = evaluate(nn.predict_proba(params, spec, X[test]), data.y[test])
    extra = {
        "feature_names": data.feature_names,
        "zscore_mean": mean, "zscore_sd": sd,
        "positive_label": args.positive_label,
        "test_samples": [data.sample_ids[i] for i in test],
        "train_samples": [data.sample_ids[i] for i in train],
        "test_auc": res.auc, "model": "DFN" if args.dense else "GEDFN",
    }
    nn.save_checkpoint(args.checkpoint_out, spec, params, state, seed=config.seed,
                       extra=_jsonable(extra))
    out = args.out or args.checkpoint_out.parent
    write_rows(out / "train_log.csv",
               [{"epoch": i + 1, "train_loss": repr(a), "test_loss": repr(b)}
                for i, (a, b) in enumerate(zip(hist.epoch_loss, hist.val_loss))],
               ["epoch", "train_loss", "test_loss"])
    write_json(out / "metrics.json", {"test_auc": res.auc, "test_accuracy": res.accuracy,
                                      "n_pos": res.n_pos, "n_neg": res.n_neg,
                                      "features": p, "samples": len(data.sample_ids),
                                      "counts": data.counts})
    write_json(out / "manifest.json", _manifest(
        args, argv, config, started, [args.expr, args.labels, args.graph, args.config],
        {"checkpoint": str(args.checkpoint_out), "split_seed": config.seed,
         "screened_features": data.dropped_features, "constant_features": constant}))
    print(f"test AUC {res.auc:.4f}  accuracy {res.accuracy:.4f}  ({p} features)")
    return 0


def _jsonable(d):
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def cmd_evaluate(args, argv):
    spec, params, extra = _load(args.checkpoint)
    X, y, order = _prepare(extra, args.expr, args.transpose, args.labels, args.positive_label)
    if args.test_only:
        test = set(extra["test_samples"])
        keep = [i for i, s in enumerate(order) if s in test]
        X, y = X[keep], y[keep]
    res = evaluate(nn.predict_proba(params, spec, X), y)
    print(f"AUC {res.auc!r} accuracy {res.accuracy!r} n_pos {res.n_pos} n_neg {res.n_neg}")
    if args.out:
        write_json(args.out / "evaluation.json", asdict(res))
    return 0


def cmd_importance(args, argv):
    started = time.time()
    spec, params, extra = _load(args.checkpoint)
    X, _, order = _prepare(extra, args.expr, args.transpose)
    if not args.all_samples and extra.get("test_samples"):
        test = set(extra["test_samples"])
        X = X[[i for i, s in enumerate(order) if s in test]]
    rep = importance_scores(params, spec, X, args.delta, args.epsilon_floor)
    names = extra["feature_names"]
    ranks = rep.ranks
    rows = [{"feature_id": names[j], "s_j": repr(float(rep.scores[j])),
             "abs_score": repr(float(abs(rep.scores[j]))), "rank": int(ranks[j])}
            for j in rep.ranking]
    write_rows(args.out / "importance.csv", rows, ["feature_id", "s_j", "abs_score", "rank"])
    top = top_fraction(rep, args.top_frac)
    with open(args.out / "top_features.txt", "w") as fh:
        fh.writelines(f"{names[j]}\n" for j in top)
    write_json(args.out / "manifest.json", _manifest(
        args, argv, None, started, [args.checkpoint, args.expr],
        {"delta": args.delta, "n_eval": rep.n_eval}))
    print(f"scored {len(names)} features on {rep.n_eval} samples; top {len(top)} written")
    return 0


def cmd_rerun(args, argv):
    import json

    manifest = json.loads(Path(args.manifest).read_text())
    old = list(manifest["argv"])
    if manifest["subcommand"] not in ("simulate", "train"):
        raise UsageError("only simulate and train runs can be repeated")
    new = []
    skip = False
    for tok in old:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        new.append(tok)
    new += ["--out", str(args.out)]
    if manifest["subcommand"] == "train":
        ck = ["--checkpoint-out", str(Path(args.out) / "model.npz")]
        i = new.index("--checkpoint-out")
        new = new[:i] + ck + new[i + 2:]
    return main(new)


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "importance": cmd_importance, "rerun": cmd_rerun}


def _fail(kind, message, code):
    print(f"gedfn-error[{kind}]: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(parser, args._sub, args, argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except GedfnError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail("usage", f"{exc.filename}: file not found", EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail("data", f"{exc.filename}: file not found", EXIT_DATA)
    except ParameterError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except GedfnError as exc:
        kind = "divergence" if exc.exit_code == EXIT_DIVERGENCE else "data"
        return _fail(kind, exc, exc.exit_code)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
