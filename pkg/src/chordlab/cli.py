"""Command-line entry point: ``chordlab {ingest,train,xval,search,interpret,report}``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from pathlib import Path

import numpy as np

from chordlab import corpus as corpus_mod
from chordlab._rng import make_rng
from chordlab.errors import ChordLabError, DivergedLoss, NoCorrectPredictions, NotMultiFeature
from chordlab.interpret import (export_figure_data, export_gnuplot, feature_attribution,
                                position_influence)
from chordlab.models import MODEL_KINDS, STATISTICAL_KINDS, accepted_params, is_multi_feature, load_model
from chordlab.train.crossval import SearchSpace, best_record, cross_validate, run_fold, search
from chordlab.train.tracking import DEFAULT_STORE, RunRecord, list_runs, record_run

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
METRIC_COLUMNS = ("accuracy", "perplexity", "similarity")

# flag, type, estimator parameter, help
HYPERPARAMETERS = [
    ("--alpha", float, "alpha", "additive smoothing constant (markov, vom)"),
    ("--max-order", int, "max_order", "maximum context order D (vom)"),
    ("--embed-dim", int, "embed_dim", "token embedding size (neural)"),
    ("--hidden-dim", int, "hidden_dim", "LSTM state or feed-forward size (neural)"),
    ("--layers", int, "n_layers", "number of stacked layers (neural)"),
    ("--heads", int, "n_heads", "attention heads (transformer kinds)"),
    ("--dropout", float, "dropout", "dropout rate (neural)"),
    ("--lr", float, "lr", "Adam learning rate (neural)"),
    ("--batch-size", int, "batch_size", "minibatch size (neural)"),
    ("--epochs", int, "max_epochs", "maximum training epochs (neural)"),
    ("--patience", int, "patience", "early-stopping patience in epochs (neural)"),
    ("--grad-clip", float, "grad_clip", "global gradient-norm clip, 0 disables (neural)"),
]


class UsageError(ChordLabError):
    """Invalid combination of command-line options."""


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_common(p, out_help, out_default="chordlab-out"):
    p.add_argument("--config", help="key = value config file; CLI flags win over it")
    p.add_argument("--seed", type=int, default=42, help="global seed for splits, init and search")
    p.add_argument("--out", default=out_default, help=out_help)
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")


def _add_corpus(p):
    p.add_argument("--corpus", required=True, help="corpus file")
    p.add_argument("--format", choices=("tokens", "harte"), default="tokens",
                   help="corpus format: canonical tokens, or Harte labels to parse and normalize")
    p.add_argument("--normalization", choices=corpus_mod.NORMALIZATION_POLICIES,
                   default=corpus_mod.DEFAULT_NORMALIZATION, help="chord normalization (harte format)")
    p.add_argument("--context-length", type=_positive_int, default=corpus_mod.DEFAULT_CONTEXT_LENGTH,
                   help="context window length L")
    p.add_argument("--target-feature", default="chord", help="feature to predict")


def _add_model(p):
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS), help="model kind")
    g = p.add_argument_group("hyperparameters (unset means the model's own default)")
    for flag, typ, _, text in HYPERPARAMETERS:
        g.add_argument(flag, type=typ, default=None, help=text)
    p.add_argument("--store", default=None,
                   help=f"run store path; unset falls back to $CHORDLAB_STORE, then ./{DEFAULT_STORE}")
    p.add_argument("--dataset", default=None, help="dataset tag recorded with runs (default: corpus name)")


def build_parser():
    parser = argparse.ArgumentParser(prog="chordlab", formatter_class=_Formatter,
                                     description="Next-chord prediction experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", formatter_class=_Formatter, help="parse and normalize a corpus",
                       description="Parse a corpus file, print statistics, optionally write the "
                                   "canonical token form.")
    p.add_argument("input", help="corpus file to read")
    p.add_argument("--format", choices=("tokens", "harte"), default="harte", help="input format")
    p.add_argument("--normalization", choices=corpus_mod.NORMALIZATION_POLICIES,
                   default=corpus_mod.DEFAULT_NORMALIZATION, help="chord normalization policy")
    p.add_argument("--config", help="key = value config file; CLI flags win over it")
    p.add_argument("--seed", type=int, default=42, help="unused by ingest; accepted for uniformity")
    p.add_argument("--out", default=None, help="canonical corpus file to write")
    p.add_argument("--jobs", type=_positive_int, default=1, help="unused by ingest")

    p = sub.add_parser("train", formatter_class=_Formatter, help="fit one model on a song split",
                       description="Fit on a song-level train split, evaluate on held-out songs, "
                                   "write a checkpoint and append a run record.")
    _add_common(p, "directory for the checkpoint")
    _add_corpus(p)
    _add_model(p)
    p.add_argument("--test-fraction", type=float, default=0.2, help="share of songs held out")

    p = sub.add_parser("xval", formatter_class=_Formatter, help="k-fold cross-validation",
                       description="Song-level k-fold cross-validation; appends one run record.")
    _add_common(p, "directory for fold checkpoints (with --save-checkpoints)")
    _add_corpus(p)
    _add_model(p)
    p.add_argument("--k", type=int, default=5, help="number of folds")
    p.add_argument("--save-checkpoints", action="store_true", help="write one checkpoint per fold")

    p = sub.add_parser("search", formatter_class=_Formatter, help="random hyperparameter search",
                       description="Random search; every trial is a k-fold cross-validation "
                                   "appended to the run store.")
    _add_common(p, "directory for fold checkpoints (with --save-checkpoints)")
    _add_corpus(p)
    _add_model(p)
    p.add_argument("--k", type=int, default=5, help="number of folds per trial")
    p.add_argument("--trials", type=int, default=10, help="number of trials")
    p.add_argument("--save-checkpoints", action="store_true", help="write one checkpoint per fold")

    p = sub.add_parser("interpret", formatter_class=_Formatter, help="occlusion analysis",
                       description="Position influence or feature attribution of a checkpoint, "
                                   "exported as CSV, JSON and gnuplot data files.")
    _add_common(p, "directory for the exported figure data", out_default="chordlab-interpret")
    p.add_argument("--checkpoint", required=True, help="model file written by train or xval")
    _add_corpus(p)
    p.add_argument("--mode", choices=("positions", "features"), default="positions",
                   help="per-offset profile or per-feature grid")
    p.add_argument("--max-samples", type=_positive_int, default=None,
                   help="use only the first N windows")

    p = sub.add_parser("report", formatter_class=_Formatter, help="compare model kinds",
                       description="Best run per model kind from the run store, printed and "
                                   "written as CSV.")
    p.add_argument("--config", help="key = value config file; CLI flags win over it")
    p.add_argument("--seed", type=int, default=None, help="only include runs with this seed")
    p.add_argument("--out", default="report.csv", help="CSV file to write")
    p.add_argument("--jobs", type=_positive_int, default=1, help="unused by report")
    p.add_argument("--store", default=None,
                   help=f"run store path; unset falls back to $CHORDLAB_STORE, then ./{DEFAULT_STORE}")
    p.add_argument("--model", choices=list(MODEL_KINDS), default=None, help="only this model kind")
    p.add_argument("--dataset", default=None, help="only runs with this dataset tag")
    return parser, sub.choices


# ---------------------------------------------------------------- config


def _config_defaults(path, command, subparser):
    """Read ``[chordlab]`` and ``[<command>]`` sections as parser defaults."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    raw = {}
    for section in ("chordlab", command):
        if cp.has_section(section):
            raw.update({k.replace("-", "_"): v for k, v in cp.items(section)})
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, text in raw.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"{path}: unknown option {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            value = cp.BOOLEAN_STATES.get(text.lower())
            if value is None:
                raise UsageError(f"{path}: {key} must be a boolean")
        else:
            try:
                value = action.type(text) if action.type else text
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
        defaults[key] = value
        action.required = False
    return defaults


def parse_args(argv=None):
    parser, subparsers = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command:
        subparsers[command].set_defaults(**_config_defaults(known.config, command, subparsers[command]))
    return parser.parse_args(argv)


# ---------------------------------------------------------------- helpers


def format_value(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def format_table(headers, rows):
    cells = [[str(h) for h in headers]] + [[format_value(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(row, widths)))
             for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _store_path(args):
    if getattr(args, "store", None):
        return Path(args.store)
    return Path(os.environ.get("CHORDLAB_STORE") or DEFAULT_STORE)


def _hyper_dests(args):
    """Estimator parameters for the hyperparameter flags that were set.

    Flags the chosen model does not accept are dropped with a note on stderr.
    """
    accepted = set(accepted_params(args.model))
    out = {}
    for flag, _, name, _ in HYPERPARAMETERS:
        value = getattr(args, flag.lstrip("-").replace("-", "_"), None)
        if value is None:
            continue
        if name in accepted:
            out[name] = value
        else:
            print(f"chordlab: note: {flag} does not apply to {args.model}; ignored", file=sys.stderr)
    return out


def _load(args):
    c = corpus_mod.load_corpus(args.corpus, format=args.format, normalization=args.normalization)
    if c.n_songs == 0:
        raise UsageError(f"{args.corpus}: corpus has no songs")
    c.feature_index(args.target_feature)
    return c


def _check_model_fits_corpus(kind, c, params):
    if is_multi_feature(kind) and len(c.features) < 2:
        raise UsageError(f"model {kind!r} needs a corpus with two or more features")
    if kind not in STATISTICAL_KINDS:
        for key in ("lr", "dropout"):
            if key in params and not (0 < params[key] if key == "lr" else 0 <= params[key] < 1):
                raise UsageError(f"invalid value for {key}: {params[key]}")


def _print_record_table(record):
    rows = []
    for f in record.folds:
        if f.get("status") == "ok":
            rows.append([f["fold"], f["n_test_songs"], f["n"]] + [f[m] for m in METRIC_COLUMNS])
        else:
            rows.append([f["fold"], f["n_test_songs"], "-", "failed", "-", "-"])
    if record.mean:
        rows.append(["mean", "", ""] + [record.mean[m] for m in METRIC_COLUMNS])
        rows.append(["std", "", ""] + [record.std[m] for m in METRIC_COLUMNS])
    print(format_table(["fold", "songs", "samples", *METRIC_COLUMNS], rows))


def _describe(params):
    return " ".join(f"{k}={format_value(v) if isinstance(v, float) else v}"
                    for k, v in sorted(params.items())) or "defaults"


# ---------------------------------------------------------------- commands


def cmd_ingest(args):
    c = corpus_mod.load_corpus(args.input, format=args.format, normalization=args.normalization)
    stats = c.stats()
    print(f"songs: {stats['songs']}")
    print(f"tokens: {stats['tokens']}")
    print(format_table(["feature", "vocab_size"], [[f, n] for f, n in stats["vocab_sizes"].items()]))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        corpus_mod.write_corpus(c, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_train(args):
    c = _load(args)
    params = _hyper_dests(args)
    _check_model_fits_corpus(args.model, c, params)
    if not 0 < args.test_fraction < 1:
        raise UsageError("--test-fraction must lie in (0, 1)")
    if c.n_songs < 2:
        raise UsageError("training needs at least two songs (one held out)")
    perm = make_rng(args.seed, 0x7E57).permutation(c.n_songs)
    n_test = min(max(1, int(round(args.test_fraction * c.n_songs))), c.n_songs - 1)
    test_ids, train_ids = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    out = Path(args.out)
    ckpt = out / f"{args.model}-seed{args.seed}.json"
    fold = run_fold(args.model, params, c, train_ids, test_ids, 0, args.seed,
                    context_length=args.context_length, target_feature=args.target_feature,
                    checkpoint_path=ckpt)
    record = RunRecord(kind=args.model, hyperparams=params, folds=[fold], seed=args.seed, k=1,
                       dataset=args.dataset or c.name,
                       checkpoints=[fold["checkpoint"]] if "checkpoint" in fold else [])
    record.aggregate()
    record_run(record, _store_path(args))
    print(f"model: {args.model}  seed: {args.seed}  params: {_describe(params)}")
    if record.status != "ok":
        print(f"training failed: {fold.get('error')}", file=sys.stderr)
        return EXIT_RUNTIME
    print(format_table(["train_songs", "test_songs", "samples", *METRIC_COLUMNS],
                       [[fold["n_train_songs"] + fold["n_val_songs"], fold["n_test_songs"], fold["n"]]
                        + [fold[m] for m in METRIC_COLUMNS]]))
    print(f"checkpoint: {ckpt}")
    print(f"run {record.run_id} appended to {_store_path(args)}", file=sys.stderr)
    return EXIT_OK


def cmd_xval(args):
    c = _load(args)
    params = _hyper_dests(args)
    _check_model_fits_corpus(args.model, c, params)
    corpus_mod.split_kfold(c, args.k, args.seed)     # validate k before any work
    record = cross_validate(args.model, c, args.k, params, args.seed,
                            context_length=args.context_length, target_feature=args.target_feature,
                            dataset=args.dataset, jobs=args.jobs,
                            checkpoint_dir=args.out if args.save_checkpoints else None)
    record_run(record, _store_path(args))
    print(f"model: {args.model}  k: {args.k}  seed: {args.seed}  params: {_describe(params)}")
    _print_record_table(record)
    print(f"run {record.run_id} appended to {_store_path(args)}", file=sys.stderr)
    if record.status != "ok":
        print(f"cross-validation failed: {record.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_search(args):
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    c = _load(args)
    params = _hyper_dests(args)
    _check_model_fits_corpus(args.model, c, params)
    corpus_mod.split_kfold(c, args.k, args.seed)
    store = _store_path(args)
    best, trials = search(args.model, c, SearchSpace(), args.trials, args.seed, args.k,
                          base_params=params, jobs=args.jobs, store_path=store,
                          context_length=args.context_length, target_feature=args.target_feature,
                          dataset=args.dataset,
                          checkpoint_dir=args.out if args.save_checkpoints else None)
    print(f"model: {args.model}  trials: {args.trials}  k: {args.k}  seed: {args.seed}")
    rows = []
    for r in trials:
        metrics = [r.mean[m] for m in METRIC_COLUMNS] if r.mean and r.status == "ok" else ["-"] * 3
        rows.append([r.trial, r.status, *metrics, _describe(r.hyperparams)])
    print(format_table(["trial", "status", *METRIC_COLUMNS, "params"], rows))
    print(f"{len(trials)} runs appended to {store}", file=sys.stderr)
    if best is None:
        print("every trial failed", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"best: trial {best.trial}  accuracy {format_value(best.mean['accuracy'])}  "
          f"perplexity {format_value(best.mean['perplexity'])}  params: {_describe(best.hyperparams)}")
    return EXIT_OK


def cmd_interpret(args):
    model = load_model(args.checkpoint)
    multi = getattr(model, "multi_feature", False)
    if args.mode == "features" and not multi:
        raise NotMultiFeature(f"{args.checkpoint} holds a single-feature {model.kind!r} model")
    c = _load(args)
    features = getattr(model, "features_", None)
    vocabs = getattr(model, "vocab_tokens_", None)
    if multi:
        c = c.reencode(features, vocabs)
        target = c.features[model.target_feature]
    else:
        target = args.target_feature
        if features and target not in c.features:
            target = features[0]
        c = c.reencode(None, vocabs)
    L = getattr(model, "context_length", None) or args.context_length
    w = corpus_mod.make_windows(c, L, target)
    X, y = w.inputs_for(multi), w.y
    if args.max_samples:
        X, y = X[:args.max_samples], y[:args.max_samples]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "positions":
        result, stem = position_influence(model, X, y), "position_influence"
        print(format_table(["position", "influence"], result.rows()))
    else:
        result, stem = feature_attribution(model, X, y, features=c.features), "feature_attribution"
        headers = ["feature", *[str(int(o)) for o in result.offsets]]
        print(format_table(headers, [[f, *result.influence[i]] for i, f in enumerate(result.features)]))
        feat, off = result.argmax()
        print(f"max cell: {feat} at {off}")
    print(f"samples used (correct predictions): {result.n}")
    written = [export_figure_data(result, out / f"{stem}.csv"),
               export_figure_data(result, out / f"{stem}.json"),
               *export_gnuplot(result, out / "gnuplot", stem)]
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def report_rows(records):
    """One row per model kind: the best run's metrics, in registry order."""
    by_kind = {}
    for r in records:
        by_kind.setdefault(r.kind, []).append(r)
    rows = []
    for kind in [k for k in MODEL_KINDS if k in by_kind] + sorted(set(by_kind) - set(MODEL_KINDS)):
        best = best_record(by_kind[kind])
        if best is None:
            rows.append([kind, len(by_kind[kind]), "-", "-", "-", "-", "-"])
            continue
        rows.append([kind, len(by_kind[kind]), best.mean["accuracy"], best.mean["perplexity"],
                     best.mean["similarity"], best.seed, best.dataset])
    return rows


def cmd_report(args):
    records = list_runs(_store_path(args), kind=args.model, dataset=args.dataset)
    if args.seed is not None:
        records = [r for r in records if r.seed == args.seed]
    if not records:
        print("no runs")
        return EXIT_OK
    headers = ["model", "runs", *METRIC_COLUMNS, "seed", "dataset"]
    rows = report_rows(records)
    print(format_table(headers, rows))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        w.writerows([[format_value(v) for v in r] for r in rows])
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "xval": cmd_xval, "search": cmd_search,
            "interpret": cmd_interpret, "report": cmd_report}


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as exc:       # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ChordLabError, OSError, ValueError) as exc:
        print(f"chordlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (DivergedLoss, NoCorrectPredictions) as exc:
        print(f"chordlab: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ChordLabError, FileNotFoundError, IsADirectoryError, ValueError, KeyError) as exc:
        print(f"chordlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:        # anything else is a runtime failure
        print(f"chordlab: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
