"""Operator surface: prepare | train | eval | predict | gradcheck.

Every subcommand writes exactly one JSON document to stdout (JSON lines
for streaming predict); diagnostics go to stderr. Exit codes: 0 success,
2 usage/config error, 3 numerical failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import gradcheck as gradcheck_mod
from . import ingest, model_zoo, textprep
from .optim import NonFiniteGradient, TrainConfig, fit, predict_in_batches
from .objective import evaluate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_VERIFICATION = 4

DEFAULT_TRAIN_FRAC = 0.8


def _default_seed():
    return int(os.environ.get("SEQVERITAS_SEED", "0"))


def _emit(doc):
    print(json.dumps(doc))


def _fail(msg, code=EXIT_USAGE):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _vocab_path(cache_path):
    return cache_path + ".vocab.json"


def cmd_prepare(args):
    fake = ingest.Dataset(ingest.load_articles(args.fake, label=1))
    true_ = ingest.Dataset(ingest.load_articles(args.true, label=0))
    merged = ingest.merge_shuffle(fake, true_, args.seed)
    n = len(merged)
    print(f"loaded {len(fake)} fake + {len(true_)} true = {n} articles",
          file=sys.stderr)

    token_lists = [textprep.preprocess(a.title, a.body)
                   for a in merged.records]
    # Vocabulary comes from the leading train fraction of the shuffled
    # order only, so the validation tail cannot leak tokens into it.
    n_train = int(args.train_frac * n)
    vocab = textprep.build_vocab(token_lists[:n_train],
                                 max_size=args.vocab_size,
                                 min_freq=args.min_freq)
    sequences = [textprep.encode(toks, vocab, args.maxlen)
                 for toks in token_lists]
    labels = [a.label for a in merged.records]
    textprep.write_cache(args.out, sequences, labels, len(vocab), args.maxlen)
    textprep.save_vocab(_vocab_path(args.out), vocab)

    counts = merged.label_counts()
    _emit({"config": _resolved(args),
           "fake": counts["fake"], "true": counts["true"], "total": n,
           "vocab_size": len(vocab), "cache": args.out,
           "vocab_file": _vocab_path(args.out)})
    return EXIT_OK


def _load_split(data_path, train_frac):
    """The cache is already shuffled by prepare; the split is the leading
    train fraction versus the tail (matching the vocabulary guard)."""
    x, y, vocab_size = textprep.read_cache(data_path)
    n_train = int(train_frac * len(x))
    if n_train == 0 or n_train == len(x):
        raise ingest.EmptySplit(f"cannot split {len(x)} records at {train_frac}")
    return (x[:n_train], y[:n_train].astype(np.float64),
            x[n_train:], y[n_train:].astype(np.float64), vocab_size)


def cmd_train(args):
    train_x, train_y, val_x, val_y, _ = _load_split(args.data, args.train_frac)
    vocab = textprep.load_vocab(_vocab_path(args.data))
    maxlen = train_x.shape[1]
    model = model_zoo.build(args.preset, vocab, maxlen=maxlen,
                            seed=args.seed, dtype=args.dtype)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                     seed=args.seed, patience=args.patience)
    print(f"training {args.preset}: {model.num_params()} parameters, "
          f"{train_x.shape[0]} train / {val_x.shape[0]} val",
          file=sys.stderr)
    history = fit(model, train_x, train_y, val_x, val_y, tc)
    model.save(args.out_checkpoint)
    history_path = args.history or args.out_checkpoint + ".history.jsonl"
    with open(history_path, "w") as f:
        f.write(history.to_jsonl() + "\n")

    probs = predict_in_batches(model, val_x)
    _, report = evaluate(probs, val_y)
    _emit({"config": _resolved(args),
           "checkpoint": args.out_checkpoint, "history": history_path,
           "epochs_run": len(history.epochs),
           "metrics": json.loads(report.to_json())})
    return EXIT_OK


def cmd_eval(args):
    model = model_zoo.load(args.checkpoint)
    if args.split == "all":
        x, y, _ = textprep.read_cache(args.data)
        y = y.astype(np.float64)
    else:
        train_x, train_y, val_x, val_y, _ = _load_split(args.data,
                                                        args.train_frac)
        x, y = ((train_x, train_y) if args.split == "train"
                else (val_x, val_y))
    probs = predict_in_batches(model, x)
    _, report = evaluate(probs, y)
    _emit({"config": _resolved(args),
           "split": args.split, "examples": int(x.shape[0]),
           "metrics": json.loads(report.to_json())})
    return EXIT_OK


def cmd_predict(args):
    model = model_zoo.load(args.checkpoint)
    if args.text is not None:
        texts = [args.text]
    else:
        texts = [line.rstrip("\n") for line in sys.stdin]
    for text in texts:
        prob, label = model.predict(text)
        _emit({"probability": prob, "label": label})
    return EXIT_OK


def cmd_gradcheck(args):
    presets = [args.preset] if args.preset else list(model_zoo.PRESETS)
    results = gradcheck_mod.run_all(seed=args.seed, presets=presets)
    failed = [r for r in results if not r["pass"]]
    _emit({"config": _resolved(args), "checks": results,
           "passed": len(results) - len(failed), "failed": len(failed)})
    if failed:
        worst = max(failed, key=lambda r: r["rel_error"])
        print(f"gradcheck failed: worst tensor {worst['name']} "
              f"rel_error {worst['rel_error']:.3e}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _resolved(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqveritas",
        description="From-scratch LSTM fake-news classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="encode the corpus into a cache")
    p.add_argument("--fake", required=True, help="Fake.csv path")
    p.add_argument("--true", required=True, help="True.csv path")
    p.add_argument("--out", required=True, help="output cache path")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--maxlen", type=int, default=textprep.DEFAULT_MAXLEN)
    p.add_argument("--vocab-size", type=int,
                   default=textprep.DEFAULT_MAX_VOCAB)
    p.add_argument("--min-freq", type=int, default=textprep.DEFAULT_MIN_FREQ)
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a preset on a prepared cache")
    p.add_argument("--data", required=True, help="cache from prepare")
    p.add_argument("--preset", required=True, choices=model_zoo.PRESETS)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.add_argument("--dtype", choices=("float64", "float32"),
                   default="float64")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--history", default=None,
                   help="history JSONL path (default: <checkpoint>.history.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a cache")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.add_argument("--train-frac", type=float, default=DEFAULT_TRAIN_FRAC)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify raw text")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--stdin", action="store_true",
                       help="one input per stdin line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck",
                       help="finite-difference checks at miniature scale")
    p.add_argument("--preset", choices=model_zoo.PRESETS, default=None)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteGradient as e:
        return _fail(str(e), EXIT_NUMERICAL)
    except (ingest.MissingColumn, ingest.MalformedRow, ingest.EmptySplit,
            ingest.BadK, model_zoo.BadMagic, model_zoo.VersionMismatch,
            model_zoo.ShapeMismatchOnLoad, model_zoo.VocabMissing,
            textprep.CacheFormatError, FileNotFoundError, ValueError) as e:
        return _fail(str(e), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
