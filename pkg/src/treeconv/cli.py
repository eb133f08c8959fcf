"""Single executable exposing the full pipeline as subcommands.

Exit status: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure (divergence or a failed gradient check). Set TREECONV_LOG to
debug/info/warning to control verbosity. Identical invocations are
bit-reproducible; no subcommand mutates its input files.

Report-style outputs (learning curves, evaluation reports, dendrograms)
also render a PNG figure next to the data file unless --no-figure is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from treeconv import baselines, clustering, datagen, gradcheck, pretrain, training
from treeconv.errors import NumericsError, ValidationError
from treeconv.network import compile_tree, conv_coefficients, forward
from treeconv.trees import Vocab, annotate, load_ast, load_dataset, save_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

log = logging.getLogger("treeconv")


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit with status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")


def _load_dataset_for_model(path, vocab: Vocab):
    # Inference-time corpora may contain symbols the model never saw; they
    # map to the reserved unknown id rather than growing the table.
    return load_dataset(path, vocab, unknown="unk")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> int:
    cfg = datagen.GenConfig(
        n_classes=args.classes,
        per_class=args.per_class,
        count_matched=args.count_matched,
        seed=args.seed,
        min_nodes=args.min_nodes,
        max_nodes=args.max_nodes,
    )
    vocab, ds = datagen.generate_corpus(cfg)
    save_dataset(args.out, [(a.ast, label) for a, label in ds.samples], vocab)
    print(f"wrote {len(ds)} samples ({cfg.n_classes} classes) to {args.out}")
    return EXIT_OK


def _cmd_pretrain(args) -> int:
    vocab = Vocab()
    ds = load_dataset(args.data, vocab, unknown="add")
    cfg = pretrain.PretrainConfig(
        n_features=args.nf, margin=args.margin, learning_rate=args.lr,
        epochs=args.epochs, seed=args.seed,
    )
    corpus = [annotated for annotated, _ in ds.samples]
    emb, cp, curve = pretrain.run_pretrain(corpus, vocab, cfg)
    pretrain.save_embeddings(args.out, vocab, emb, cp)
    if curve:
        print(f"epoch losses: first={curve[0]:.4f} last={curve[-1]:.4f}")
    print(f"wrote embeddings ({len(vocab)} symbols, {cfg.n_features} features) to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = training.load_train_config(args.config) if args.config else training.TrainConfig()
    if args.init:
        config.init = args.init
    if args.bow:
        config.bow = True
    if args.seed is not None:
        config.seed = args.seed
    if args.epochs is not None:
        config.epochs = args.epochs

    pretrained = None
    if config.init == "pretrained":
        if not args.embeddings:
            raise ValidationError("--embeddings is required with --init pretrained")
        vocab, emb, cp = pretrain.load_embeddings(args.embeddings)
        if emb.n_features != config.n_features:
            raise ValidationError(
                f"embedding width {emb.n_features} != configured n_features {config.n_features}")
        ds = _load_dataset_for_model(args.data, vocab)
        pretrained = (emb, cp)
    else:
        vocab = Vocab()
        ds = load_dataset(args.data, vocab, unknown="add")

    split = training.split_dataset(ds, config.seed)
    params, curve = training.train(ds, split, config, pretrained, n_symbols=len(vocab))
    cv_metrics = training.evaluate(params, ds, split.cv)
    meta = {
        "split_seed": config.seed,
        "best_epoch": min(curve, key=lambda row: row[2])[0] if curve else 0,
        "best_cv_cost": min((row[2] for row in curve), default=None),
        "cv_error": cv_metrics.error_rate,
        "config": asdict(config),
    }
    training.save_checkpoint(args.out, params, vocab, meta)
    print(f"trained {config.epochs} epochs; cv error {cv_metrics.error_rate:.2f}%")
    print(f"wrote model to {args.out}")
    if args.curve_out:
        training.save_curve(args.curve_out, curve)
        print(f"wrote learning curve to {args.curve_out}")
        if not args.no_figure and curve:
            from treeconv import figures

            figures.render_curve(curve, _figure_path(args.curve_out))
            print(f"wrote figure to {_figure_path(args.curve_out)}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    params, vocab, meta = training.load_checkpoint(args.model)
    ds = _load_dataset_for_model(args.data, vocab)
    if ds.n_classes > params.n_classes:
        raise ValidationError(
            f"dataset has {ds.n_classes} classes but the model only {params.n_classes}")
    seed = meta.get("split_seed", args.split_seed)
    split = training.split_dataset(ds, seed)
    metrics = training.evaluate(params, ds, split.part(args.split))
    print(f"split: {args.split} ({len(split.part(args.split))} samples, split seed {seed})")
    print(f"error_rate: {metrics.error_rate:.2f}%")
    print(f"mean_cost: {metrics.mean_cost:.6f}")
    if args.out:
        doc = {"split": args.split, "split_seed": seed, **metrics.to_doc()}
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, separators=(",", ":"))
            fh.write("\n")
        print(f"wrote report to {args.out}")
        if not args.no_figure:
            from treeconv import figures

            figures.render_confusion(metrics.confusion, _figure_path(args.out))
            print(f"wrote figure to {_figure_path(args.out)}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    params, vocab, _ = training.load_checkpoint(args.model)
    with open(args.ast, "r", encoding="utf-8") as fh:
        ast = load_ast(fh.read(), vocab, unknown="unk")
    annotated = annotate(ast)
    ct = compile_tree(annotated, params.pool_k)
    bow = np.bincount(ct.syms, minlength=params.bow_dim) if params.bow_dim else None
    probs, _ = forward(ct, params, bow)
    print(json.dumps({
        "probabilities": probs.tolist(),
        "predicted": int(np.argmax(probs)),
    }))
    return EXIT_OK


def _cmd_cluster(args) -> int:
    vocab, emb, _ = pretrain.load_embeddings(args.embeddings)
    if len(vocab) < 2:
        raise ValidationError("need at least two symbols to cluster")
    vectors = emb.vectors[:emb.n_symbols]
    dist = clustering.pairwise_distances(vectors)
    dend = clustering.agglomerative_cluster(dist, args.linkage)
    labels = list(vocab.symbols)
    text = clustering.export_dendrogram(dend, args.format, labels=labels)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote dendrogram to {args.out}")
        if not args.no_figure:
            from treeconv import figures

            figures.render_dendrogram(dend, labels, _figure_path(args.out))
            print(f"wrote figure to {_figure_path(args.out)}")
    else:
        print(text)
    if args.distances_out:
        with open(args.distances_out, "w", encoding="utf-8") as fh:
            fh.write(clustering.distances_csv(dist, labels))
        print(f"wrote distance matrix to {args.distances_out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    vocab = Vocab()
    ds = load_dataset(args.data, vocab, unknown="add")
    split = training.split_dataset(ds, args.seed)
    features = np.stack([baselines.bow_features(annotated.ast, vocab)
                         for annotated, _ in ds.samples])
    labels = ds.labels()
    loss = "logistic" if args.method == "lr" else "hinge"
    model = baselines.train_linear(features[list(split.train)], labels[list(split.train)],
                                   loss=loss, learning_rate=args.lr, l2=args.l2,
                                   epochs=args.epochs, seed=args.seed)
    report = {}
    for part in ("train", "cv", "test"):
        idx = list(split.part(part))
        report[part] = baselines.error_rate(model, features[idx], labels[idx])
        print(f"{part} error: {report[part]:.2f}%")
    if args.out:
        baselines.save_baseline(args.out, model, vocab)
        print(f"wrote baseline model to {args.out}")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            json.dump({"method": args.method, "error_rates": report}, fh,
                      separators=(",", ":"))
            fh.write("\n")
        print(f"wrote report to {args.report_out}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if args.show_window_coefficients:
        print("window coefficients (top, left, right), bottom-up depth reading (used):")
        print(f"  top node            -> {conv_coefficients('top')}")
        for n in (1, 2, 3):
            for p in range(1, n + 1):
                print(f"  bottom p={p} of n={n} -> {conv_coefficients('bottom', p, n)}")
        print("literal top-down reading (not used; top node weight would vanish and "
              "its position ratio is undefined):")
        print("  top node            -> (0.0, undefined, undefined)")
        for n in (1, 2, 3):
            for p in range(1, n + 1):
                eta_t = 1.0  # depth 2 of a depth-2 window under the top-down count
                eta_r = 0.5 if n == 1 else (p - 1) / (n - 1)
                print(f"  bottom p={p} of n={n} -> ({eta_t}, {(1 - eta_t) * (1 - eta_r)}, "
                      f"{(1 - eta_t) * eta_r})")
    report = gradcheck.run_full_check(args.seed, args.dims)
    for line in report.lines():
        print(line)
    if not report.passed:
        raise NumericsError("analytic and finite-difference gradients disagree")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treeconv",
                     description="Tree convolution toolkit for program classification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic labeled corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=150)
    p.add_argument("--count-matched", action="store_true",
                   help="class signal lives only in tree shape; counts are matched")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-nodes", type=int, default=10)
    p.add_argument("--max-nodes", type=int, default=80)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("pretrain", help="learn symbol embeddings from a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--nf", type=int, default=30, help="embedding width")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.03)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key = value file mirroring TrainConfig")
    p.add_argument("--init", choices=("pretrained", "random"))
    p.add_argument("--embeddings", help="embedding checkpoint for --init pretrained")
    p.add_argument("--bow", action="store_true", help="append counting features to the hidden input")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--curve-out", help="learning-curve table (TSV)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model checkpoint on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "cv", "test"), default="test")
    p.add_argument("--split-seed", type=int, default=0,
                   help="fallback when the checkpoint records no split seed")
    p.add_argument("--out", help="machine-readable report (JSON)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="class probabilities for one AST document")
    p.add_argument("--model", required=True)
    p.add_argument("--ast", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("cluster", help="agglomerative clustering of the embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--linkage", choices=clustering.LINKAGES, default="average")
    p.add_argument("--format", choices=("json", "newick"), default="json")
    p.add_argument("--out")
    p.add_argument("--distances-out", help="distance matrix CSV")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("baseline", help="counting-feature linear classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("lr", "svm"), default="lr")
    p.add_argument("--lr", type=float, default=0.01, dest="lr")
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--report-out")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, default=4)
    p.add_argument("--show-window-coefficients", action="store_true")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("TREECONV_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
