"""Command-line interface.

Subcommands cover the whole pipeline: dataset preparation, pretrained
vector subsetting, training, evaluation, threshold sweeps, augmentation
experiments, architecture ablations, prediction, heatmap rendering, and
tag-distribution statistics.

Exit codes: 0 success, 2 configuration or usage problems, 3 data
integrity problems, 4 internal numeric failure.

Every training or evaluation run appends a plain-text ``key=value``
manifest next to its primary output, recording the command, the config,
input digests, and resulting scores.
"""

import argparse
import os
import sys
import time
from dataclasses import replace
from fractions import Fraction

from . import augment as augment_mod
from . import corpus, heatmap, metrics, model, postag
from .errors import (
    AlignmentError,
    BundleError,
    ConfigError,
    DegenerateInputError,
    DegenerateMaskError,
    EmpliteError,
    NumericError,
    OutOfRangeError,
    ParseError,
    ShapeError,
    TrainingIntegrityError,
)
from .util import sha256_file

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_manifest(path, record):
    with open(path, "a", encoding="utf-8") as fh:
        for key, value in record.items():
            fh.write(f"{key}={value}\n")
        fh.write("\n")


def _manifest_base(args, command, inputs, outputs):
    record = {"command": command, "timestamp": int(time.time())}
    if hasattr(args, "seed"):
        record["seed"] = args.seed
    for name, path in inputs:
        record[f"input.{name}"] = path
        record[f"input.{name}.sha256"] = sha256_file(path)
    for name, path in outputs:
        record[f"output.{name}"] = path
    return record


def _load_sentences(path, fmt="emplite-tsv"):
    return corpus.parse_dataset(path, fmt=fmt)


def _config_from_args(args):
    kwargs = {}
    for field in ("variant", "seed", "batch_size"):
        if getattr(args, field, None) is not None:
            kwargs[field] = getattr(args, field)
    if getattr(args, "threshold", None) is not None:
        kwargs["threshold_prob"] = args.threshold
    return model.ModelConfig(**kwargs)


def _train_once(config, train_path, dev_path, glove_path, args):
    train_sents = _load_sentences(train_path)
    dev_sents = _load_sentences(dev_path)
    vocab = corpus.build_vocab(train_sents, pos_source=args.pos)
    glove = None
    if config.uses_glove:
        if not glove_path:
            raise ConfigError(f"variant {config.variant!r} requires --glove")
        glove = corpus.subset_glove(glove_path, vocab, dim=config.word_dim, seed=config.seed)
    params, history = model.train(
        config, vocab, train_sents, dev_sents, glove=glove,
        max_epochs=args.max_epochs, patience=args.patience, pos_source=args.pos,
    )
    return vocab, params, history, train_sents, dev_sents


def cmd_prepare(args):
    sentences = corpus.parse_dataset(args.input, fmt=args.format)
    corpus.tag_corpus(sentences, source=args.pos)
    corpus.serialize_dataset(sentences, args.output, with_prob=True, with_pos=True)
    record = _manifest_base(
        args, "prepare", [("dataset", args.input)], [("dataset", args.output)]
    )
    record["sentences"] = len(sentences)
    record["tokens"] = sum(len(s) for s in sentences)
    _write_manifest(args.output + ".manifest", record)
    print(f"wrote {len(sentences)} sentences to {args.output}")
    return 0


def cmd_subset_glove(args):
    train_sents = _load_sentences(args.train)
    vocab = corpus.build_vocab(train_sents, pos_source=args.pos)
    corpus.subset_glove(args.glove, vocab, dim=args.dim, seed=args.seed, out_path=args.output)
    size = os.path.getsize(args.output)
    record = _manifest_base(
        args, "subset-glove",
        [("glove", args.glove), ("train", args.train)],
        [("subset", args.output)],
    )
    record["vocab_words"] = vocab.n_words
    record["bytes"] = size
    _write_manifest(args.output + ".manifest", record)
    print(f"subset of {vocab.n_words - 2} words ({size / 1e6:.2f} MB) -> {args.output}")
    return 0


def cmd_train(args):
    config = _config_from_args(args)
    started = time.time()
    vocab, params, history, _, _ = _train_once(config, args.train, args.dev, args.glove, args)
    size = model.save_model(args.out, config, vocab, params)
    best = max(history, key=lambda r: r["dev_avg"])
    record = _manifest_base(
        args, "train",
        [("train", args.train), ("dev", args.dev)]
        + ([("glove", args.glove)] if args.glove else []),
        [("model", args.out)],
    )
    for key, value in config.to_items():
        record[f"config.{key}"] = value
    record["epochs_run"] = len(history)
    record["best_epoch"] = best["epoch"]
    record["best_dev_avg"] = f"{best['dev_avg']:.6f}"
    record["trainable_params"] = model.count_params(config, vocab)
    record["bundle_bytes"] = size
    record["wall_time_s"] = f"{time.time() - started:.1f}"
    _write_manifest(args.out + ".manifest", record)
    print(
        f"trained {config.variant}: best dev avg {best['dev_avg']:.4f} "
        f"(epoch {best['epoch']}), bundle {size / 1e6:.2f} MB -> {args.out}"
    )
    return 0


def _print_scores(scores, machine):
    names = ("match_1", "match_2", "match_3", "match_4", "average")
    if machine:
        for name, value in zip(names, scores):
            print(f"{name}={value:.6f}")
    else:
        parts = ", ".join(f"{n}={v:.4f}" for n, v in zip(names, scores))
        print(parts)


def cmd_eval(args):
    test_sents = _load_sentences(args.test)
    if args.model:
        config, vocab, params = model.load_model(args.model)
        scores = model.evaluate(params, config, vocab, test_sents)
    elif args.pred_file:
        blocks = metrics.read_predictions(args.pred_file)
        if len(blocks) != len(test_sents):
            raise AlignmentError(
                f"{len(blocks)} predicted sentences but {len(test_sents)} references"
            )
        instances = []
        for (tokens, probs), sent in zip(blocks, test_sents):
            if len(tokens) != len(sent):
                raise AlignmentError(
                    f"token count mismatch: predicted {len(tokens)}, reference {len(sent)}"
                )
            instances.append(
                metrics.EvalInstance([float(p) for p in sent.emph_prob], probs)
            )
        scores = tuple(metrics.match_m(instances, m) for m in (1, 2, 3, 4))
        scores = scores + (sum(scores) / 4.0,)
    else:
        raise ConfigError("eval needs --model or --pred-file")
    _print_scores(scores, args.machine)
    return 0


def cmd_predict(args):
    config, vocab, params = model.load_model(args.model)
    if args.text:
        token_lists = [corpus.tokenize_text(args.text)]
    else:
        token_lists = [s.tokens for s in _load_sentences(args.file)]
    blocks = []
    for tokens in token_lists:
        pred = model.predict(params, config, vocab, tokens)
        blocks.append((pred.tokens, pred.probs))
    if args.out:
        metrics.write_predictions(args.out, blocks)
        print(f"wrote predictions for {len(blocks)} sentences to {args.out}")
    else:
        for tokens, probs in blocks:
            for tok, p in zip(tokens, probs):
                print(f"{tok}\t{p:.6f}")
            print()
    return 0


def cmd_sweep_threshold(args):
    values = [float(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise ConfigError("no threshold values given")
    rows = []
    for value in values:
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"threshold must be in [0, 1], got {value}")
        config = replace(_config_from_args(args), threshold_prob=value)
        _, _, history, _, _ = _train_once(config, args.train, args.dev, args.glove, args)
        best = max(history, key=lambda r: r["dev_avg"])
        rows.append((value, best["dev_avg"]))
        print(f"threshold={value:.2f} dev_avg={best['dev_avg']:.4f}")
    record = _manifest_base(args, "sweep-threshold", [("train", args.train), ("dev", args.dev)], [])
    for value, score in rows:
        record[f"score.threshold_{value}"] = f"{score:.6f}"
    _write_manifest(args.train + ".sweep.manifest", record)
    return 0


def cmd_augment_experiment(args):
    fractions = [float(v) for v in args.fractions.split(",") if v != ""]
    config = _config_from_args(args)
    train_sents = _load_sentences(args.train)
    dev_sents = _load_sentences(args.dev)
    eval_sents = _load_sentences(args.test) if args.test else dev_sents
    vocab = corpus.build_vocab(train_sents, pos_source=args.pos)
    glove = None
    if config.uses_glove:
        if not args.glove:
            raise ConfigError(f"variant {config.variant!r} requires --glove")
        glove = corpus.subset_glove(args.glove, vocab, dim=config.word_dim, seed=config.seed)

    def run(sentences):
        params, _ = model.train(
            config, vocab, sentences, dev_sents, glove=glove,
            max_epochs=args.max_epochs, patience=args.patience, pos_source=args.pos,
        )
        return model.evaluate(params, config, vocab, eval_sents)

    rows = []
    if args.strategy == "none":
        scores = run(train_sents)
        rows.append(("none", 0.0, scores[4]))
        print(f"strategy=none average={scores[4]:.4f}")
    else:
        for fraction in fractions:
            spec = augment_mod.AugmentSpec(args.strategy, fraction, seed=config.seed)
            augmented = augment_mod.augment(train_sents, spec)
            corpus.tag_corpus(augmented, source=args.pos)
            scores = run(augmented)
            rows.append((args.strategy, fraction, scores[4]))
            print(f"strategy={args.strategy} fraction={fraction:.2f} average={scores[4]:.4f}")
    record = _manifest_base(args, "augment-exp", [("train", args.train), ("dev", args.dev)], [])
    for strategy, fraction, score in rows:
        record[f"score.{strategy}_{fraction}"] = f"{score:.6f}"
    _write_manifest(args.train + ".augment.manifest", record)
    return 0


def cmd_ablation(args):
    variants = model.VARIANTS if args.variants == "all" else tuple(args.variants.split(","))
    for v in variants:
        if v not in model.VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    config = _config_from_args(args)
    train_sents = _load_sentences(args.train)
    dev_sents = _load_sentences(args.dev)
    test_sents = _load_sentences(args.test)
    vocab = corpus.build_vocab(train_sents, pos_source=args.pos)
    glove = None
    if any(replace(config, variant=v).uses_glove for v in variants):
        if not args.glove:
            raise ConfigError("ablation over pretrained variants requires --glove")
        glove = corpus.subset_glove(args.glove, vocab, dim=config.word_dim, seed=config.seed)
    rows = model.run_ablation(
        config, vocab, train_sents, dev_sents, test_sents, variants, glove=glove,
        max_epochs=args.max_epochs, patience=args.patience, pos_source=args.pos,
    )
    header = f"{'variant':28s} {'m=1':>6s} {'m=2':>6s} {'m=3':>6s} {'m=4':>6s} {'avg':>6s} {'params':>8s} {'MB':>6s}"
    print(header)
    for row in rows:
        m = row["match"]
        print(
            f"{row['variant']:28s} {m[0]:6.3f} {m[1]:6.3f} {m[2]:6.3f} {m[3]:6.3f} "
            f"{row['average']:6.3f} {row['params']:8d} {row['bundle_bytes'] / 1e6:6.2f}"
        )
    record = _manifest_base(args, "ablation", [("train", args.train), ("test", args.test)], [])
    for row in rows:
        record[f"score.{row['variant']}"] = f"{row['average']:.6f}"
        record[f"params.{row['variant']}"] = row["params"]
    _write_manifest(args.train + ".ablation.manifest", record)
    return 0


def cmd_heatmap(args):
    config, vocab, params = model.load_model(args.model)
    if args.text is not None:
        token_lists = [corpus.tokenize_text(args.text)]
    else:
        token_lists = [s.tokens for s in _load_sentences(args.file)]
    pieces = []
    for tokens in token_lists:
        pred = model.predict(params, config, vocab, tokens)
        pieces.append(heatmap.render(pred.tokens, pred.probs, style=args.style))
    joined = "\n".join(pieces)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(joined + "\n")
        print(f"wrote heatmap to {args.out}")
    else:
        print(joined)
    return 0


def cmd_pos_stats(args):
    sentences = _load_sentences(args.train)
    corpus.tag_corpus(sentences, source=args.pos)
    overall, emphasized = postag.pos_distribution(sentences, Fraction(str(args.threshold)))
    print(f"{'tag':8s} {'all%':>8s} {'emph%':>8s}")
    emph_map = dict(emphasized)
    for tag, pct in overall:
        print(f"{tag:8s} {pct:8.2f} {emph_map.get(tag, 0.0):8.2f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="emplite",
        description="Train, evaluate, and package lightweight word-emphasis models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p, with_variant=True):
        p.add_argument("--train", required=True, help="training split (emplite TSV)")
        p.add_argument("--dev", required=True, help="development split (emplite TSV)")
        p.add_argument("--glove", help="pretrained 50-d vector file")
        if with_variant:
            p.add_argument("--variant", default="emplite_full", choices=model.VARIANTS)
        p.add_argument("--threshold", type=float, default=0.4, help="binary label cutoff")
        p.add_argument("--seed", type=int, default=13)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
        p.add_argument("--max-epochs", type=int, default=100)
        p.add_argument("--patience", type=int, default=10)
        p.add_argument("--pos", choices=("builtin", "sidecar"), default="builtin")

    p = sub.add_parser("prepare", help="normalize a dataset into emplite TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("emplite-tsv", "semeval-adapter"), default="emplite-tsv")
    p.add_argument("--output", required=True)
    p.add_argument("--pos", choices=("builtin", "sidecar"), default="builtin")
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(handler=cmd_prepare)

    p = sub.add_parser("subset-glove", help="cut a pretrained vector file down to the training vocabulary")
    p.add_argument("--glove", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--pos", choices=("builtin", "sidecar"), default="builtin")
    p.set_defaults(handler=cmd_subset_glove)

    p = sub.add_parser("train", help="train one variant and save a bundle")
    add_train_flags(p)
    p.add_argument("--out", required=True, help="output bundle path (.empl)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a model or a prediction file")
    p.add_argument("--model")
    p.add_argument("--pred-file")
    p.add_argument("--test", required=True)
    p.add_argument("--machine", action="store_true", help="emit key=value lines")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="write per-token probabilities")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--file")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("sweep-threshold", help="train once per label threshold")
    add_train_flags(p)
    p.add_argument("--values", required=True, help="comma-separated thresholds")
    p.set_defaults(handler=cmd_sweep_threshold)

    p = sub.add_parser("augment-exp", help="score augmentation strategies")
    add_train_flags(p)
    p.add_argument("--test")
    p.add_argument("--strategy", required=True, choices=("none",) + augment_mod.STRATEGIES)
    p.add_argument("--fractions", default="1.0")
    p.set_defaults(handler=cmd_augment_experiment)

    p = sub.add_parser("ablation", help="train and score several variants")
    add_train_flags(p, with_variant=False)
    p.add_argument("--test", required=True)
    p.add_argument("--variants", default="all")
    p.set_defaults(handler=cmd_ablation)

    p = sub.add_parser("heatmap", help="render emphasis probabilities")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--file")
    p.add_argument("--style", choices=("ansi", "html"), default="ansi")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_heatmap)

    p = sub.add_parser("pos-stats", help="tag distribution, overall vs emphasized")
    p.add_argument("--train", required=True)
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--pos", choices=("builtin", "sidecar"), default="builtin")
    p.set_defaults(handler=cmd_pos_stats)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        ParseError,
        AlignmentError,
        BundleError,
        TrainingIntegrityError,
        OutOfRangeError,
        DegenerateInputError,
        DegenerateMaskError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmpliteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
