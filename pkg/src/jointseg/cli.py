"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import logging
import os
import sys

from . import composition as comp
from .char_retrofit import CharRetrofitConfig, char_retrofit_train
from .data import (DataError, SyntheticConfig, generate_synthetic_corpus, read_dataset,
                   split_records, write_dataset)
from .embeddings import EmbeddingError, load_word_embeddings
from .evaluation import (cross_validate, evaluate_segmentations, format_mean_std, format_table,
                         outermost_affix, summary_table, vector_eval, write_records)
from .joint import NumericError, grid_search
from .pipeline import (baseline_segment, config_types, evaluate_records,
                       fit_joint, fit_proposals, fit_semicrf_baseline, load_checkpoint,
                       load_config, parse_grid, predict_vectors, save_checkpoint, segment_words)
from .segmenter import SegmentationError
from .transducer import TransducerError

_logger = logging.getLogger("jointseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="INI file with a [run] section")
    for name, typ in config_types().items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, dest=name, default=None, metavar="BOOL")
        else:
            p.add_argument(flag, dest=name, type=typ, default=None)


def _config(args):
    overrides = {k: getattr(args, k) for k in config_types() if getattr(args, k, None) is not None}
    try:
        return load_config(args.config, overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def _table(cfg, required=True):
    if not cfg.embeddings:
        if required:
            raise UsageError("--embeddings is required")
        return None
    return load_word_embeddings(cfg.embeddings, lowercase=cfg.lowercase)


def _records(path, cfg, what):
    if not path:
        raise UsageError(f"--{what} is required")
    return read_dataset(path, insertion_limit=cfg.k, two_morpheme=cfg.two_morpheme)


def _read_words(path):
    with open(path, encoding="utf-8") as fh:
        return [line.split("\t")[0].strip() for line in fh if line.strip()]


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ------------------------------------------------------------------ commands


def cmd_gen_synthetic(args, cfg):
    sc = SyntheticConfig(stems=args.stems, rule=args.rule, noise=args.noise, dim=args.dim, seed=cfg.seed)
    corpus = generate_synthetic_corpus(sc)
    os.makedirs(args.out_dir, exist_ok=True)
    train, dev, test = split_records(corpus.records, (0.8, 0.1, 0.1), cfg.seed)
    for name, recs in (("all", corpus.records), ("train", train), ("dev", dev), ("test", test)):
        write_dataset(recs, os.path.join(args.out_dir, f"{name}.tsv"))
    corpus.table.save(os.path.join(args.out_dir, "embeddings.txt"))
    print(f"{len(corpus.records)} words, rule fires in {corpus.rule_rate():.3f}; wrote {args.out_dir}")


def cmd_train_proposals(args, cfg):
    records = _records(cfg.train, cfg, "train")
    save_checkpoint(args.out, cfg, fit_proposals(records, cfg))


def _proposals_for(args, cfg, records):
    if getattr(args, "proposals", None):
        return load_checkpoint(args.proposals)[1]
    return fit_proposals(records, cfg)


def cmd_train(args, cfg):
    records = _records(cfg.train, cfg, "train")
    dev = _records(cfg.dev, cfg, "dev") if cfg.dev else []
    table = _table(cfg)
    proposals = _proposals_for(args, cfg, records)
    params = fit_joint(records, dev, table, proposals, cfg)
    save_checkpoint(args.out, cfg, proposals, params)
    print(format_table(params.history, ["epoch", "accuracy", "f1", "eta_norm", "omega_norm"]), end="")


def _load_joint(path):
    cfg, proposals, params = load_checkpoint(path)
    if params is None:
        raise UsageError(f"{path} holds proposals only; run 'train' first")
    return cfg, proposals, params


def _merge(saved, args):
    """Checkpointed config overridden by explicit flags."""
    over = {k: getattr(args, k) for k in config_types() if getattr(args, k, None) is not None}
    return load_config(args.config, {**saved.to_dict(), **over})


def cmd_segment(args, cfg):
    saved, proposals, params = _load_joint(args.checkpoint)
    cfg = _merge(saved, args)
    words = _read_words(args.input)
    preds = segment_words(words, params.morphemes.table, params, proposals, cfg)
    _write(args.out, "".join(f"{w}\t{p}\n" for w, p in zip(words, preds)))


def cmd_predict_vector(args, cfg):
    saved, proposals, params = _load_joint(args.checkpoint)
    cfg = _merge(saved, args)
    words = _read_words(args.input)
    vecs = predict_vectors(words, params, proposals, cfg)
    _write(args.out, "".join(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n" for w, v in zip(words, vecs)))


def cmd_evaluate(args, cfg):
    saved, proposals, params = _load_joint(args.checkpoint)
    cfg = _merge(saved, args)
    records = _records(cfg.test, cfg, "test")
    result, preds = evaluate_records(records, params.morphemes.table, params, proposals, cfg)
    _write(args.out, format_table([result.metrics()], ["accuracy", "f1", "edit"]))
    if args.predictions:
        _write(args.predictions, "".join(f"{r.surface}\t{p}\t{r.analysis}\n" for r, p in zip(records, preds)))
    if args.records:
        write_records(result.records, args.records)
    if args.boxplot:
        table = params.morphemes.table
        kept = [r for r in records if r.surface in table]
        vecs = predict_vectors([r.surface for r in kept], params, proposals, cfg)
        tags = [outermost_affix(r.analysis) for r in kept]
        ve = vector_eval(vecs, [table.lookup(r.surface) for r in kept], tags)
        _write(args.boxplot, "\n".join(ve.boxplot_rows(tags)) + "\n")
        rows = [{"affix": t, **g} for t, g in ve.groups.items()]
        sys.stdout.write(f"mean cosine\t{ve.mean:.4f}\n")
        sys.stdout.write(format_table(rows, ["affix", "count", "mean", "q1", "median", "q3"]))


def cmd_grid_search(args, cfg):
    records = _records(cfg.train, cfg, "train")
    dev = _records(cfg.dev, cfg, "dev")
    table = _table(cfg)
    proposals = _proposals_for(args, cfg, records)
    l2, s2, params, rows = grid_search(records, dev, table, proposals, cfg.train_config(),
                                       parse_grid(cfg.l2_grid), parse_grid(cfg.sigma2_grid))
    text = format_table([{"lambda": r.l2, "sigma2": r.sigma2, "accuracy": r.accuracy, "f1": r.f1}
                         for r in rows], ["lambda", "sigma2", "accuracy", "f1"])
    _write(args.table, text)
    if args.out:
        cfg.l2, cfg.sigma2 = l2, s2
        save_checkpoint(args.out, cfg, proposals, params)
    print(f"best lambda={l2:g} sigma2={s2:g}")


def cmd_crossval(args, cfg):
    records = _records(args.data, cfg, "data")
    table = _table(cfg, required=cfg.use_vectors)

    def run_fold(train, test, k):
        if args.model == "semicrf":
            q2 = fit_semicrf_baseline(train, cfg)
            words = [r.surface for r in test]
            return evaluate_segmentations(words, baseline_segment(words, q2),
                                          [r.analysis for r in test]).metrics()
        fold_train, fold_dev = split_records(train, (0.9, 0.1), cfg.seed + k)
        proposals = fit_proposals(fold_train, cfg)
        params = fit_joint(fold_train, fold_dev, table, proposals, cfg)
        return evaluate_records(test, table, params, proposals, cfg)[0].metrics()

    per_fold, summary = cross_validate(records, run_fold, cfg.folds, cfg.seed, args.assignments)
    rows = [{"fold": i, **m} for i, m in enumerate(per_fold)]
    text = format_table(rows, ["fold", "accuracy", "f1", "edit"])
    text += summary_table(summary)
    text += "\t".join(f"{k} {format_mean_std([m[k] for m in per_fold])}" for k in summary) + "\n"
    _write(args.out, text)


def cmd_char_retrofit(args, cfg):
    records = _records(cfg.train, cfg, "train")
    table = _table(cfg)
    words = [r.surface for r in records if r.surface in table]
    rc = CharRetrofitConfig(args.architecture, args.depth, args.hidden, args.iterations, seed=cfg.seed)
    model = char_retrofit_train(words, [table.lookup(w) for w in words], rc)
    test = _records(cfg.test, cfg, "test") if cfg.test else records
    kept = [r for r in test if r.surface in table]
    ve = vector_eval(model.predict_batch([r.surface for r in kept]),
                     [table.lookup(r.surface) for r in kept], [outermost_affix(r.analysis) for r in kept])
    print(f"mean cosine\t{ve.mean:.4f}")


# ------------------------------------------------------------------ parser


def build_parser():
    parser = _Parser(prog="jointseg", description="Joint canonical segmentation with word vectors")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
        p.set_defaults(func=func)
        return p

    p = add("gen-synthetic", cmd_gen_synthetic, "write a synthetic corpus and embeddings")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stems", type=int, default=300)
    p.add_argument("--rule", default="e-deletion")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--dim", type=int, default=10)

    p = add("train-proposals", cmd_train_proposals, "train the q1/q2 proposal distributions")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the joint model")
    p.add_argument("--out", required=True)
    p.add_argument("--proposals", help="checkpoint from train-proposals")

    for name, func in (("segment", cmd_segment), ("predict-vector", cmd_predict_vector)):
        p = add(name, func, f"{name} words read one per line")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--out")

    p = add("evaluate", cmd_evaluate, "score a checkpoint on --test")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("--predictions", help="surface<TAB>predicted<TAB>gold file")
    p.add_argument("--records", help="per-word JSON lines")
    p.add_argument("--boxplot", help="affix<TAB>cosine file")

    p = add("grid-search", cmd_grid_search, "tune lambda and sigma2 on --dev")
    p.add_argument("--out")
    p.add_argument("--table")
    p.add_argument("--proposals")

    p = add("crossval", cmd_crossval, "k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("joint", "semicrf"), default="joint")
    p.add_argument("--assignments", help="write fold ids here")
    p.add_argument("--out")

    p = add("char-retrofit", cmd_char_retrofit, "character-level vector baseline")
    p.add_argument("--architecture", choices=("simple", "gru"), default="gru")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--iterations", type=int, default=100)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"jointseg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"jointseg: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, EmbeddingError, TransducerError, SegmentationError, comp.CompositionError,
            FileNotFoundError, ValueError) as exc:
        print(f"jointseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
