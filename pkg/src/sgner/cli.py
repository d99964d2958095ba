"""Command-line entry points: synth | train | predict | eval | gradcheck | inspect.

Every command is deterministic given --seed. Exit codes: 0 ok, 1 usage,
2 data error, 3 numeric failure. Config precedence: built-in defaults,
then --config file, then --set key=value overrides, then --seed/--ablate.
"""

import argparse
import collections
import logging
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_overrides, validate_config
from .corpus import (CorpusError, SynthSpec, derive_pair_labels, load_corpus,
                     synthesize_corpus, write_corpus)
from .decoder import decode, load_predictions, write_predictions
from .metrics import DISCONTINUOUS, OVERLAPPED, REGULAR, category_of, evaluate
from .model import Model
from .trainer import format_log_csv, gradient_check, train

log = logging.getLogger(__name__)

ABLATIONS = ("no_gcn", "no_overlap_relation")


class UsageError(Exception):
    exit_code = 1


class DataError(Exception):
    exit_code = 2


class NumericError(Exception):
    exit_code = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep 1 for usage
        raise UsageError(message)


def _add_common(p, ablate=False):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                   help="config override, repeatable")
    p.add_argument("--jobs", type=int, default=1, help="worker count (currently single-process)")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    if ablate:
        p.add_argument("--ablate", action="append", choices=ABLATIONS, default=[],
                       help="disable a model component, repeatable")


def build_parser():
    parser = _Parser(prog="sgner", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--p-overlap", type=float, default=0.0)
    p.add_argument("--p-discont", type=float, default=0.0)
    p.add_argument("--types", default="Disorder,Finding", help="comma-separated entity types")
    p.add_argument("--min-tokens", type=int, default=8)
    p.add_argument("--max-tokens", type=int, default=14)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model and keep the best dev checkpoint")
    p.add_argument("--train", required=True, dest="train_path")
    p.add_argument("--dev", required=True, dest="dev_path")
    p.add_argument("--out-model", required=True)
    p.add_argument("--log", help="training log CSV (default: <out-model>.log)")
    _add_common(p, ablate=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode entities for a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--in", required=True, dest="in_path")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    _add_common(p, ablate=True)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="summarize gold labels in a corpus")
    p.add_argument("--in", required=True, dest="in_path")
    p.add_argument("--index", type=int, help="show one sentence in full detail")
    _add_common(p)
    p.set_defaults(func=cmd_inspect)
    return parser


def load_run_config(args):
    cfg = RunConfig()
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise DataError(f"config file not found: {args.config}")
        try:
            cfg = load_config(args.config)
        except ConfigError as e:
            raise UsageError(str(e))
    try:
        cfg = parse_overrides(cfg, args.set)
    except ConfigError as e:
        raise UsageError(str(e))
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    for name in getattr(args, "ablate", []):
        cfg = cfg.replace(**{name: True})
    problems = validate_config(cfg)
    if problems:
        raise UsageError("invalid config:\n  " + "\n  ".join(problems))
    return cfg


def read_corpus(path):
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    try:
        return load_corpus(path)
    except CorpusError as e:
        raise DataError(str(e))


def cmd_synth(args):
    seed = args.seed if args.seed is not None else RunConfig().seed
    types = tuple(t.strip() for t in args.types.split(",") if t.strip())
    try:
        spec = SynthSpec(sentences=args.sentences, p_overlap=args.p_overlap,
                         p_discont=args.p_discont, entity_types=types,
                         min_tokens=args.min_tokens, max_tokens=args.max_tokens)
        sentences = synthesize_corpus(spec, seed)
    except ValueError as e:
        raise UsageError(str(e))
    write_corpus(args.out, sentences)
    print(f"wrote {len(sentences)} sentences to {args.out}")
    return 0


def cmd_train(args):
    cfg = load_run_config(args)
    train_sentences = read_corpus(args.train_path)
    dev_sentences = read_corpus(args.dev_path)
    try:
        result = train(train_sentences, dev_sentences, cfg)
    except ValueError as e:
        raise DataError(str(e))
    if not all(np.isfinite(p.data).all() for p in result.model.parameters()):
        raise NumericError("training diverged: non-finite parameters")
    result.model.save(args.out_model)
    log_path = args.log or (args.out_model + ".log")
    with open(log_path, "w", encoding="utf-8") as f:
        f.write(format_log_csv(result.log_rows))
    print(f"best dev F1 {result.best_f1:.4f} at epoch {result.best_epoch}; "
          f"model -> {args.out_model}; log -> {log_path}")
    return 0


def cmd_predict(args):
    if not os.path.exists(args.model):
        raise DataError(f"model file not found: {args.model}")
    try:
        model = Model.load(args.model)
    except ValueError as e:
        raise DataError(f"cannot load model: {e}")
    sentences = read_corpus(args.in_path)
    try:
        predictions = [decode(model, s) for s in sentences]
    except ValueError as e:
        raise DataError(str(e))
    write_predictions(args.out, predictions)
    log.info("wrote predictions for %d sentences to %s", len(sentences), args.out)
    return 0


def cmd_eval(args):
    golds = [list(s.entities) for s in read_corpus(args.gold)]
    if not os.path.exists(args.pred):
        raise DataError(f"predictions file not found: {args.pred}")
    preds = load_predictions(args.pred)
    if len(preds) < len(golds):
        preds = preds + [[] for _ in range(len(golds) - len(preds))]
    try:
        report = evaluate(preds, golds)
    except ValueError as e:
        raise DataError(str(e))
    print(report.to_json() if args.json else report.to_table())
    return 0


def cmd_gradcheck(args):
    cfg = load_run_config(args)
    report = gradient_check(cfg)
    if not np.isfinite(report.max_rel_error):
        raise NumericError(f"gradient check produced non-finite error at {report.worst_param}")
    print(f"max relative error {report.max_rel_error:.3e} at {report.worst_param}"
          f"[{report.worst_index}] over {report.n_checked} coordinates")
    return 0


def _categories(sentence):
    unique = list(dict.fromkeys(sentence.entities))
    return {e: category_of(e, unique) for e in unique}


def cmd_inspect(args):
    sentences = read_corpus(args.in_path)
    if args.index is not None:
        if not 0 <= args.index < len(sentences):
            raise DataError(f"sentence index {args.index} out of range (corpus has {len(sentences)})")
        s = sentences[args.index]
        print(f"sentence {args.index}: {len(s)} tokens")
        print("  " + " ".join(f"{k}:{t}" for k, t in enumerate(s.tokens)))
        for e, cat in _categories(s).items():
            frags = "+".join(f"({f.start},{f.end})" for f in e.fragments)
            print(f"  [{e.entity_type}] {frags} {cat}")
        for (a, b), rel in sorted(derive_pair_labels(s).items()):
            print(f"  ({a.start},{a.end})~({b.start},{b.end}) {rel}")
        return 0
    n_entities = 0
    by_type = collections.Counter()
    by_category = collections.Counter()
    for s in sentences:
        cats = _categories(s)
        n_entities += len(cats)
        for e, cat in cats.items():
            by_type[e.entity_type] += 1
            by_category[cat] += 1
    print(f"sentences: {len(sentences)}")
    type_part = ", ".join(f"{t} {n}" for t, n in sorted(by_type.items()))
    print(f"entities: {n_entities}" + (f" ({type_part})" if type_part else ""))
    cat_part = ", ".join(f"{c} {by_category[c]}" for c in (REGULAR, OVERLAPPED, DISCONTINUOUS))
    print(f"categories: {cat_part}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    level = "DEBUG" if args.verbose else os.environ.get("SGNER_LOG", "WARNING")
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("usage error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (UsageError, DataError, NumericError) as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
