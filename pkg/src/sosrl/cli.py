"""Command-line interface: train, predict, evaluate, gradcheck, analyze.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
The effective merged configuration is echoed next to every artifact a
command writes. ``SOSRL_LOG`` controls stderr verbosity (debug/info/quiet).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

log = logging.getLogger("sosrl")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sosrl", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS/OpenMP thread cap; 1 is the determinism mode (default)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field (repeatable)")

    p = sub.add_parser("train", help="train the arc/label model (and the tagger in without_predicates mode)")
    common(p)
    p.add_argument("--train", dest="train_path", help="training corpus (overrides paths.train)")
    p.add_argument("--dev", dest="dev_path", help="dev corpus (overrides paths.dev)")
    p.add_argument("--model-dir", dest="model_dir", help="output directory (overrides paths.model_dir)")

    p = sub.add_parser("predict", help="parse a corpus with a trained model")
    common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--tagger", help="tagger checkpoint (without_predicates mode)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--features", help="precomputed feature file aligned with the input")

    p = sub.add_parser("evaluate", help="score a system output against gold")
    common(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--compare", help="second system; runs the paired bootstrap against --system")
    p.add_argument("--no-senses", action="store_true", help="exclude predicate senses from the item set")
    p.add_argument("--subsets", action="store_true", help="also score the high-order / rest split")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--sample-size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", dest="json_out", help="write the full report as JSON")

    p = sub.add_parser("gradcheck", help="finite-difference check of the composed pipeline")
    common(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("analyze", help="high-order structure statistics for a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", dest="json_out", help="write the report as JSON")
    return parser


def _configure_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO, "quiet": logging.ERROR}.get(
        os.environ.get("SOSRL_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")


def _echo_config(config, path) -> None:
    Path(path).write_text(json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dtype_of(config):
    import numpy as np

    return np.float64 if config.trainer.precision == 64 else np.float32


def _load_corpus_features(path, corpus):
    from sosrl.embeddings import load_features

    if path is None:
        return None
    feats = load_features(path)
    feats.align([s for s, _ in corpus])
    return feats.sentences


def _cmd_train(args) -> int:
    from sosrl.config import ConfigError, load_run_config
    from sosrl.conll09 import read_conll09
    from sosrl.embeddings import load_embeddings
    from sosrl.model import PredicateTagger, SrlModel
    from sosrl.trainer import save_model, save_tagger, train, train_tagger
    from sosrl.vocab import Vocab

    config = load_run_config(args.config, args.overrides)
    paths = config.paths
    if args.train_path:
        paths.train = args.train_path
    if args.dev_path:
        paths.dev = args.dev_path
    if args.model_dir:
        paths.model_dir = args.model_dir
    for name in ("train", "dev", "model_dir"):
        if getattr(paths, name) is None:
            raise ConfigError(f"paths.{name} is required for training")
    model_dir = Path(paths.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(config, model_dir / "config.json")

    train_corpus = read_conll09(paths.train)
    dev_corpus = read_conll09(paths.dev)
    vocab = Vocab.build(train_corpus)
    pretrained = None
    if paths.embeddings:
        pretrained = load_embeddings(paths.embeddings, paths.embeddings_dim)
    train_feats = _load_corpus_features(paths.train_features, train_corpus)
    dev_feats = _load_corpus_features(paths.dev_features, dev_corpus)
    feature_dim = train_feats[0].shape[1] if train_feats else None
    dtype = _dtype_of(config)

    model = SrlModel(
        vocab, config.encoder, parts=config.parts, seed=config.seed, dtype=dtype,
        pretrained=pretrained, feature_dim=feature_dim,
    )
    log.info("training SRL model: %d train / %d dev sentences, parts=%s",
             len(train_corpus), len(dev_corpus), ",".join(config.parts) or "none")
    result = train(
        model, train_corpus, dev_corpus, config.trainer, config.decode,
        seed=config.seed, train_features=train_feats, dev_features=dev_feats,
        log_path=model_dir / "train.log.jsonl", checkpoint_path=model_dir / "model.ckpt",
    )
    if result.best_f1 < 0:
        # No eval point was reached; persist the final parameters.
        save_model(model, model_dir / "model.ckpt")
    log.info("best dev F1 %.4f at step %d (%d steps run)", result.best_f1, result.best_step, result.steps)

    if config.mode == "without_predicates":
        tagger = PredicateTagger(vocab, config.tagger, seed=config.seed, dtype=dtype, pretrained=pretrained)
        log.info("training predicate tagger")
        tagger_result = train_tagger(
            tagger, train_corpus, dev_corpus, config.trainer, seed=config.seed,
            log_path=model_dir / "tagger.log.jsonl", checkpoint_path=model_dir / "tagger.ckpt",
        )
        if tagger_result.best_f1 < 0:
            save_tagger(tagger, model_dir / "tagger.ckpt")
        log.info("best tagger dev F1 %.4f", tagger_result.best_f1)
    return EXIT_OK


def _cmd_predict(args) -> int:
    import numpy as np

    from sosrl.config import ConfigError, load_run_config
    from sosrl.conll09 import read_conll09, write_conll09
    from sosrl.model import apply_tagging, tag_predicates
    from sosrl.trainer import load_model, load_tagger

    config = load_run_config(args.config, args.overrides)
    model = load_model(args.checkpoint)
    feature_source = None
    if args.features:
        from sosrl.embeddings import load_features

        feature_source = load_features(args.features)

    outputs = []
    if config.mode == "without_predicates":
        tagger_path = args.tagger
        if tagger_path is None:
            candidate = Path(args.checkpoint).parent / "tagger.ckpt"
            if not candidate.exists():
                raise ConfigError("without_predicates mode needs --tagger (or a tagger.ckpt beside the model)")
            tagger_path = candidate
        tagger = load_tagger(tagger_path)
        corpus = read_conll09(args.input, mode="raw")
        if feature_source:
            feature_source.align([s for s, _ in corpus])
        for idx, (sentence, _) in enumerate(corpus):
            flags, senses = tag_predicates(sentence, tagger)
            tagged = apply_tagging(sentence, flags, senses)
            feats = feature_source.sentences[idx] if feature_source else None
            graph = model.predict(tagged, config.decode, features=feats)
            outputs.append((tagged, graph))
    else:
        corpus = read_conll09(args.input)
        if feature_source:
            feature_source.align([s for s, _ in corpus])
        for idx, (sentence, _) in enumerate(corpus):
            feats = feature_source.sentences[idx] if feature_source else None
            flags = np.array([t.is_predicate for t in sentence.tokens], dtype=bool)
            graph = model.predict(sentence, config.decode, predicate_flags=flags, features=feats)
            outputs.append((sentence, graph))

    write_conll09(outputs, args.output)
    _echo_config(config, str(args.output) + ".config.json")
    log.info("wrote %d sentence(s) to %s", len(outputs), args.output)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from sosrl.config import load_run_config
    from sosrl.conll09 import read_conll09
    from sosrl.evaluation import bootstrap_significance, semantic_f1, subset_eval

    config = load_run_config(args.config, args.overrides)
    include_senses = not args.no_senses
    gold = read_conll09(args.gold)
    system = read_conll09(args.system)
    result = semantic_f1(gold, system, include_senses=include_senses)
    report = {
        "config": config.to_json(),
        "gold": str(args.gold),
        "system": str(args.system),
        "include_senses": include_senses,
        "precision": result.precision,
        "recall": result.recall,
        "f1": result.f1,
        "counts": {"correct": result.correct, "system": result.system_total, "gold": result.gold_total},
    }
    print(f"P {result.precision:.4f}  R {result.recall:.4f}  F1 {result.f1:.4f}  "
          f"(correct {result.correct} / system {result.system_total} / gold {result.gold_total})")

    if args.subsets:
        split = subset_eval(gold, system, include_senses=include_senses)
        report["subsets"] = {
            "high_order": {"sentences": split.high_order_sentences, "f1": split.high_order.f1,
                           "precision": split.high_order.precision, "recall": split.high_order.recall},
            "rest": {"sentences": split.rest_sentences, "f1": split.rest.f1,
                     "precision": split.rest.precision, "recall": split.rest.recall},
        }
        print(f"high-order subset: {split.high_order_sentences} sentence(s), F1 {split.high_order.f1:.4f}")
        print(f"remaining subset:  {split.rest_sentences} sentence(s), F1 {split.rest.f1:.4f}")

    if args.compare:
        compare = read_conll09(args.compare)
        p_value = bootstrap_significance(
            gold, system, compare, n_samples=args.samples, sample_size=args.sample_size,
            seed=args.seed, include_senses=include_senses,
        )
        report["bootstrap"] = {"compare": str(args.compare), "samples": args.samples,
                               "sample_size": args.sample_size, "seed": args.seed, "p_value": p_value}
        print(f"bootstrap p-value (F1 of --compare <= F1 of --system): {p_value:.4f}")

    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from sosrl.config import load_run_config
    from sosrl.verify import GRADCHECK_TOLERANCE, pipeline_gradcheck

    config = load_run_config(args.config, args.overrides)
    result = pipeline_gradcheck(seed=args.seed, iterations=config.decode.iterations)
    print(f"gradcheck: max relative error {result.max_rel_error:.3e} (tolerance {GRADCHECK_TOLERANCE:.1e})")
    print(f"worst parameter: {result.worst_param}")
    if result.max_rel_error > GRADCHECK_TOLERANCE:
        print("FAIL")
        return EXIT_NUMERIC
    print("PASS")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    from collections import Counter

    from sosrl.config import load_run_config
    from sosrl.conll09 import read_conll09
    from sosrl.evaluation import ho_profile

    config = load_run_config(args.config, args.overrides)
    corpus = read_conll09(args.corpus)
    totals = {"sib": 0, "cop": 0, "gp": 0}
    ho_sentences = 0
    lengths = Counter()
    for sentence, graph in corpus:
        profile = ho_profile(graph)
        totals["sib"] += profile.sib
        totals["cop"] += profile.cop
        totals["gp"] += profile.gp
        ho_sentences += int(profile.has_high_order)
        lengths[len(sentence)] += 1
    report = {
        "config": config.to_json(),
        "corpus": str(args.corpus),
        "sentences": len(corpus),
        "high_order_sentences": ho_sentences,
        "part_totals": totals,
        "length_histogram": {str(k): v for k, v in sorted(lengths.items())},
    }
    print(f"sentences: {len(corpus)}  with high-order structure: {ho_sentences}")
    print(f"part totals: sib {totals['sib']}  cop {totals['cop']}  gp {totals['gp']}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE

    threads = str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)

    handlers = {
        "train": _cmd_train,
        "predict": _cmd_predict,
        "evaluate": _cmd_evaluate,
        "gradcheck": _cmd_gradcheck,
        "analyze": _cmd_analyze,
    }
    from sosrl.autodiff import NumericError

    try:
        return handlers[args.command](args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


def console_entry() -> None:
    raise SystemExit(main(sys.argv[1:]))


if __name__ == "__main__":
    console_entry()
