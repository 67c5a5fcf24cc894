"""Command-line entry point.

Subcommands cover the whole workflow: corpus generation and inspection,
training single variants, the ablation grid, hyperparameter sweeps,
whole-model gradient checking, and line-oriented prediction.  Every run
writes a manifest of its fully-resolved configuration; identical manifests
yield bit-identical history files and checkpoints.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError
from .corpus import (
    CorpusError, Label, Sample, SplitSpec, SynthConfig, corpus_fingerprint,
    corpus_stats, generate_synthetic, load_corpus, save_corpus,
    truncate_and_index,
)
from .gradcheck import DEFAULT_EPSILON, DEFAULT_SEED, check_variant, format_reports
from .model import ALL_VARIANTS, BASELINES, Hyper
from .reports import (
    ablation_figure, confusion_figure, history_figure, sweep_figure,
    write_json, write_jsonl,
)
from .training import TrainConfig, load_checkpoint, run_experiment, save_checkpoint, sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_SYNTH_PRESETS = {
    "default": {},
    "noisy": {"irrelevant_span_prob": 0.5},
}


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract says 1
        raise UsageError(message)


@dataclass
class RunManifest:
    """Fully-resolved run configuration, written next to every artifact."""

    command: str
    variant: str
    seed: int
    corpus_fingerprint: str
    hyper: dict
    train_config: dict
    split: dict
    outdir: str

    def write(self, outdir: Path) -> Path:
        return write_json(outdir / "manifest.json", asdict(self))


# ---------------------------------------------------------------------------
# shared flag groups


def _add_corpus_source(p: _Parser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", metavar="PATH",
                     help="corpus in line-delimited JSON")
    src.add_argument("--synthetic", metavar="PRESET",
                     choices=sorted(_SYNTH_PRESETS),
                     help="generate a corpus in-process instead of loading one")


def _add_hyper_flags(p: _Parser) -> None:
    g = p.add_argument_group("model size")
    g.add_argument("--emb-dim", type=int, default=256,
                   help="word embedding width")
    g.add_argument("--hidden-dim", type=int, default=256,
                   help="encoder output width d (d/2 per direction)")
    g.add_argument("--ne", type=int, default=13,
                   help="relevance enlargement factor")
    g.add_argument("--hops", type=int, default=3,
                   help="memory fusion hops T")
    g.add_argument("--r", type=int, default=None,
                   help="hop attention width (defaults to hidden-dim)")
    g.add_argument("--max-len", type=int, default=33,
                   help="sequence truncation length")


def _add_train_flags(p: _Parser) -> None:
    g = p.add_argument_group("optimization")
    g.add_argument("--lr", type=float, default=5e-4, help="Adam learning rate")
    g.add_argument("--dropout", type=float, default=0.2, help="dropout rate")
    g.add_argument("--epochs", type=int, default=50, help="maximum epochs")
    g.add_argument("--batch-size", type=int, default=32, help="minibatch size")
    g.add_argument("--patience", type=int, default=10,
                   help="early-stopping patience on validation accuracy "
                        "(-1 disables)")
    g.add_argument("--target-train-acc", type=float, default=None,
                   help="stop once clean training accuracy reaches this")
    g.add_argument("--train-frac", type=float, default=0.8,
                   help="fraction of questions in the train+val pool")
    g.add_argument("--val-frac", type=float, default=0.1,
                   help="fraction of the corpus held out for validation")


def _hyper_from(args) -> Hyper:
    hyper = Hyper(emb_dim=args.emb_dim, hidden_dim=args.hidden_dim,
                  ne=args.ne, hops=args.hops, r=args.r, max_len=args.max_len)
    hyper.validate()
    return hyper


def _config_from(args) -> TrainConfig:
    patience = None if args.patience is not None and args.patience < 0 else args.patience
    config = TrainConfig(learning_rate=args.lr, dropout=args.dropout,
                         max_epochs=args.epochs, batch_size=args.batch_size,
                         seed=args.seed, patience=patience,
                         target_train_acc=args.target_train_acc)
    config.validate()
    return config


def _split_from(args) -> SplitSpec:
    spec = SplitSpec(train_fraction=args.train_frac, val_fraction=args.val_frac,
                     seed=args.seed)
    spec.validate()
    return spec


def _load_samples(args) -> list[Sample]:
    if args.data is not None:
        samples, _ = load_corpus(args.data)
        return samples
    overrides = _SYNTH_PRESETS[args.synthetic]
    return generate_synthetic(SynthConfig(seed=args.seed, **overrides))


def _prepare_outdir(args) -> Path:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _manifest(command: str, args, samples, variant: str) -> RunManifest:
    return RunManifest(
        command=command,
        variant=variant,
        seed=args.seed,
        corpus_fingerprint=corpus_fingerprint(samples),
        hyper=_hyper_from(args).to_dict(),
        train_config=_config_from(args).to_dict(),
        split=asdict(_split_from(args)),
        outdir=str(args.outdir),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    config = SynthConfig(
        n_tf_questions=args.tf, n_mc_questions=args.mc,
        answers_per_question=args.answers, vocab_size=args.vocab,
        irrelevant_span_prob=args.noise, uncertain_prob=args.uncertain,
        seed=args.seed,
    )
    config.validate()
    samples = generate_synthetic(config)
    save_corpus(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    print(f"fingerprint {corpus_fingerprint(samples)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    _, stats = load_corpus(args.data)
    if args.json:
        print(json.dumps(stats.to_dict(), sort_keys=True))
    else:
        print(stats.format_table())
    return EXIT_OK


def cmd_train(args) -> int:
    samples = _load_samples(args)
    outdir = _prepare_outdir(args)
    manifest = _manifest("train", args, samples, args.variant)
    manifest.write(outdir)

    outcome = run_experiment(args.variant, samples, _hyper_from(args),
                             _config_from(args), _split_from(args))
    write_jsonl(outdir / "history.jsonl", outcome.train_result.history)
    save_checkpoint(outdir / "model.ckpt", outcome.model, outcome.skeleton_cache)
    history_figure(outcome.train_result.history, outdir / "history.png")

    report = outcome.test_report
    if report is not None:
        eval_payload = report.to_dict()
        eval_payload["manifest"] = "manifest.json"
        write_json(outdir / "eval.json", eval_payload)
        confusion_figure(report, outdir / "confusion.png")
        print(f"{outcome.model.variant.display_name}: "
              f"test accuracy {report.accuracy:.4f}, "
              f"macro-F1 {report.macro_f1:.4f} "
              f"({report.n_samples} samples)")
    print(f"best epoch {outcome.train_result.best_epoch} of "
          f"{len(outcome.train_result.history)}; "
          f"{outcome.model.n_params()} trainable parameters")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    samples = _load_samples(args)
    outdir = _prepare_outdir(args)
    names = ([v.strip() for v in args.variants.split(",") if v.strip()]
             if args.variants else list(ALL_VARIANTS))
    if not names:
        raise UsageError("--variants must name at least one variant")

    manifest = _manifest("ablate", args, samples, ",".join(names))
    manifest.write(outdir)
    rows = []
    for name in names:
        outcome = run_experiment(name, samples, _hyper_from(args),
                                 _config_from(args), _split_from(args))
        rows.append({
            "variant": outcome.model.variant.id,
            "display_name": outcome.model.variant.display_name,
            "test_accuracy": outcome.test_report.accuracy,
            "test_macro_f1": outcome.test_report.macro_f1,
            "best_epoch": outcome.train_result.best_epoch,
            "n_params": outcome.model.n_params(),
            "corpus_fingerprint": manifest.corpus_fingerprint,
        })
    write_jsonl(outdir / "ablation.jsonl", rows)
    ablation_figure(rows, outdir / "ablation.png")

    print(f"{'variant':<16} {'accuracy':>9} {'macro-F1':>9} {'best':>5} {'params':>9}")
    for row in rows:
        print(f"{row['variant']:<16} {row['test_accuracy']:>9.4f} "
              f"{row['test_macro_f1']:>9.4f} {row['best_epoch']:>5} "
              f"{row['n_params']:>9}")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    samples = _load_samples(args)
    outdir = _prepare_outdir(args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers, got {args.values!r}")
    if not values:
        raise UsageError("--values must name at least one value")

    manifest = _manifest("sweep", args, samples, args.variant)
    manifest.write(outdir)
    rows = sweep(args.param, values, args.variant, samples,
                 _hyper_from(args), _config_from(args), _split_from(args))
    write_jsonl(outdir / "sweep.jsonl", rows)
    sweep_figure(rows, outdir / "sweep.png")

    print(f"{args.param:>6} {'accuracy':>9} {'macro-F1':>9} {'best':>5}")
    for row in rows:
        print(f"{row['value']:>6} {row['test_accuracy']:>9.4f} "
              f"{row['test_macro_f1']:>9.4f} {row['best_epoch']:>5}")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    names = list(ALL_VARIANTS) if args.variant == "all" else [args.variant]
    reports = []
    for name in names:
        if args.corrupt:
            with ad.corrupted_backward():
                reports.append(check_variant(name, seed=args.seed,
                                             epsilon=args.epsilon,
                                             tolerance=args.tolerance))
        else:
            reports.append(check_variant(name, seed=args.seed,
                                         epsilon=args.epsilon,
                                         tolerance=args.tolerance))
    print(format_reports(reports, per_module=args.per_module))
    if not all(r.passed for r in reports):
        return EXIT_NUMERIC
    return EXIT_OK


def _predict_records(stream) -> list[dict]:
    records = []
    for n, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"stdin:{n}: not valid JSON ({e})")
        if not isinstance(rec, dict) or "question" not in rec or "answer" not in rec:
            raise CorpusError(f"stdin:{n}: each record needs question and answer fields")
        rec.setdefault("id", f"line{n}")
        records.append(rec)
    return records


def cmd_predict(args) -> int:
    try:
        model, cache = load_checkpoint(args.checkpoint)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA

    for rec in _predict_records(sys.stdin):
        q_tokens = str(rec["question"]).lower().split()
        a_tokens = str(rec["answer"]).lower().split()
        options = rec.get("options") or [None]
        for option in options:
            opt_tokens = str(option).lower().split() if option is not None else None
            sample = Sample(str(rec["id"]), q_tokens, "stdin", a_tokens,
                            opt_tokens, Label.UNCERTAIN)
            indexed = truncate_and_index(sample, model.vocab, model.hyper.max_len)
            probs = model.predict_probs(indexed, cache.get(sample.question_id))
            out = {
                "id": rec["id"],
                "option": option,
                "label": Label(int(np.argmax(probs))).to_string(),
                "probabilities": {
                    "true": float(probs[0]),
                    "false": float(probs[1]),
                    "uncertain": float(probs[2]),
                },
            }
            print(json.dumps(out, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(
        prog="antnet",
        description="Answer-understanding network for reverse QA: "
                    "classify what an answer says about each option term.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_: str) -> _Parser:
        p = sub.add_parser(name, help=help_,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "write a synthetic corpus")
    p.add_argument("--out", required=True, help="output corpus path")
    p.add_argument("--tf", type=int, default=20, help="yes/no questions")
    p.add_argument("--mc", type=int, default=20, help="option questions")
    p.add_argument("--answers", type=int, default=8, help="answers per question")
    p.add_argument("--vocab", type=int, default=60, help="token pool size")
    p.add_argument("--noise", type=float, default=0.0,
                   help="irrelevant-span probability per answer")
    p.add_argument("--uncertain", type=float, default=0.1,
                   help="hedged-answer probability")
    p.add_argument("--seed", type=int, default=0, help="generator seed")

    p = add("stats", cmd_stats, "summarize a corpus file")
    p.add_argument("--data", required=True, help="corpus path")
    p.add_argument("--json", action="store_true",
                   help="emit one JSON object instead of a table")

    p = add("train", cmd_train, "train one variant and evaluate on the test split")
    _add_corpus_source(p)
    p.add_argument("--outdir", required=True, help="artifact directory")
    p.add_argument("--variant", default="antnet",
                   help=f"one of {', '.join(ALL_VARIANTS + BASELINES)}")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    _add_hyper_flags(p)
    _add_train_flags(p)

    p = add("ablate", cmd_ablate, "train several variants under one split")
    _add_corpus_source(p)
    p.add_argument("--outdir", required=True, help="artifact directory")
    p.add_argument("--variants", default=None,
                   help="comma-separated variant names (default: all seven)")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    _add_hyper_flags(p)
    _add_train_flags(p)

    p = add("sweep", cmd_sweep, "train once per value of ne or hops")
    _add_corpus_source(p)
    p.add_argument("--outdir", required=True, help="artifact directory")
    p.add_argument("--variant", default="antnet", help="variant to sweep")
    p.add_argument("--param", required=True, choices=("ne", "hops"),
                   help="hyperparameter to vary")
    p.add_argument("--values", required=True,
                   help="comma-separated integer values")
    p.add_argument("--seed", type=int, default=0, help="run seed")
    _add_hyper_flags(p)
    _add_train_flags(p)

    p = add("gradcheck", cmd_gradcheck,
            "compare analytic gradients against finite differences")
    p.add_argument("--variant", default="all",
                   help=f"'all' or one of {', '.join(ALL_VARIANTS)}")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help="finite-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4,
                   help="maximum acceptable relative error")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="fixture parameter seed")
    p.add_argument("--per-module", action="store_true",
                   help="also list the worst error per model block")
    p.add_argument("--corrupt", action="store_true",
                   help="negative control: corrupt tanh's backward rule; "
                        "the check must then fail")

    p = add("predict", cmd_predict,
            "classify stdin records against a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="model checkpoint path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
