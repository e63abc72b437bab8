"""Command-line interface: ``privdetect <command> [flags]``.

Settings resolve in order: built-in defaults, ``--config`` file, ``--set
key=value`` overrides, then the dedicated flags (``--seed``, ``--variant``,
...). Failures print one ``error:`` line on stderr and exit with a code
that identifies the failure class (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import KERNEL_BACKEND, __version__
from .attention import write_attention_csv
from .autodiff import DimensionError, NumericalError
from .checkpoint import CheckpointError, describe, load_checkpoint, save_checkpoint
from .config import FUSIONS, TINY, VARIANTS, RunConfig, format_config, load_config
from .data import (ConfigurationError, DataError, LabelVocabulary, collate, load_corpus,
                   load_embeddings, make_sample, split_train)
from .diagnostics import MODEL_EPSILON, check_model_gradients
from .graph import count_cooccurrence, revise_adjacency
from .metrics import format_table
from .synthetic import generate
from .training import (CompatibilityError, TrainingError, cross_validate, evaluate,
                       score_samples, train_fold)

logger = logging.getLogger("privdetect")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4
EXIT_TRAINING = 5
EXIT_COMPATIBILITY = 6
EXIT_IO = 7

# most specific classes first: CompatibilityError and ConfigurationError are ValueErrors
EXIT_CODES = (
    (CompatibilityError, EXIT_COMPATIBILITY, "incompatible input"),
    (CheckpointError, EXIT_CHECKPOINT, "checkpoint error"),
    (ConfigurationError, EXIT_CONFIG, "configuration error"),
    (DataError, EXIT_DATA, "data error"),
    (DimensionError, EXIT_DATA, "shape error"),
    (TrainingError, EXIT_TRAINING, "training error"),
    (NumericalError, EXIT_TRAINING, "numerical error"),
    (OSError, EXIT_IO, "I/O error"),
)


# ---------------------------------------------------------------------------
# configuration


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    raw = cfg.to_dict()
    for item in args.set or ():
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, value = (p.strip() for p in item.split("=", 1))
        if key not in raw:
            raise ConfigurationError(f"unknown config key {key!r}")
        raw[key] = value
    flags = {"data": args.data, "embeddings": args.embeddings, "labels": args.labels,
             "out": args.out, "seed": args.seed, "variant": args.variant,
             "fusion": args.fusion, "gcn_layers": args.gcn_layers, "jobs": args.jobs}
    raw.update({k: v for k, v in flags.items() if v is not None})
    try:
        return RunConfig.from_dict(raw)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None


def _out_dir(cfg: RunConfig) -> Path:
    if cfg.out is None:
        raise ConfigurationError("missing required path: out (use --out DIR)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _read_texts(path) -> list[tuple[str, str]]:
    """(id, text) pairs from a JSONL file whose lines carry ``text`` and optional ``id``."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                raise DataError(f"{path}:{lineno}: expected an object with 'text'")
            sid = obj.get("id")
            out.append((str(sid) if sid is not None else f"line{lineno}", obj["text"]))
    return out


def _inference_samples(args, vocab: LabelVocabulary):
    if args.text:
        pairs = [(f"text{i}", t) for i, t in enumerate(args.text)]
    elif args.data:
        pairs = _read_texts(args.data)
    else:
        raise ConfigurationError("give input with --text TEXT or --data FILE")
    if not pairs:
        raise DataError("no input texts")
    samples = []
    for sid, text in pairs:
        try:
            samples.append(make_sample(text, vocab, sid=sid))
        except DataError as exc:
            raise DataError(f"input {sid}: {exc}") from None
    return samples


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    cfg.check_paths("data", "embeddings", "labels", "out")
    tc = cfg.train_config()
    out = _out_dir(cfg)
    vocab = LabelVocabulary.load(cfg.labels)
    samples = load_corpus(cfg.data, vocab)
    table = load_embeddings(cfg.embeddings, expected_dim=tc.d1, seed=tc.seed)
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")

    if tc.folds >= 2:
        result = cross_validate(samples, tc, vocab, table, out_dir=out)
        _write_json(out / "metrics.json", result.to_dict())
        rows = [(f"fold {f.fold}", f.report) for f in result.folds] + [("mean", result.mean)]
    else:
        sub_idx, val_idx = split_train(np.arange(len(samples)), tc.split_ratio, seed=tc.seed)
        model, history = train_fold([samples[i] for i in sub_idx], [samples[i] for i in val_idx],
                                    tc, vocab, table)
        save_checkpoint(model, out / "model.pmlc")
        history.write_csv(out / "history.csv")
        report = evaluate(model, [samples[i] for i in val_idx])
        _write_json(out / "metrics.json", {"validation": report.to_dict(),
                                           "best_epoch": history.best_epoch})
        rows = [("validation", report)]
    table_text = format_table(rows)
    (out / "metrics.txt").write_text(table_text + "\n", encoding="utf-8")
    print(table_text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    if args.data is None:
        raise ConfigurationError("missing required path: data (use --data FILE)")
    vocab = LabelVocabulary.load(args.labels) if args.labels else model.vocab
    if vocab != model.vocab:
        raise CompatibilityError(f"label vocabulary in {args.labels} differs from the checkpoint's")
    samples = load_corpus(args.data, model.vocab)
    report = evaluate(model, samples)
    table_text = format_table([(Path(args.checkpoint).stem, report)])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "metrics.json", report.to_dict())
        (out / "metrics.txt").write_text(table_text + "\n", encoding="utf-8")
    print(table_text)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = _inference_samples(args, model.vocab)
    scores = score_samples(model, samples)
    lines = []
    for sample, row in zip(samples, scores):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        ranked = [{"label": model.vocab.names[j], "probability": float(row[j])} for j in order]
        lines.append(json.dumps({"id": sample.id, "labels": ranked}, ensure_ascii=False))
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "predictions.jsonl").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _write_matrix_csv(path: Path, matrix: np.ndarray, names) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["", *names])
        for name, row in zip(names, matrix):
            w.writerow([name, *(repr(float(v)) for v in row)])


def cmd_build_graph(args) -> int:
    cfg = resolve_config(args)
    cfg.check_paths("data", "labels", "out")
    out = _out_dir(cfg)
    vocab = LabelVocabulary.load(cfg.labels)
    samples = load_corpus(cfg.data, vocab)
    stats = count_cooccurrence(np.stack([s.labels for s in samples]), len(vocab))
    A = revise_adjacency(stats.P, cfg.u, cfg.graph_threshold)
    _write_matrix_csv(out / "P.csv", stats.P, vocab.names)
    _write_matrix_csv(out / "A.csv", A, vocab.names)
    print(f"wrote {out / 'P.csv'} and {out / 'A.csv'} ({len(vocab)} labels, "
          f"{len(samples)} samples, u={cfg.u})")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = resolve_config(args)
    overrides = {k: v for k, v in TINY.items()}
    tc = cfg.train_config().replace(**overrides)
    report = check_model_gradients(tc, seed=tc.seed, epsilon=args.epsilon,
                                   tolerance=args.tolerance, per_tensor=args.per_tensor)
    print(f"variant {tc.variant}, fusion {tc.fusion}, gcn_layers {tc.gcn_layers}, "
          f"kernel {KERNEL_BACKEND}")
    print(report.format())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_gen_synthetic(args) -> int:
    if args.out is None:
        raise ConfigurationError("missing required path: out (use --out DIR)")
    try:
        corpus = generate(n_samples=args.n_samples, n_labels=args.n_labels,
                          seed=args.seed if args.seed is not None else 0, dim=args.dim,
                          n_pairs=args.n_pairs, pair_rate=args.pair_rate, noise=args.noise,
                          keyword_spread=args.keyword_spread)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    paths = corpus.write(args.out)
    print(f"wrote {len(corpus.records)} samples, {len(corpus.vocab)} labels to {args.out} "
          f"({', '.join(p.name for p in paths.values())})")
    return EXIT_OK


def cmd_dump_attention(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = _inference_samples(args, model.vocab)
    if not 0 <= args.index < len(samples):
        raise ConfigurationError(f"--index {args.index} outside 0..{len(samples) - 1}")
    sample = samples[args.index]
    if args.out is None:
        raise ConfigurationError("missing required path: out (use --out DIR)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    batch = collate([sample], model.table, model.config.m_max)
    fwd = model.forward(batch)
    tokens = batch.words[0]
    written = []
    for name, weights in (("A_s", fwd.a_s), ("A_l", fwd.a_l)):
        if weights is None:
            continue
        path = out / f"{name}.csv"
        write_attention_csv(path, weights.data[0], tokens, model.vocab.names)
        written.append(path.name)
    print(f"sample {sample.id}: wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_inspect_checkpoint(args) -> int:
    print(describe(args.checkpoint))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--data", metavar="PATH", help="JSONL corpus")
    p.add_argument("--embeddings", metavar="PATH", help="text word-vector file")
    p.add_argument("--labels", metavar="PATH", help="label vocabulary, one name per line")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--fusion", choices=FUSIONS)
    p.add_argument("--gcn-layers", type=int, metavar="N")
    p.add_argument("--jobs", type=int, metavar="N", help="parallel folds (default 1)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")


def _inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--text", action="append", metavar="TEXT", help="input text (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privdetect",
        description="Multi-label privacy-disclosure detection with double attention and a "
                    "label co-occurrence graph.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-v info, -vv debug)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train (k-fold cross-validation when folds >= 2)")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a labelled corpus")
    _common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="ranked label probabilities as JSONL")
    _common(p)
    _inputs(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("build-graph", help="write co-occurrence P.csv and revised A.csv")
    _common(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    _common(p)
    p.add_argument("--epsilon", type=float, default=MODEL_EPSILON)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--per-tensor", type=int, default=None, metavar="N",
                   help="coordinates sampled per tensor (default: all)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus with planted rules")
    _common(p)
    p.add_argument("--n-samples", type=int, default=64)
    p.add_argument("--n-labels", type=int, default=8)
    p.add_argument("--n-pairs", type=int, default=2)
    p.add_argument("--pair-rate", type=float, default=0.8)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--keyword-spread", type=float, default=0.1)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("dump-attention", help="write A_s.csv and A_l.csv for one input")
    _common(p)
    _inputs(p)
    p.add_argument("--index", type=int, default=0, help="which input to dump (default 0)")
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint's metadata and tensors")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.set_defaults(func=cmd_inspect_checkpoint)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # mapped to one diagnostic line and an exit code
        for cls, code, kind in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"error: {kind}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
