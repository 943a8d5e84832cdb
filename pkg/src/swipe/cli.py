"""Command-line entry point.

Subcommands: synth, train, predict, explain, eval, sufficiency, scale.
Every flag can also come from a key=value config file (--config); explicit
flags win over the file, the file wins over built-in defaults. All
randomness flows from --seed, fanned out internally into named sub-seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from swipe import corpus as corpus_mod
from swipe import evaluate as eval_mod
from swipe.encoder import load_precomputed
from swipe.errors import ConfigError, SwipeError
from swipe.head import Pooling
from swipe.model import ENCODER_HASH, ENCODER_PRECOMPUTED, ModelConfig, SwipeModel
from swipe.train import TrainConfig, train, write_metrics_csv
from swipe.truncate import TruncationConfig, truncate


def _parse_pair(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        return parts[0], parts[0]
    if len(parts) == 2:
        return parts[0], parts[1]
    raise ConfigError(f"expected 'n' or 'lo,hi', got {text!r}")


def _parse_ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three fractions, got {text!r}")
    return parts[0], parts[1], parts[2]


def load_config_file(path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; keys match flag names."""
    entries: dict[str, str] = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pooling", type=str, default="max",
                        choices=[p.value for p in Pooling])
    parser.add_argument("--interaction-layers", type=int, default=0)
    parser.add_argument("--heads", type=int, default=2)
    parser.add_argument("--ff-dim", type=int, default=None)
    parser.add_argument("--positions", type=str, default="off", choices=["on", "off"])
    parser.add_argument("--max-positions", type=int, default=512)
    parser.add_argument("--buckets", type=int, default=4096)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--ngram-orders", type=str, default="1,2")
    parser.add_argument("--truncate", type=str, default="auto",
                        choices=["auto", "punct", "structure"])
    parser.add_argument("--window-len", type=int, default=64)
    parser.add_argument("--overlap", type=int, default=0)
    parser.add_argument("--max-seg-len", type=int, default=64)
    parser.add_argument("--vectors", type=str, default=None,
                        help="precomputed segment-vector sidecar (freezes the encoder)")


def _model_config(args, labels, task_kind, dim_override=None) -> ModelConfig:
    return ModelConfig(
        labels=tuple(labels),
        task_kind=task_kind,
        pooling=Pooling(args.pooling),
        truncation=TruncationConfig(
            strategy=args.truncate,
            window_len=args.window_len,
            overlap=args.overlap,
            max_seg_len=args.max_seg_len,
        ),
        encoder_mode=ENCODER_PRECOMPUTED if args.vectors else ENCODER_HASH,
        n_buckets=args.buckets,
        dim=dim_override if dim_override is not None else args.dim,
        ngram_orders=tuple(_parse_ints(args.ngram_orders)),
        interaction_layers=args.interaction_layers,
        n_heads=args.heads,
        ff_dim=args.ff_dim,
        max_positions=args.max_positions if args.positions == "on" else None,
        init_seed=args.seed,
    )


def cmd_synth(args) -> int:
    spec = corpus_mod.SyntheticSpec(
        num_docs=args.docs,
        num_labels=args.labels,
        segments_per_doc=_parse_pair(args.segments_per_doc),
        key_vocab_per_label=args.key_vocab,
        filler_vocab=args.filler_vocab,
        tokens_per_segment=_parse_pair(args.tokens_per_segment),
        task_kind=args.task,
        seed=args.seed,
    )
    generated, key_map = corpus_mod.generate_synthetic(spec)
    generated = corpus_mod.split_corpus(
        generated, _parse_fractions(args.split), seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_jsonl(generated, out / "corpus.jsonl")
    corpus_mod.write_key_map(key_map, out / "keymap.jsonl")
    print(f"wrote {out / 'corpus.jsonl'} ({len(generated)} docs) and {out / 'keymap.jsonl'}")
    return 0


def _load_model_inputs(args, need_vectors: bool = True):
    model = SwipeModel.load(args.checkpoint)
    if model.config.encoder_mode == ENCODER_PRECOMPUTED and need_vectors:
        if not args.vectors:
            raise ConfigError("checkpoint expects precomputed vectors; pass --vectors")
        model.attach_vectors(load_precomputed(args.vectors))
    return model


def cmd_train(args) -> int:
    loaded = corpus_mod.load_jsonl(args.corpus, args.task)
    if args.split:
        loaded = corpus_mod.split_corpus(loaded, _parse_fractions(args.split), seed=args.seed)
    dim_override = None
    vectors = None
    if args.vectors:
        vectors = load_precomputed(args.vectors)
        if not vectors:
            raise ConfigError(f"no vectors in {args.vectors}")
        dim_override = next(iter(vectors.values())).h
    config = _model_config(args, loaded.vocab.names, args.task, dim_override)
    model = SwipeModel.create(config)
    if vectors is not None:
        model.attach_vectors(vectors)
    result = train(
        loaded, model,
        TrainConfig(epochs=args.epochs, base_lr=args.lr,
                    batch_size=args.batch_size, seed=args.seed),
    )
    metrics_path = args.metrics or (str(args.out) + ".metrics.csv")
    write_metrics_csv(result.metrics, metrics_path)
    result.restore_best()  # checkpoint holds the best-dev parameters
    model.save(args.out)
    final_dev = result.metrics[-1]["dev_metric"]
    print(f"checkpoint={args.out} metrics={metrics_path} "
          f"final_dev_metric={final_dev:.4f} best_epoch={result.best_epoch}")
    return 0


def cmd_predict(args) -> int:
    model = _load_model_inputs(args)
    documents = corpus_mod.load_documents(args.corpus)
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in documents:
            pred = model.predict(doc)
            fh.write(json.dumps(pred.to_record(model.vocab.names)) + "\n")
    print(f"wrote predictions for {len(documents)} documents to {args.out}")
    return 0


def cmd_explain(args) -> int:
    model = _load_model_inputs(args)
    documents = corpus_mod.load_documents(args.corpus)
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in documents:
            pred = model.predict(doc)
            record = pred.to_record(model.vocab.names)
            if model.config.encoder_mode == ENCODER_HASH:
                segments = truncate(doc, model.config.truncation)
                for entry in record["per_label"]:
                    key = entry["key_segment"]
                    entry["key_segment_text"] = " ".join(segments[key].tokens)
            fh.write(json.dumps(record) + "\n")
    print(f"wrote explanations for {len(documents)} documents to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = _load_model_inputs(args)
    loaded = corpus_mod.load_jsonl(args.corpus, model.config.task_kind)
    report = eval_mod.classification_eval(model, loaded, split=args.split)
    if args.keymap:
        key_map = corpus_mod.load_key_map(args.keymap)
        docs = loaded.split_docs(args.split)
        predictions = {doc.id: model.predict(doc) for doc in docs}
        seg_report = eval_mod.segment_labeling_eval(predictions, key_map, model.vocab.names)
        report["segment_micro_f1"] = seg_report.micro_f1
        report["segment_macro_f1"] = seg_report.macro_f1
        report["key_segment_recovery"] = eval_mod.key_segment_recovery(
            predictions, key_map, model.vocab.names
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary = " ".join(
        f"{k}={report[k]:.4f}" for k in
        ("accuracy", "micro_f1", "macro_f1", "segment_micro_f1", "key_segment_recovery")
        if k in report
    )
    print(f"{summary} -> {args.out}")
    return 0


def cmd_sufficiency(args) -> int:
    model = _load_model_inputs(args)
    loaded = corpus_mod.load_jsonl(args.corpus, model.config.task_kind)
    lengths = _parse_ints(args.lengths) if args.lengths else None
    report = eval_mod.sufficiency_test(
        loaded, model, segment_lens=lengths,
        probe=eval_mod.ProbeConfig(epochs=args.probe_epochs, lr=args.probe_lr),
        seed=args.seed,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"rows": report.rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for row in report.rows:
        length = row["segment_len"] if row["segment_len"] is not None else "model"
        print(f"segment_len={length} swipe={row['swipe']:.4f} "
              f"random={row['random']:.4f} full_text={row['full_text']:.4f}")
    return 0


def cmd_scale(args) -> int:
    rows = eval_mod.scaling_probe(
        segment_counts=_parse_ints(args.segments),
        trials=args.trials,
        tokens_per_segment=args.tokens_per_segment,
        dim=args.dim,
        pooling=Pooling(args.pooling),
        seed=args.seed,
    )
    eval_mod.write_scaling_csv(rows, args.out)
    for row in rows:
        print(f"n_segments={row['n_segments']} median_ms={row['median_ms']:.3f}")
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="swipe",
        description="Segment-aware long-text classification with "
                    "self-explaining segment labeling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None,
                       help="key=value file providing flag defaults")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = command("synth", cmd_synth, "generate a planted-key synthetic corpus")
    p.add_argument("--docs", type=int, default=500)
    p.add_argument("--labels", type=int, default=2)
    p.add_argument("--segments-per-doc", type=str, default="8")
    p.add_argument("--key-vocab", type=int, default=20)
    p.add_argument("--filler-vocab", type=int, default=200)
    p.add_argument("--tokens-per-segment", type=str, default="6,12")
    p.add_argument("--task", type=str, default=corpus_mod.TASK_MULTILABEL,
                   choices=list(corpus_mod.TASK_KINDS))
    p.add_argument("--split", type=str, default="0.8,0.1,0.1")
    p.add_argument("--out", type=str, default=".")

    p = command("train", cmd_train, "train a model, save the best-dev checkpoint")
    p.add_argument("--corpus", type=str, required=True)
    p.add_argument("--task", type=str, default=corpus_mod.TASK_MULTICLASS,
                   choices=list(corpus_mod.TASK_KINDS))
    p.add_argument("--split", type=str, default=None,
                   help="fractions to split untagged documents, e.g. 0.8,0.1,0.1")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--metrics", type=str, default=None)
    p.add_argument("--out", type=str, required=True, help="checkpoint path")

    for name, func, needs_keymap in (
        ("predict", cmd_predict, False),
        ("explain", cmd_explain, False),
    ):
        p = command(name, func, f"{name} documents with a trained checkpoint")
        p.add_argument("--checkpoint", type=str, required=True)
        p.add_argument("--corpus", type=str, required=True)
        p.add_argument("--vectors", type=str, default=None)
        p.add_argument("--out", type=str, required=True)

    p = command("eval", cmd_eval, "classification and segment-labeling metrics")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--corpus", type=str, required=True)
    p.add_argument("--vectors", type=str, default=None)
    p.add_argument("--keymap", type=str, default=None)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--out", type=str, required=True)

    p = command("sufficiency", cmd_sufficiency, "explanation sufficiency protocol")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--corpus", type=str, required=True)
    p.add_argument("--vectors", type=str, default=None)
    p.add_argument("--lengths", type=str, default=None,
                   help="comma-separated auto window lengths, e.g. 64,128,256")
    p.add_argument("--probe-epochs", type=int, default=12)
    p.add_argument("--probe-lr", type=float, default=0.05)
    p.add_argument("--out", type=str, required=True)

    p = command("scale", cmd_scale, "forward+backward timing vs segment count")
    p.add_argument("--segments", type=str, default="8,16,32,64")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--tokens-per-segment", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--pooling", type=str, default="max",
                   choices=[pool.value for pool in Pooling])
    p.add_argument("--out", type=str, required=True)

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        if "--config" in argv:
            config = load_config_file(argv[argv.index("--config") + 1])
            for sub in subparsers.values():
                for action in sub._actions:
                    if action.dest in config:
                        raw = config[action.dest]
                        action.default = action.type(raw) if action.type else raw
        args = parser.parse_args(argv)
        return args.func(args)
    except SwipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: lookup failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
