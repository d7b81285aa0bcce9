"""Command-line interface: ``greedyseg {train,segment,evaluate,inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from .corpus import Corpus, CorpusError, load_raw_lines, load_segmented_corpus, split_dev
from .evalseg import SegMetrics, score_corpus
from .modelfile import ModelFormatError, load_model, save_model
from .numcore import ContractError
from .training import STRATEGIES, TrainConfig, train

log = logging.getLogger("greedyseg")


def parse_dims(spec: str) -> dict[str, int]:
    """``"d_c=50,d_w=50,H=50"`` -> ``{"d_c": 50, "d_w": 50, "hidden": 50}``."""
    keys = {"d_c": "d_c", "d_w": "d_w", "H": "hidden", "hidden": "hidden"}
    out = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        name, _, val = part.partition("=")
        name = name.strip()
        if name not in keys or not val.strip().isdigit():
            raise argparse.ArgumentTypeError(f"bad --dims entry {part!r}; expected d_c=N,d_w=N,H=N")
        out[keys[name]] = int(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="greedyseg", description="Greedy neural word segmenter.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train", help="train a model on a segmented corpus")
    t.add_argument("--train", required=True, help="segmented training file (SIGHAN format)")
    t.add_argument("--dev", help="segmented dev file; default: hold out the tail of --train")
    t.add_argument("--dev-frac", type=float, default=0.1)
    t.add_argument("--limit", type=int, help="use only the first N training sentences")
    t.add_argument("--beam-size", type=int, default=1)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--patience", type=int, default=5)
    t.add_argument("--strategy", choices=STRATEGIES, default="early")
    t.add_argument("--mu", type=float, default=0.2)
    t.add_argument("--gamma", type=float, default=0.1)
    t.add_argument("--lr", type=float, default=0.2)
    t.add_argument("--shortlist-frac", type=float, default=0.5)
    t.add_argument("--max-word-len", type=int, default=4)
    t.add_argument("--dims", type=parse_dims, default=parse_dims("d_c=50,d_w=50,H=50"))
    t.add_argument("--unk-threshold", type=int, default=1)
    t.add_argument("--unk-prob", type=float, default=0.5)
    t.add_argument("--clip", type=float, default=5.0)
    t.add_argument("--pretrained", help="word2vec text-format character embeddings")
    t.add_argument("--normalize", action="store_true", help="map ASCII digits/letters to class symbols")
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--report", help="per-epoch JSONL report (default: OUT.report.jsonl)")

    s = sub.add_parser("segment", help="segment raw text, one sentence per line")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", help="default: stdout")
    s.add_argument("--beam-size", type=int, default=1)

    e = sub.add_parser("evaluate", help="score a model against a segmented gold file")
    e.add_argument("--model", required=True)
    e.add_argument("--gold", required=True)
    e.add_argument("--beam-size", type=int, default=1)
    e.add_argument("--train-vocab", help="segmented training file defining IV words for OOV recall")
    e.add_argument("--oracle", action="store_true", help="use the gold segmentation as the prediction")

    i = sub.add_parser("inspect", help="print model metadata")
    i.add_argument("--model", required=True)
    return p


def cmd_train(args) -> int:
    dims = {"d_c": 50, "d_w": 50, "hidden": 50, **args.dims}
    config = TrainConfig(
        **dims,
        max_word_len=args.max_word_len,
        mu=args.mu,
        beam_size=args.beam_size,
        lr=args.lr,
        gamma=args.gamma,
        max_epochs=args.epochs,
        patience=args.patience,
        strategy=args.strategy,
        shortlist_fraction=args.shortlist_frac,
        seed=args.seed,
        unk_threshold=args.unk_threshold,
        unk_replace_prob=args.unk_prob,
        grad_clip_norm=args.clip,
    )
    corpus = load_segmented_corpus(args.train, args.normalize)
    if args.limit is not None:
        corpus = Corpus.from_sentences(corpus.sentences[: args.limit], corpus.source)
    if args.dev:
        train_c, dev_c = corpus, load_segmented_corpus(args.dev, args.normalize)
    else:
        train_c, dev_c = split_dev(corpus, args.dev_frac)
    log.info("train %s / dev %s", train_c.stats, dev_c.stats)

    report_path = Path(args.report or f"{args.out}.report.jsonl")
    started = time.time()
    with report_path.open("w", encoding="utf-8") as fh:

        def on_epoch(rec):
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
            fh.flush()

        result = train(config, train_c, dev_c, args.pretrained, on_epoch)
    result.segmenter.normalize = args.normalize
    rep = result.report
    provenance = {
        "train_file": str(args.train),
        "train_sentences": len(train_c),
        "dev_sentences": len(dev_c),
        "iv_words": len(result.train_words),
        "epochs_run": len(rep.epochs),
        "best_epoch": rep.best_epoch,
        "best_dev_f1": rep.best.dev_f1,
        "altered_long_words": rep.altered_words,
        "pretrained": args.pretrained,
        "pretrained_coverage": rep.pretrained_coverage,
        "train_seconds": round(time.time() - started, 1),
    }
    save_model(args.out, result.segmenter, config.as_dict(), provenance)
    print(f"best epoch {rep.best_epoch}: dev F1 {rep.best.dev_f1:.4f}; model written to {args.out}")
    return 0


def cmd_segment(args) -> int:
    model = load_model(args.model)
    lines = load_raw_lines(args.input)
    out = [" ".join(model.segmenter.words(line, args.beam_size)) for line in lines]
    text = "".join(line + "\n" for line in out)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    seg = model.segmenter
    gold = load_segmented_corpus(args.gold, seg.normalize)
    train_words = None
    if args.train_vocab:
        train_words = load_segmented_corpus(args.train_vocab, seg.normalize).word_set
    t0 = time.perf_counter()
    if args.oracle:
        preds = [s.gold_lengths for s in gold]
    else:
        preds = [seg.segment(s.text, args.beam_size) for s in gold]
    elapsed = max(time.perf_counter() - t0, 1e-9)
    m: SegMetrics = score_corpus(
        ((s.text, s.gold_lengths, p) for s, p in zip(gold, preds)), train_words
    )
    record = {
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "oov_recall": m.oov_recall if train_words is not None else None,
        "sentences_per_sec": len(gold) / elapsed,
        "chars_per_sec": gold.stats.characters / elapsed,
    }
    print(json.dumps(record))
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    d = model.params.dims
    sl = model.segmenter.shortlist
    rows = {
        "d_c": d.d_c,
        "d_w": d.d_w,
        "H": d.hidden,
        "L_max": d.max_word_len,
        "char_vocab": d.n_chars,
        "shortlist_size": len(sl),
        "shortlist_fraction": sl.fraction,
        "iv_words": sl.iv_count,
        "normalize": model.segmenter.normalize,
        "param_count": model.params.param_count(),
    }
    for k, v in model.config.items():
        rows.setdefault(f"config.{k}", v)
    for k, v in model.provenance.items():
        rows[f"provenance.{k}"] = v
    for k, v in rows.items():
        print(f"{k}={v}")
    return 0


COMMANDS = {"train": cmd_train, "segment": cmd_segment, "evaluate": cmd_evaluate, "inspect": cmd_inspect}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (OSError, CorpusError, ModelFormatError, ContractError) as exc:
        print(f"greedyseg {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
