"""Extractor CLI: `extract` and `finetune` subcommands, flag style matching
the probing pipeline's CLI."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import ExtractionJob, extract
from .finetune import finetune_pos


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrep-extract",
                                     description="Hidden-state extraction and "
                                                 "POS fine-tuning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="write an MCREP file for one dataset")
    p.add_argument("--model", required=True, help="model path or identifier")
    p.add_argument("--instance", required=True,
                   choices=["pre-trained", "fine-tuned"])
    p.add_argument("--dataset", required=True, help="dataset .jsonl file")
    p.add_argument("--pooling", required=True,
                   choices=["target-mean", "mask-token", "sentence-mean", "cls"])
    p.add_argument("--out", required=True, help="output .mcrep path")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--device", default="cpu")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-length", type=int, default=None)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint for POS tagging")
    p.add_argument("--model", required=True)
    p.add_argument("--treebanks", nargs="+", required=True,
                   help="CoNLL-U files for the 80/10/10 split")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=5e-4)
    p.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            summary = extract(ExtractionJob(
                model_path=args.model, instance=args.instance,
                dataset_path=args.dataset, pooling=args.pooling,
                output_path=args.out, batch_size=args.batch_size,
                device=args.device, seed=args.seed, max_length=args.max_length))
            print(json.dumps(summary, ensure_ascii=False))
            return 0
        result = finetune_pos(args.treebanks, args.model, args.out,
                              seed=args.seed, epochs=args.epochs,
                              batch_size=args.batch_size,
                              learning_rate=args.learning_rate,
                              device=args.device)
        print(json.dumps({"checkpoint": result.checkpoint,
                          "metrics": result.metrics}, ensure_ascii=False))
        return 0
    except (ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
