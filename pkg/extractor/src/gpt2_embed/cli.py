"""Command-line entry points.

    gpt2-embed extract        prompts JSONL -> embedding store
    gpt2-embed token-stats    tokenizer-only prompt statistics
    gpt2-embed attention-dump 9-segment last-token attention, CSV
"""

from __future__ import annotations

import argparse
import csv
import sys

from .extract import (DEFAULT_MODEL, ExtractionJob, dump_last_token_attention,
                      extract, load_model, read_prompts, report_token_stats)


def cmd_extract(args) -> int:
    job = ExtractionJob(prompts_path=args.prompts, out_path=args.out,
                        model_id=args.model, batch_size=args.batch,
                        device=args.device)
    path = extract(job)
    print(f"store -> {path}")
    return 0


def cmd_token_stats(args) -> int:
    _, tokenizer = load_model(args.model, "cpu") if args.with_model else \
        (None, _tokenizer_only(args.model))
    labeled = {}
    for item in args.prompts:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            label, path = item, item
        labeled[label] = path
    rows = report_token_stats(labeled, tokenizer)
    writer = csv.writer(sys.stdout)
    writer.writerow(["dataset", "prompts", "mean_tokens", "max_tokens"])
    for row in rows:
        writer.writerow([row["dataset"], row["prompts"],
                         f"{row['mean_tokens']:.1f}", row["max_tokens"]])
    return 0


def _tokenizer_only(model_id: str):
    from transformers import AutoTokenizer

    return AutoTokenizer.from_pretrained(model_id)


def cmd_attention_dump(args) -> int:
    model, tokenizer = load_model(args.model, args.device)
    records = read_prompts(args.prompts)
    if args.limit:
        records = records[:args.limit]
    writer = csv.writer(sys.stdout if args.out == "-" else
                        open(args.out, "w", newline=""))
    writer.writerow(["window_id", "variable_id"] +
                    [f"segment_{i}" for i in range(args.segments)])
    for rec in records:
        weights = dump_last_token_attention(rec["text"], model, tokenizer,
                                            segments=args.segments,
                                            device=args.device)
        writer.writerow([rec["window_id"], rec["variable_id"]] +
                        [f"{w:.6f}" for w in weights])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpt2-embed", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed prompts into a store file")
    p.add_argument("--prompts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("token-stats", help="mean/max token counts per file")
    p.add_argument("--prompts", nargs="+", required=True,
                   metavar="LABEL=PATH")
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--with-model", action="store_true",
                   help="load the full model instead of just the tokenizer")
    p.set_defaults(func=cmd_token_stats)

    p = sub.add_parser("attention-dump",
                       help="last-token attention over 9 prompt segments")
    p.add_argument("--prompts", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--model", default=DEFAULT_MODEL)
    p.add_argument("--segments", type=int, default=9)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=cmd_attention_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
