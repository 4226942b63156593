"""CLI: export frozen-encoder embeddings to the binary store format."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from embexport.export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embexport", description=__doc__)
    parser.add_argument("command", choices=["export"])
    parser.add_argument("--corpus", required=True, help="JSONL corpus with id/language/code/doc")
    parser.add_argument("--encoder", required=True, help="HF model name or local directory")
    parser.add_argument("--out", required=True, help="output .embs store path")
    parser.add_argument(
        "--field",
        choices=["code", "doc", "node-contents"],
        default="code",
        help="corpus field to embed; node-contents reads graph-dump JSONL",
    )
    parser.add_argument("--key", choices=["sample-id", "content-hash"], default="sample-id")
    parser.add_argument("--pooling", choices=["first-token", "mean"], default="first-token")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-length", type=int, default=512)
    return parser


def run(argv: list[str]) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    job = ExportJob(
        corpus_path=args.corpus,
        encoder=args.encoder,
        out_path=args.out,
        field=args.field,
        key_mode=args.key,
        pooling=args.pooling,
        batch_size=args.batch_size,
        max_length=args.max_length,
    )
    try:
        result = export(job)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    sys.stdout.write(
        json.dumps(
            {
                "count": result.count,
                "dim": result.dim,
                "skipped_lines": result.skipped_lines,
                "truncated": result.truncated,
                "store": args.out,
            },
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
