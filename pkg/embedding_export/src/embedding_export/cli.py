"""Command-line front end: plm-export export --data ... --out ..."""

from __future__ import annotations

import argparse
import logging
import sys

from .exporter import DEFAULT_MODEL, ExportError, ExportJob, export

logger = logging.getLogger("plm-export")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plm-export",
        description="export pooled language-model embeddings for a dataset",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed every distinct text in a dataset")
    p.add_argument("--data", required=True, help="dataset file (jsonl)")
    p.add_argument("--out", required=True, help="embedding file to write")
    p.add_argument("--model", default=DEFAULT_MODEL,
                   help="model identifier or local model directory")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    job = ExportJob(dataset=args.data, output=args.out, model=args.model,
                    batch_size=args.batch, device=args.device)
    try:
        n = export(job)
    except ExportError as exc:
        logger.error("%s", exc)
        return 2
    print(f"exported {n} keys to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
