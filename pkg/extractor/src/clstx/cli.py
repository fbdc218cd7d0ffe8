"""clstx-extract: corpus -> CLSB stacks with a frozen encoder."""

from __future__ import annotations

import argparse
import logging
import sys

from .clsb import ClsbError
from .extract import ConfigError, CorpusSpec, extract, verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clstx-extract", description=__doc__)
    parser.add_argument("--input", required=True, help="CSV or JSONL corpus")
    parser.add_argument("--text-col", default="text")
    parser.add_argument("--label-col", default="label")
    parser.add_argument("--labels", default=None,
                        help="comma-separated label vocabulary (default: discovered, sorted)")
    parser.add_argument("--model", default="bert-base-uncased")
    parser.add_argument("--max-len", type=int, default=512)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--out", required=True)
    parser.add_argument("--verify", type=int, default=0, metavar="N",
                        help="re-extract N random rows afterwards and compare")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    spec = CorpusSpec(
        input_path=args.input,
        text_field=args.text_col,
        label_field=args.label_col,
        labels=args.labels.split(",") if args.labels else None,
        max_length=args.max_len,
        model_id=args.model,
    )
    try:
        summary = extract(spec, args.out, batch_size=args.batch)
    except (ConfigError, ClsbError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {summary['out']}: {summary['n_samples']} samples, "
          f"{summary['n_classes']} classes, sha256={summary['sha256'][:12]}")

    if args.verify:
        result = verify(args.out, spec, sample_count=args.verify)
        if not result.passed:
            print(f"error: verification failed: {result.detail} "
                  f"(rows {result.mismatches})", file=sys.stderr)
            return 1
        print(f"verified {len(result.checked)} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
