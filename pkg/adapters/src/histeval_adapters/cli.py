"""Command-line entry points for the sidecar adapters."""

from __future__ import annotations

import argparse
import logging
import sys

from .embeddings import extract_embeddings
from .faces import extract_faces
from .styles import label_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histeval-adapters", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embeddings", help="frozen-encoder embedding sidecar")
    p.add_argument("--input", required=True, help="image directory (corpus root)")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--device", default="cpu")
    p.add_argument("--weights", help="optional encoder state-dict to load")

    p = sub.add_parser("faces", help="face-observation sidecar")
    p.add_argument("--input", required=True, help="image directory (corpus root)")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--device", default="cpu")

    p = sub.add_parser("styles", help="style labels from exported probe weights")
    p.add_argument("--embeddings", required=True, help="embeddings JSONL")
    p.add_argument("--probe", required=True, help="probe.json exported by the engine")
    p.add_argument("--out", required=True, help="output JSONL path")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "embeddings":
        rows = extract_embeddings(
            args.input, args.out, batch_size=args.batch_size,
            device=args.device, weights_path=args.weights,
        )
    elif args.command == "faces":
        rows = extract_faces(args.input, args.out, batch_size=args.batch_size,
                             device=args.device)
    else:
        rows = label_embeddings(args.embeddings, args.probe, args.out)
    print(f"wrote {rows} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
