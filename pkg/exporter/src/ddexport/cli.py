"""Command-line entry: export one image's bundle from a registered model."""

from __future__ import annotations

import argparse
import sys

from .export import MODELS, ExportError, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddexport", description=__doc__)
    parser.add_argument("--model", required=True, help=f"one of {sorted(MODELS)}")
    parser.add_argument("--image", required=True, help="input image (.npy tensor or image file)")
    parser.add_argument("--kind", required=True, choices=("linear", "mlp", "vit"))
    parser.add_argument("--out", required=True)
    parser.add_argument("--pretrained", action="store_true", help="load pretrained weights (needs network)")
    parser.add_argument("--seed", type=int, default=0, help="init seed when not pretrained")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = run_export(args.model, args.image, args.kind, args.out, args.pretrained, args.seed)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
