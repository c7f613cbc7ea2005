"""Command-line entry point: `plots --fig {1|2|3} --input csv ... --output img`."""

from __future__ import annotations

import argparse
import sys

from .render import FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render simulator result CSVs as figures"
    )
    parser.add_argument("--fig", required=True, choices=["1", "2", "3"])
    parser.add_argument(
        "--input",
        action="append",
        required=True,
        help="input CSV (repeatable)",
    )
    parser.add_argument("--output", required=True, help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        figure=f"fig{args.fig}", inputs=tuple(args.input), output=args.output
    )
    try:
        path = render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
