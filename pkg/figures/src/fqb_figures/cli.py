"""fqb-plot: render one analysis CSV into a PNG.

Usage: fqb-plot <kind> <in.csv> <out.png> [--title ...]
with kind one of erc, proportions, distributions, fnmr.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fqb-plot", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("input", help="input CSV (fqb analysis output)")
    parser.add_argument("output", help="output PNG path")
    parser.add_argument("--title", help="figure title")
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else int(exc.code)

    try:
        render(FigureSpec(kind=args.kind, input_path=args.input,
                          output_path=args.output, title=args.title))
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
