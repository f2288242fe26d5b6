"""``wgf-plot`` command line: render one figure from experiment CSVs."""

from __future__ import annotations

import argparse
import sys

from wgf_plot.render import FigureKind, FigureSpec, render
from wgf_plot.schemas import SchemaError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wgf-plot",
        description="Render figures from wgf experiment CSV artifacts",
    )
    parser.add_argument(
        "kind", choices=[k.value for k in FigureKind],
        help="figure kind to render",
    )
    parser.add_argument(
        "--in", dest="inputs", required=True,
        help="comma-separated input CSV paths",
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title")
    parser.add_argument("--xlabel")
    parser.add_argument("--ylabel")
    parser.add_argument("--no-slope", action="store_true",
                        help="suppress the log-log slope annotation")
    parser.add_argument("--chi", type=float,
                        help="coupling for the analytic second-moment overlay")
    parser.add_argument("--m2-0", dest="m2_initial", type=float,
                        help="initial second moment for the overlay")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    spec = FigureSpec(
        kind=FigureKind(args.kind),
        inputs=[tok for tok in args.inputs.split(",") if tok],
        output=args.out,
        title=args.title,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
        annotate_slope=not args.no_slope,
        chi=args.chi,
        m2_initial=args.m2_initial,
        dpi=args.dpi,
    )
    try:
        result = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"image: {result.output}")
    for subset, slope in sorted(result.slopes.items()):
        print(f"slope[{subset}] = {slope!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
