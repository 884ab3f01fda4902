"""Command-line front end for figure generation.

Exit codes: 0 success, 1 any failure (usage, unreadable or malformed CSV,
empty selection, unwritable output).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .plots import PlotError, PlotSpec, plot_converge, plot_moments


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves a single
    # failure code.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="plot", description="Render figures from harness CSV output.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("csv", type=Path, help="harness CSV file to read")
    common.add_argument("-o", "--out", type=Path, default=None,
                        help="output PNG path (default: CSV path with .png suffix)")
    common.add_argument("--title", default=None, help="figure title")
    common.add_argument("--experiment", default=None,
                        help="experiment column filter (default: the command's own)")

    conv = sub.add_parser("converge", parents=[common],
                          help="log2-log2 strong error figure with fitted rates")
    conv.add_argument("--slope", type=float, default=0.5,
                      help="reference guide line slope (default 0.5)")
    sub.add_parser("moments", parents=[common],
                   help="moment trajectories on a log y axis")
    return parser


def _spec(args) -> PlotSpec:
    out = args.out if args.out is not None else args.csv.with_suffix(".png")
    return PlotSpec(
        csv_path=args.csv,
        out_path=out,
        experiment=args.experiment,
        title=args.title,
        reference_slope=getattr(args, "slope", 0.5),
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "converge":
            result = plot_converge(_spec(args))
            for scheme in result.schemes:
                print(f"{scheme} fitted slope {result.slopes[scheme]:.17g}")
                if scheme in result.harness_rates:
                    print(f"{scheme} harness fit_rate {result.harness_rates[scheme]:.17g}")
            print(f"reference slope {result.reference_slope:g}")
        else:
            result = plot_moments(_spec(args))
            for scheme, t in result.blowups:
                print(f"blow-up marker: {scheme} at t={t:g}")
        print(f"wrote {result.out_path}")
    except (PlotError, OSError) as exc:
        print(f"plot: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
