"""Command-line front end.

Exit codes: 0 success, 1 usage or config error, 2 simulation failure
(blow-up outside corruption mode, Newton breakdown), 3 assumption
validation failure.
"""
from __future__ import annotations

import argparse
import sys

from . import experiments
from .experiments import ConfigError, StudyConfig
from .schemes import NewtonError
from .simulator import SimulationError

# Flag precedence is defaults < config file < explicit flags; these are the
# per-command baselines the config file and flags override.
_CMD_DEFAULTS = {
    "converge": {},
    "moments": {"h_values": (2.0**-6,), "T": 200.0},
    "chaos": {"h_values": (2.0**-6,), "T": 4.0},
    "corrupt": {"h_values": (0.25,), "T": 10.0, "N": 100, "record_stride": 1},
}

_COMMANDS = {
    "converge": experiments.converge_cmd,
    "moments": experiments.moments_cmd,
    "chaos": experiments.chaos_cmd,
    "corrupt": experiments.corrupt_cmd,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this harness reserves 2 for simulation
    # failures, so usage problems must exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _dyadic(text: str) -> float:
    return experiments._parse_number(text, "h", 0)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="model name (example-4.1 or example-4.2)")
    p.add_argument("--scheme", action="append", choices=["pem", "bem", "em"],
                   help="scheme to run; repeat for several")
    p.add_argument("--n", type=int, help="particle count")
    p.add_argument("--t", type=float, help="time horizon")
    p.add_argument("--h", action="append", type=_dyadic, metavar="H",
                   help="step size (accepts 2^-k); repeat for a grid")
    p.add_argument("--href", type=_dyadic, help="reference step size (accepts 2^-k)")
    p.add_argument("--seed", type=int, help="study seed")
    p.add_argument("--replicas", type=int, help="independent replications")
    p.add_argument("--threads", type=int, help="worker threads for grid cells")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--allow-unsafe-h", action="store_true", default=None,
                   help="run step sizes above the admissible ceiling")


def build_parser() -> _Parser:
    parser = _Parser(prog="mvsde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("converge", help="strong-error grid vs a fine reference")
    _add_common(p)

    p = sub.add_parser("moments", help="moment trajectories on a long horizon")
    _add_common(p)
    p.add_argument("--orders", help="comma-separated even moment orders (default 2,4)")
    p.add_argument("--stride", type=int, help="record every k-th step")

    p = sub.add_parser("chaos", help="particle-count sweep against a large-N proxy")
    _add_common(p)
    p.add_argument("--n-list", help="comma-separated system sizes")
    p.add_argument("--n-max", type=int, help="proxy system size")

    p = sub.add_parser("corrupt", help="blow-up demo: explicit Euler vs guarded schemes")
    _add_common(p)
    p.add_argument("--x0", type=float, help="initial value override")

    p = sub.add_parser("validate", help="spot-check model assumption constants")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    return parser


_FLAG_TO_FIELD = {
    "model": "model", "n": "N", "t": "T", "href": "h_ref", "seed": "seed",
    "replicas": "replicas", "threads": "threads", "out": "out",
    "allow_unsafe_h": "allow_unsafe_h", "x0": "x0", "n_max": "n_max",
    "stride": "record_stride",
}


def _config_from_args(args: argparse.Namespace) -> StudyConfig:
    import dataclasses

    cfg = dataclasses.replace(StudyConfig(), **_CMD_DEFAULTS[args.command])
    if args.config:
        cfg = experiments.config_from_values(experiments.parse_config_file(args.config), cfg)
    overrides = {}
    for flag, field in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if args.scheme:
        overrides["schemes"] = tuple(args.scheme)
    if args.h:
        overrides["h_values"] = tuple(args.h)
    if getattr(args, "orders", None):
        overrides["moment_orders"] = tuple(
            int(p) for chunk in args.orders.split(",") for p in chunk.split())
    if getattr(args, "n_list", None):
        overrides["n_values"] = tuple(
            int(p) for chunk in args.n_list.split(",") for p in chunk.split())
    return dataclasses.replace(cfg, **overrides)


def _run_validate(args: argparse.Namespace) -> int:
    report = experiments.validate_cmd(args.model, sample_count=args.samples, seed=args.seed)
    print(report.describe())
    return 0 if report.passed else 3


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _run_validate(args)
        cfg = _config_from_args(args)
        rows = _COMMANDS[args.command](cfg)
        out = cfg.out or f"{args.command}.csv"
        experiments.write_csv(rows, out)
        print(f"wrote {len(rows)} rows to {out}")
        for r in rows:
            if r.metric == "fit_rate":
                print(f"  {r.scheme}: fitted strong rate {r.value:.4f}")
            elif r.metric == "blowup_step":
                print(f"  {r.scheme}: blow-up flagged at step {int(r.value)} (h={r.h:g})")
        return 0
    except ConfigError as err:
        print(f"mvsde: error: {err}", file=sys.stderr)
        return 1
    except (SimulationError, NewtonError) as err:
        print(f"mvsde: simulation failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
