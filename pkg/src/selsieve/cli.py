"""Command-line entry point: ``selsieve simulate|estimate|mc|diagnose|lee-bounds``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import commands
from .data import EstimationRequest, read_config, request_from_file
from .dgp import BUILTIN_NAMES, DgpSpec
from .errors import ConfigError, DataError, NumericalError, SelsieveError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_request_args(p):
    p.add_argument("data", nargs="?", help="input CSV (overrides 'data' in --config)")
    p.add_argument("--config", help="TOML file describing the estimation request")
    p.add_argument("--outcome", help="outcome column")
    p.add_argument("--selection", help="0/1 selection column")
    p.add_argument("--covariates", type=_csv_list, help="comma-separated covariate columns")
    p.add_argument("--continuous", type=_csv_list,
                   help="comma-separated continuous covariates (sieve terms)")
    p.add_argument("--no-interact", action="store_true",
                   help="do not interact dummies with the spline terms")
    p.add_argument("--knots-first", type=int, help="interior knots, first stage (default 5)")
    p.add_argument("--knots-second", type=int, help="interior knots, second stage (default 7)")
    p.add_argument("--alpha", type=float, help="test level for the linearity diagnostic")
    p.add_argument("--format", choices=("json", "csv", "table"), help="output format")
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selsieve",
                     description="Semiparametric sample-selection estimation without "
                                 "an exclusion restriction.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a sample from a simulation design")
    p.add_argument("design", nargs="?", help=f"builtin design ({', '.join(BUILTIN_NAMES)})")
    p.add_argument("--config", help="TOML file holding a custom design")
    p.add_argument("--n", type=int, default=5000, help="sample size (default 5000)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--latent", action="store_true", help="also write p0 and Y_star")

    p = sub.add_parser("estimate", help="two-step sieve estimation on a CSV file")
    _add_request_args(p)
    p.add_argument("--robust", action="store_true",
                   help="show heteroskedasticity-robust standard errors in the table")

    p = sub.add_parser("diagnose", help="likelihood-ratio test of a linear selection index")
    _add_request_args(p)

    p = sub.add_parser("mc", help="run a Monte Carlo study from a TOML config")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")

    p = sub.add_parser("lee-bounds", help="Lee trimming bounds for a binary treatment")
    p.add_argument("data", help="input CSV")
    p.add_argument("--outcome", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--group-by", help="compute bounds separately for each value of this column")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.add_argument("--out")
    return parser


def _request(args) -> EstimationRequest:
    overrides = {"data": args.data, "outcome": args.outcome, "selection": args.selection,
                 "covariates": args.covariates, "continuous": args.continuous,
                 "knots_first": args.knots_first, "knots_second": args.knots_second,
                 "alpha": args.alpha, "format": args.format}
    if getattr(args, "robust", False):
        overrides["robust"] = True
    if args.no_interact:
        overrides["interact_dummies"] = False
    if args.config:
        return request_from_file(args.config, **overrides)
    missing = [k for k in ("data", "outcome", "selection", "covariates") if overrides[k] is None]
    if missing:
        raise ConfigError(f"missing {', '.join('--' + m if m != 'data' else 'data path' for m in missing)} "
                          "(or give --config)")
    covs = overrides["covariates"]
    return EstimationRequest(
        args.data, args.outcome, args.selection, covs,
        args.continuous if args.continuous is not None else covs,
        not args.no_interact,
        5 if args.knots_first is None else args.knots_first,
        7 if args.knots_second is None else args.knots_second,
        bool(getattr(args, "robust", False)), args.format or "json",
        0.05 if args.alpha is None else args.alpha)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _design_from_file(path) -> DgpSpec:
    cfg, _ = read_config(path)
    try:
        return DgpSpec.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

    if args.command == "simulate":
        if (args.design is None) == (args.config is None):
            raise ConfigError("give either a builtin design name or --config")
        if args.design is not None and args.design not in BUILTIN_NAMES:
            raise ConfigError(f"unknown design {args.design!r}; builtins are {list(BUILTIN_NAMES)}")
        spec = args.design or _design_from_file(args.config)
        commands.cmd_simulate(spec, args.n, args.seed, args.out, include_latent=args.latent)
    elif args.command == "estimate":
        req = _request(args)
        _emit(commands.render(commands.cmd_estimate(req), req.output_format), args.out)
    elif args.command == "diagnose":
        req = _request(args)
        _emit(commands.render(commands.cmd_diagnose(req), req.output_format), args.out)
    elif args.command == "mc":
        results = commands.cmd_mc(args.config, args.out, seed=args.seed)
        sys.stdout.write(commands.summary_table(results))
    elif args.command == "lee-bounds":
        rep = commands.cmd_lee_bounds(args.data, args.outcome, args.selection,
                                      args.treatment, args.group_by)
        _emit(commands.render(rep, args.format), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        code = run(argv)
    except SystemExit as exc:  # argparse: --help or a usage error
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"selsieve: configuration error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"selsieve: data error: {exc}", file=sys.stderr)
        code = EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"selsieve: numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except SelsieveError as exc:
        print(f"selsieve: {exc}", file=sys.stderr)
        code = exc.exit_code
    return code


if __name__ == "__main__":
    sys.exit(main())
