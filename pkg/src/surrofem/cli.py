"""Command-line entry point.

Subcommands: ``preprocess``, ``sample``, ``analyze``, ``run`` (full
pipeline), ``verify-design``, ``oracle``.  Exit codes: 0 success, 2 for
configuration problems, 3 for numeric or missing-artifact failures.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments, fem, mcmc, surrogate
from .oracle import exact_boundary_cos4

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (
    fem.IncompatibleFlux,
    fem.SolverFailure,
    fem.PointOutsideDomain,
    surrogate.EmptyDesign,
    surrogate.ParameterOutsideDomain,
    mcmc.InvalidStart,
    mcmc.ChainTooShort,
    mcmc.DegenerateChain,
    experiments.MissingArtifact,
    FloatingPointError,
)


def _add_common(p: argparse.ArgumentParser, force: bool = True) -> None:
    p.add_argument("--config", required=True, help="YAML config path or builtin experiment name")
    p.add_argument("--seed", type=int, default=None, help="override the sampler seed list with one seed")
    p.add_argument("--output", default=None, help="override the output directory")
    if force:
        p.add_argument("--force", action="store_true", help="recompute artifacts that already exist")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surrofem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("preprocess", help="solve the design and write the surrogate store"))
    _add_common(sub.add_parser("sample", help="run MCMC chains against the stored surrogate"))
    _add_common(sub.add_parser("analyze", help="summarize chains into report files"), force=False)
    _add_common(sub.add_parser("run", help="preprocess + sample + analyze"))

    v = sub.add_parser("verify-design", help="check the design's k-neighbor coverage")
    _add_common(v, force=False)
    v.add_argument("--eps", type=float, default=None, help="coverage target (default: lattice guarantee)")

    o = sub.add_parser("oracle", help="print exact boundary values for the centered inclusion")
    o.add_argument("--rho", type=float, required=True, help="inclusion contrast")
    o.add_argument("--radius", type=float, required=True, help="inclusion radius in (0, 1]")
    o.add_argument("--m", type=int, default=10, help="number of equispaced boundary points")
    o.add_argument("--theta", type=float, action="append", default=None, help="explicit angle(s) instead of --m")
    return parser


def _cmd_oracle(args) -> int:
    thetas = np.asarray(args.theta if args.theta else 2.0 * np.pi * np.arange(args.m) / args.m)
    values = exact_boundary_cos4(args.rho, args.radius, thetas)
    print("theta value")
    for t, v in zip(np.atleast_1d(thetas), np.atleast_1d(values)):
        print(f"{float(t)!r} {float(v)!r}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = experiments.load_config(args.config, seed=args.seed, output_dir=args.output)
    rep = experiments.verify_design(cfg, eps=args.eps)
    print(f"design samples swept : {rep.samples}")
    print(f"max k-th neighbor G  : {rep.max_kth_g!r}")
    print(f"coverage target eps  : {rep.eps_target!r}")
    print(f"passed               : {rep.passed}")
    print(f"residual bound @eps  : {rep.residual_bound_at_target!r}")
    print(f"residual bound @max  : {rep.residual_bound_achieved!r}")
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "verify-design":
            return _cmd_verify(args)

        cfg = experiments.load_config(args.config, seed=args.seed, output_dir=args.output)
        if args.command == "preprocess":
            out = experiments.run_preprocess(cfg, force=args.force)
            print(f"store: {out['store']}")
        elif args.command == "sample":
            out = experiments.run_sampling(cfg, force=args.force)
            for path in out["chains"]:
                print(f"chain: {path}")
        elif args.command == "analyze":
            experiments.run_analysis(cfg)
            print(f"report: {cfg.output_dir / 'analysis' / 'report.txt'}")
        elif args.command == "run":
            experiments.run_full(cfg, force=args.force)
            print(f"report: {cfg.output_dir / 'analysis' / 'report.txt'}")
        return EXIT_OK
    except experiments.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
