"""Command line entry point: ``pmgalerkin {solve,benchmark,verify,kl-spectrum} CONFIG``."""
import argparse
import logging
import os
import sys
from dataclasses import replace

from ._accel import set_threads
from .config import load_config
from .errors import ConfigError, PMGalerkinError
from . import experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pmgalerkin",
        description="Spectral Galerkin solves of parameterized matrix equations.",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker thread cap (default: all cores)")
    parser.add_argument("--output", default=None, help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=None, help="seed override for problem and preconditioner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve with the configured preconditioner"),
        ("benchmark", "solve with every preconditioner kind and tabulate"),
        ("verify", "run the dense oracle checks on a small instance"),
        ("kl-spectrum", "write the KL spectrum of the diffusion coefficient"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="INI experiment file")
    return parser


def _apply_overrides(cfg, args):
    if args.output is not None:
        cfg = replace(cfg, output_dir=args.output)
    if args.seed is not None:
        cfg = replace(cfg, problem=replace(cfg.problem, seed=args.seed), precond_seed=args.seed)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = args.threads or os.cpu_count() or 1
    set_threads(threads)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "solve":
            return experiment.run_solve(cfg, threads=threads)
        if args.command == "benchmark":
            return experiment.run_benchmark(cfg, threads=threads)[0]
        if args.command == "verify":
            return experiment.run_verify(cfg, threads=threads)
        return experiment.run_kl_spectrum(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return experiment.EXIT_ERROR
    except (PMGalerkinError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return experiment.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
