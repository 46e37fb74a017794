"""Command line driver.

    loopsoup --mode moments --size 24 --u 1 --beta 1 --samples 2000
    loopsoup --mode betac --size 12 --u 0.5 --beta-min 0.25 --beta-max 0.5

A JSON config file given with ``--config`` supplies defaults whose keys
mirror the long flag names; flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiment import (
    FORMATS,
    MODES,
    BracketError,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    run,
)


def build_parser():
    d = ExperimentConfig()
    p = argparse.ArgumentParser(prog="loopsoup", description="Random loop model Monte Carlo on the cubic lattice.")
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--mode", choices=MODES, default=d.mode)
    p.add_argument("--size", type=int, default=d.size, help="sites per axis (L)")
    p.add_argument("--bc", choices=("periodic", "free"), default=d.bc)
    p.add_argument("--u", type=float, default=d.u, help="cross fraction in [0, 1]")
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--beta-min", type=float, default=d.beta_min)
    p.add_argument("--beta-max", type=float, default=d.beta_max)
    p.add_argument("--beta-steps", type=int, default=d.beta_steps)
    p.add_argument("--theta", default=d.theta, help="auto, 0.5, 1 or both")
    p.add_argument("--samples", type=int, default=d.samples)
    p.add_argument("--max-samples", type=int, default=d.max_samples)
    p.add_argument("--target-stderr", type=float, default=d.target_stderr)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--out", default=d.out, help="output file (default stdout)")
    p.add_argument("--format", choices=FORMATS, default=d.format)
    p.add_argument("--scatter", action="store_true", default=d.scatter, help="scan: also emit per-sample S2")
    p.add_argument("--tol", type=float, default=d.tol, help="betac: bracket width")
    p.add_argument("--crossing-exponent", type=float, default=d.crossing_exponent)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv=None):
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        with open(pre.config) as fh:
            defaults = json.load(fh)
        parser.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
    args = vars(parser.parse_args(argv))
    args.pop("config")
    verbose = args.pop("verbose")
    return config_from_dict(args), verbose


def main(argv=None):
    try:
        cfg, verbose = parse_config(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
        run(cfg)
    except (ConfigError, BracketError) as exc:
        print(f"loopsoup: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
