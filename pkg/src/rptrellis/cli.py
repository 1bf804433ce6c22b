"""``rptrellis`` command line.

Subcommands read a JSON ``ExperimentConfig`` (``--config``), optionally
layered on a profile (``--profile ci|full``), and write their artifacts
into ``--out`` (default: the config's ``output_dir``).

Exit codes: 0 success, 2 configuration error, 3 resource budget
exceeded, 4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .codec import MemoryBudgetError
from .experiments import (
    ConfigError,
    ExperimentConfig,
    PROFILES,
    run_design,
    run_diagnose,
    run_encode,
    run_performance_curve,
    run_permutation_sweep,
    run_rd,
    run_simulate,
)
from .ratedist import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_CONVERGENCE = 0, 2, 3, 4

_COMMANDS = {
    "rd": ("rate-distortion values (rd.csv)", lambda cfg, a: run_rd(cfg, emit_reproduction=a.reproduction)),
    "design": ("Shannon-optimal reproduction and decoder header", lambda cfg, a: run_design(cfg)),
    "encode": ("Viterbi-encode a source sample for each L and seed", lambda cfg, a: run_encode(cfg)),
    "simulate": ("drive decoders with coin flips; whiteness and marginal checks", lambda cfg, a: run_simulate(cfg)),
    "diagnose": ("encode plus full optimality diagnostics", lambda cfg, a: run_diagnose(cfg)),
    "sweep-perm": ("all 40320 permutations at L=3", lambda cfg, a: run_permutation_sweep(cfg)),
    "curve": ("mean MSE against L", lambda cfg, a: run_performance_curve(cfg)),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rptrellis", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (help_text, _) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--profile", choices=sorted(PROFILES), help="defaults for n, seeds and max_L")
        sp.add_argument("--threads", type=int, default=1,
                        help="accepted for compatibility; kernels and rows run sequentially")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override one config key, e.g. --set n=1000 --set 'lengths=[8,10]'")
        if name == "rd":
            sp.add_argument("--reproduction", action="store_true",
                            help="also write the Shannon-optimal reproduction for each rate")
    return p


def _load_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=JSON, got {item!r}")
        try:
            base[key] = json.loads(val)
        except json.JSONDecodeError:
            base[key] = val
    if args.out:
        base["output_dir"] = args.out
    if args.command == "sweep-perm":
        base.setdefault("lengths", [3])
    return ExperimentConfig.from_dict(base, args.profile)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = _load_config(args)
        _COMMANDS[args.command][1](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (MemoryBudgetError, MemoryError) as err:
        print(f"resource budget exceeded: {err}", file=sys.stderr)
        return EXIT_BUDGET
    except ConvergenceError as err:
        print(f"did not converge: {err} (gap {err.gap:.3g})", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
