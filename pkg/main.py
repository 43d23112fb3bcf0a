#!/usr/bin/env python3
"""
main.py
~~~~~~~
SAGRAPE entrypoint: pulse optimization and dephasing simulations.

Usage:
    python main.py optimize   -c configs/cnot_grape.json
    python main.py benchmark  -c configs/benchmark_lls.json --jobs 4
    python main.py noisespec  -c configs/noisespec_ou.json --out runs/noise
    python main.py robustness -c configs/robustness_lls.json
    python main.py export     -c configs/tcp_lls_rsagrape.json
    python main.py validate   -c configs/btfbz_selective_pi.json

Exit status: 0 success, 2 config / shape-file error, 3 numerical or other
engine error, 130 interrupted.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

# Add project root to sys.path
PROJECT_ROOT = Path(__file__).resolve().parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from core.errors import ConfigError, NumericalError, SagrapeError, ShapeFormatError
from utils.logger import setup_logging

logger = logging.getLogger("sagrape.main")

EXIT_CONFIG = 2
EXIT_ENGINE = 3
EXIT_INTERRUPTED = 130

SUBCOMMANDS = {
    "optimize": "Optimize a pulse (GRAPE / SAGRAPE / RSAGRAPE)",
    "benchmark": "Compare optimizer convergence from shared random starts",
    "noisespec": "CPMG noise spectroscopy under injected dephasing",
    "robustness": "Singlet order of pulses across dephasing strengths",
    "export": "Write the configured initial pulse as a shape file",
    "validate": "Parse and check a config without running",
}


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got: {value}")
    return seed


def _jobs(value: str) -> int:
    jobs = int(value)
    if jobs < 1:
        raise argparse.ArgumentTypeError(f"jobs must be ≥ 1, got: {value}")
    return jobs


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments."""
    parser = argparse.ArgumentParser(
        prog="sagrape",
        description="Annealing-assisted gradient pulse engineering for NMR spin systems",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_text in SUBCOMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, description=help_text)
        cmd.add_argument("-c", "--config", type=str, required=True, help="Run config (JSON)")
        cmd.add_argument("--out", type=str, default=None, help="Output directory (overrides output_dir)")
        cmd.add_argument("--seed", type=_seed, default=None, help="Random seed (overrides optimizer.seed)")
        cmd.add_argument("--jobs", type=_jobs, default=1, help="Worker threads for ensemble/trial fan-out")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit status."""
    from core.models import RunConfig
    from interface.commands import COMMANDS, CommandOptions
    from utils.helpers import console, show_banner

    args = parse_args(argv)
    if console.is_terminal:
        show_banner()

    try:
        config = RunConfig.load(args.config)
    except ConfigError as exc:
        setup_logging(level="INFO")
        logger.error("%s", exc)
        return EXIT_CONFIG

    setup_logging(level=config.log_level)
    options = CommandOptions(
        out=Path(args.out) if args.out else None,
        seed=args.seed,
        jobs=args.jobs,
    )

    try:
        return COMMANDS[args.command](config, options)
    except (ConfigError, ShapeFormatError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_ENGINE
    except SagrapeError as exc:
        logger.error("%s", exc)
        return EXIT_ENGINE
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
