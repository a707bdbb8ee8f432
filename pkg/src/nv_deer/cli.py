"""
Command-line entry point for nv-deer.

Every subcommand reads a JSON config (``--config``), optionally overrides its seed, and
writes its results plus a manifest into ``--out``. Errors are reported on one line and
mapped to exit codes: 2 config, 3 numeric, 4 input data / I/O.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError, NVDeerError, ValidationError
from .io.config import ExperimentConfig, default_config, load_config
from .io.runner import RunResult, run_analyze, run_fit_decay, run_fit_odmr, run_holeburn, run_mc_bath, run_simulate
from .ui.rich_ui import RichRunUI
from .utils.log_utils import configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = ConfigError.exit_code
EXIT_IO = 4

SIMULATE_COMMANDS = {
    "simulate-odmr": "odmr",
    "simulate-rabi": "rabi",
    "simulate-holeburn": "holeburn",
    "simulate-echo": "echo",
    "simulate-deer3": "deer3",
    "simulate-deer4": "deer4",
}

# commands that run on built-in defaults when no config is given
CONFIG_OPTIONAL = ("fit-odmr", "holeburn-efficiency", "fit-decay", "analyze-concentration")


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--seed", type=_non_negative_int, help="Override the config seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="Output directory (default: out)")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="Worker threads for scans and Monte-Carlo; never changes results (default: 1)")
    common.add_argument("--progress", action="store_true", help="Show progress bars on stderr")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--debug", action="store_true", help="Enable debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = argparse.ArgumentParser(prog="nv-deer", description="NV-center DEER simulation and fitting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, experiment in SIMULATE_COMMANDS.items():
        sub.add_parser(name, parents=[common], help=f"Simulate a {experiment} experiment")

    p = sub.add_parser("fit-odmr", parents=[common], help="Fit a Lorentzian triplet to a spectrum CSV")
    p.add_argument("--data", type=Path, required=True, help="Spectrum CSV")

    p = sub.add_parser("holeburn-efficiency", parents=[common], help="Flipped fraction from hole-burn spectra")
    p.add_argument("--data", type=Path, required=True, help="Spectrum CSV with the pump on")
    p.add_argument("--reference", type=Path, required=True, help="Spectrum CSV without the pump")

    p = sub.add_parser("fit-decay", parents=[common], help="Fit the decay of a DEER trace CSV")
    p.add_argument("--data", type=Path, required=True, help="Trace CSV (with its .meta.json sidecar)")

    p = sub.add_parser("analyze-concentration", parents=[common], help="Spin concentration from a decay rate")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--rate", type=float, help="Decay rate in 1/s")
    source.add_argument("--data", type=Path, help="DEER trace CSV to fit first")
    source.add_argument("--report", type=Path, help="fit_decay.json from a previous fit")
    p.add_argument("--rate-err", type=float, default=0.0, help="Uncertainty of --rate in 1/s")
    p.add_argument("--flip-probability", type=float, help="Override the pump flip probability")

    sub.add_parser("mc-bath", parents=[common], help="Monte-Carlo DEER factor of a sampled spin bath")
    return parser


def _load(args: argparse.Namespace, experiment: Optional[str]) -> ExperimentConfig:
    if args.config is None:
        if args.command in CONFIG_OPTIONAL:
            return default_config("fit", seed=args.seed or 0)
        raise ValidationError([f"{args.command} needs --config"])
    cfg = load_config(args.config, seed_override=args.seed)
    if experiment is not None and cfg.experiment != experiment:
        raise ValidationError([f"{args.command} needs a config with experiment '{experiment}', got '{cfg.experiment}'"])
    return cfg


def run_command(args: argparse.Namespace, ui: RichRunUI) -> RunResult:
    experiment = SIMULATE_COMMANDS.get(args.command, "mc_bath" if args.command == "mc-bath" else None)
    cfg = _load(args, experiment)
    logger.info(f"{args.command}: config hash {cfg.config_hash[:12]}, seed {cfg.seed}")
    if args.command in SIMULATE_COMMANDS:
        return run_simulate(cfg, args.out, threads=args.threads, progress=ui.tracker)
    if args.command == "mc-bath":
        return run_mc_bath(cfg, args.out, threads=args.threads, progress=ui.tracker)
    if args.command == "fit-odmr":
        return run_fit_odmr(cfg, args.data, args.out)
    if args.command == "holeburn-efficiency":
        return run_holeburn(cfg, args.data, args.reference, args.out)
    if args.command == "fit-decay":
        return run_fit_decay(cfg, args.data, args.out)
    return run_analyze(cfg, args.out, rate=args.rate, rate_err=args.rate_err, data_path=args.data,
                       report_path=args.report, flip_probability=args.flip_probability)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return the process exit code."""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.debug else logging.WARNING if args.quiet else logging.INFO
    configure_logging(level)

    try:
        with RichRunUI(enabled=args.progress) as ui:
            result = run_command(args, ui)
            if not args.quiet:
                for title, report in result.reports.items():
                    ui.show_report(title, report)
                ui.show_summary(args.command, result.summary)
    except NVDeerError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=args.debug)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=args.debug)
        return EXIT_IO
    except ValueError as e:
        logger.error(f"{args.command} failed: invalid parameter: {e}", exc_info=args.debug)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
