"""Command-line interface for mrbasset."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import ExperimentConfig
from .exceptions import ConfigurationError, MRBassetError
from .experiments import (
    RunManifest,
    criterion_ids,
    run_bounds,
    run_envelope,
    run_fig3,
    run_fig4,
    run_relaxation_table,
    run_restart_demo,
    run_simulate,
    verify,
)
from .utils.parallel import resolve_workers, show_progress_default

COMMANDS = ["simulate", "relaxation-table", "envelope", "bounds", "fig3", "fig4", "restart-demo", "verify"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrbasset",
        description="Inertial particle trajectories with Basset memory and their velocity envelopes",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Write the default configuration and edit it
  mrbasset --print-config > experiment.ini

  # Kernel table for the configured kappa values
  mrbasset relaxation-table --out results/kernels

  # Ensemble decay against the envelope, four workers
  mrbasset fig3 --config experiment.ini --out results/fig3 --threads 4

  # Single trajectory with a checkpoint
  mrbasset simulate --x 1.0 --y 0.5 --checkpoint --out results/single

  # Acceptance suite (exit status 1 on any failure)
  mrbasset verify --out results/verify

  # Thread count from the environment
  MRBASSET_THREADS=8 mrbasset fig3
        """,
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="Experiment to run")
    parser.add_argument("--config", "-c", help="INI configuration file (defaults are used when omitted)")
    parser.add_argument("--out", "-o", help="Output directory (default: [output] directory)")
    parser.add_argument("--threads", "-j", type=int, help="Worker count; overrides MRBASSET_THREADS and the config")
    parser.add_argument("--seed", type=int, help="Seed recorded with the run")
    parser.add_argument("--x", type=float, help="simulate: release x (default: first lattice point)")
    parser.add_argument("--y", type=float, help="simulate: release y (default: first lattice point)")
    parser.add_argument("--R", type=float, help="simulate: density ratio (default: first configured R)")
    parser.add_argument("--checkpoint", action="store_true", help="simulate: also write a .npz checkpoint")
    parser.add_argument(
        "--criteria",
        help=f"verify: comma-separated criterion ids to run (all of {','.join(criterion_ids())} by default)",
    )
    parser.add_argument("--print-config", action="store_true", help="Print the effective configuration and exit")
    parser.add_argument("--version", action="store_true", help="Show version information and exit")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose output")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = config.with_section("output", seed=args.seed)
    if args.out:
        config = config.with_section("output", directory=args.out)
    return config


def _report_manifest(manifest: RunManifest) -> int:
    missing = manifest.missing_files()
    if missing:
        print(f"❌ Missing outputs: {', '.join(missing)}", file=sys.stderr)
        return 1
    for failure in manifest.failures:
        print(f"❌ {failure['what']}: {failure['error']}", file=sys.stderr)
    print(f"✅ {manifest}", file=sys.stderr)
    return 0 if manifest.ok else 1


def run_command(command: str, config: ExperimentConfig, args: argparse.Namespace, workers: int) -> int:
    out = Path(config.output.directory)
    progress = show_progress_default()
    if command == "simulate":
        manifest = run_simulate(config, out, args.x, args.y, args.R, args.checkpoint, workers, progress)
    elif command == "relaxation-table":
        manifest = run_relaxation_table(config, out)
    elif command == "envelope":
        manifest = run_envelope(config, out, workers, progress)
    elif command == "bounds":
        manifest = run_bounds(config, out, workers, progress)
    elif command == "fig3":
        manifest = run_fig3(config, out, workers, progress)
    elif command == "fig4":
        manifest = run_fig4(config, out, workers, progress)
    elif command == "restart-demo":
        manifest = run_restart_demo(config, out)
    else:
        only = [c.strip() for c in args.criteria.split(",") if c.strip()] if args.criteria else None
        report = verify(config, out, workers, progress, only=only)
        for criterion in report.criteria:
            marker = {"pass": "✅", "fail": "❌", "inapplicable": "➖"}[criterion.status]
            line = f"{marker} [{criterion.id}] {criterion.description}: {criterion.status}"
            if criterion.detail:
                line += f" ({criterion.detail})"
            print(line, file=sys.stderr)
        counts = report.counts()
        print(
            f"\nSummary: {counts['pass']} passed, {counts['fail']} failed, {counts['inapplicable']} inapplicable",
            file=sys.stderr,
        )
        return 0 if report.passed else 1
    return _report_manifest(manifest)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(f"mrbasset v{__version__}")
        return 0

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args)
    except ConfigurationError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 2

    if args.print_config:
        print(config.to_text(), end="")
        return 0

    if not args.command:
        parser.error("No command specified. Choose one of: " + ", ".join(COMMANDS))

    try:
        workers = resolve_workers(args.threads, config.output.threads)
    except ConfigurationError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 2

    if args.verbose:
        print(
            f"Running {args.command} with {workers} worker(s), config hash {config.config_hash()[:12]}", file=sys.stderr
        )

    try:
        return run_command(args.command, config, args, workers)
    except ConfigurationError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 2
    except MRBassetError as e:
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
