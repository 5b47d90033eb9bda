"""Command line argument parser for elephantlab.

This module provides the argument parser for the elephantlab command line interface.
"""

import argparse
import sys
from typing import List, Optional

from ..common.logging import configure_logging


def create_parser() -> argparse.ArgumentParser:
    """Create the main argument parser for elephantlab."""
    parser = argparse.ArgumentParser(
        prog="elephantlab",
        description="Elephant activation laboratory - run streaming, continual and RL experiments",
    )

    # Set up logging/verbosity arguments globally
    parser.add_argument(
        "-V", "--verbose",
        action="store_const",
        dest="logging",
        const="DEBUG",
        help="Enable verbose output (DEBUG level logging)"
    )
    parser.add_argument(
        "-VV",
        action="store_const",
        dest="logging",
        const="NOTSET",
        help="Enable very verbose output (NOTSET level logging)"
    )
    parser.add_argument(
        "--logging", "--verbosity",
        choices=["INFO", "DEBUG", "NOTSET", "WARNING"],
        help="Set logging level"
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    run_parser = subparsers.add_parser("run", help="Run every seed of an experiment config")
    _setup_run_parser(run_parser)

    sweep_parser = subparsers.add_parser("sweep", help="Run an experiment over a parameter grid")
    _setup_sweep_parser(sweep_parser)

    diag_parser = subparsers.add_parser("diag", help="Kernel and sparsity diagnostics on a network")
    _setup_diag_parser(diag_parser)

    data_parser = subparsers.add_parser("data", help="Manage datasets")
    _setup_data_parser(data_parser)

    activations_parser = subparsers.add_parser("activations", help="Write activation curves and the sparsity table")
    _setup_activations_parser(activations_parser)

    config_parser = subparsers.add_parser("config", help="Manage elephantlab configuration")
    _setup_config_parser(config_parser)

    return parser


def _seed_list(value: str) -> List[int]:
    try:
        return [int(token) for token in value.split(",") if token.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Seeds must be comma-separated integers, got '{value}'")


def _setup_run_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the run command parser."""
    parser.add_argument(
        "config_path",
        help="Path to the experiment config (YAML or JSON)"
    )
    parser.add_argument(
        "--resume",
        action="store_true",
        help="Skip seeds that already have a report"
    )
    parser.add_argument(
        "--seeds",
        metavar="LIST",
        type=_seed_list,
        help="Seeds to run (comma-separated, default: seeds from the config)"
    )
    parser.add_argument(
        "--progress",
        action="store_true",
        default=None,
        help="Show progress bars"
    )


def _setup_sweep_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the sweep command parser."""
    parser.add_argument(
        "config_path",
        help="Path to the base experiment config"
    )
    parser.add_argument(
        "--grid", "-g",
        metavar="KEY=VALUES",
        action="append",
        help="Grid axis (format: optimizer.learning_rate=1e-3,1e-4 or activation.d=2:8:4); repeatable"
    )
    parser.add_argument(
        "--reference",
        action="store_true",
        help="Start from the reference grid of the harness; --grid axes replace matching keys"
    )
    parser.add_argument(
        "--resume",
        action="store_true",
        help="Skip runs that already have a report"
    )
    parser.add_argument(
        "--workers", "-j",
        metavar="COUNT",
        type=int,
        help="Number of worker processes (default: runner.workers)"
    )


def _setup_diag_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the diag command parser."""
    parser.add_argument(
        "config_path",
        help="Path to an experiment config with a diagnostics section"
    )
    parser.add_argument(
        "--checkpoint", "-c",
        metavar="PATH",
        help="Network checkpoint to inspect (default: diagnostics.checkpoint or a fresh network)"
    )


def _setup_data_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the data command parser."""
    subparsers = parser.add_subparsers(dest="data_command", help="Data operation")

    fetch_parser = subparsers.add_parser("fetch-mnist", help="Download and verify the MNIST files")
    fetch_parser.add_argument(
        "directory",
        nargs="?",
        help="Target directory (default: data.mnist_dir)"
    )
    fetch_parser.add_argument(
        "--verify-only",
        action="store_true",
        help="Only check the checksums, do not download"
    )


def _setup_activations_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the activations command parser."""
    parser.add_argument(
        "--out", "-o",
        metavar="DIR",
        default="activations",
        help="Output directory (default: activations)"
    )
    parser.add_argument(
        "--eps",
        type=float,
        default=1e-3,
        help="Sparsity threshold (default: 1e-3)"
    )
    parser.add_argument(
        "--C",
        dest="C",
        type=float,
        default=1e4,
        help="Half-width of the sparsity interval (default: 1e4)"
    )


def _setup_config_parser(parser: argparse.ArgumentParser) -> None:
    """Set up the config command parser with all options."""
    subparsers = parser.add_subparsers(dest="config_command", help="Config operation")

    list_parser = subparsers.add_parser("list", help="List configuration values")
    list_parser.add_argument(
        "--source",
        action="store_true",
        help="Show configuration sources"
    )


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments.

    Args:
        args: Command line arguments to parse (defaults to sys.argv[1:])

    Returns:
        Parsed arguments namespace
    """
    parser = create_parser()
    parsed_args = parser.parse_args(args)

    if parsed_args.logging:
        configure_logging(level=parsed_args.logging)

    if not parsed_args.command:
        parser.print_help()
        sys.exit(1)

    return parsed_args
