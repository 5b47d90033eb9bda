"""Command implementations for elephantlab CLI.

This module provides the implementations for the elephantlab CLI commands.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from ..common.config import config
from ..common.errors import ElephantLabError, UsageError
from ..common.gridspec import parse_grid
from ..common.logging import logger
from ..diagnostics.export import write_table
from ..nn.activations import activation_table, reference_functions

CURVE_RANGE = (-5.0, 5.0)
CURVE_POINTS = 1001


def handle_run(args: argparse.Namespace) -> int:
    """Handle the run command.

    Args:
        args: Command line arguments

    Returns:
        Exit code (0 when every seed completed, 1 when one aborted or failed, 2 on unexpected errors)
    """
    from ..runner.experiment import exit_code, run_experiment

    try:
        logger.info(f"Running experiment: {args.config_path}")
        reports = run_experiment(args.config_path, seeds=args.seeds, resume=args.resume,
                                 show_progress=args.progress)
        for report in reports:
            status = f"aborted ({report.abort_reason})" if report.aborted else f"{report.primary_metric}"
            print(f"{report.config_hash} seed {report.seed}: {status}")
        return exit_code(reports)

    except ElephantLabError as e:
        logger.error(f"Run error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Unexpected error during run")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_sweep(args: argparse.Namespace) -> int:
    """Handle the sweep command.

    Args:
        args: Command line arguments

    Returns:
        Exit code (0 for success, non-zero for failure)
    """
    from ..runner.experiment_config import load_experiment_config
    from ..runner.sweep import reference_grid, sweep

    try:
        base = load_experiment_config(args.config_path)
        grid = reference_grid(base) if args.reference else {}
        # explicit axes replace reference axes of the same key
        grid.update(parse_grid(args.grid or []))
        if not grid:
            raise UsageError("sweep needs at least one --grid axis or --reference")
        result = sweep(base, grid, resume=args.resume, workers=args.workers)
        print(f"Summary written to {result.directory / 'summary.csv'}")
        if not result.best.empty:
            print(result.best.to_string(index=False))
        return 1 if result.aborted else 0

    except ElephantLabError as e:
        logger.error(f"Sweep error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Unexpected error during sweep")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_diag(args: argparse.Namespace) -> int:
    """Handle the diag command: run the diagnostics harness on every seed."""
    from ..runner.experiment import exit_code, run_experiment
    from ..runner.experiment_config import load_experiment_config

    try:
        experiment = load_experiment_config(args.config_path)
        if experiment.harness != "diagnostics":
            experiment = experiment.with_overrides({"harness": "diagnostics"})
        reports = run_experiment(experiment, checkpoint=args.checkpoint)
        for report in reports:
            for name, value in sorted(report.metrics.items()):
                print(f"seed {report.seed}: {name} = {value}")
        return exit_code(reports)

    except ElephantLabError as e:
        logger.error(f"Diagnostics error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Unexpected error during diagnostics")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_data_fetch_mnist(args: argparse.Namespace) -> int:
    """Handle the data fetch-mnist command."""
    from ..experiments.mnist import fetch_mnist

    try:
        paths = fetch_mnist(args.directory, verify_only=args.verify_only)
        for key, path in paths.items():
            print(f"{key}: {path}")
        return 0

    except ElephantLabError as e:
        logger.error(f"Data error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Unexpected error during download")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_data(args: argparse.Namespace) -> int:
    """Handle the data command."""
    if args.data_command == "fetch-mnist":
        return handle_data_fetch_mnist(args)
    print(f"Error: Unknown data command: {args.data_command}", file=sys.stderr)
    return 1


def activation_curves(points: int = CURVE_POINTS) -> pd.DataFrame:
    """Value and derivative of every reference activation on an even grid."""
    x = np.linspace(*CURVE_RANGE, points)
    columns: Dict[str, Any] = {"x": x}
    for name, (f, df) in reference_functions().items():
        columns[name] = f(x)
        columns[f"d_{name}"] = df(x)
    return pd.DataFrame(columns)


def handle_activations(args: argparse.Namespace) -> int:
    """Handle the activations command.

    Writes ``sparsity.csv`` (function and gradient sparsity per activation)
    and ``curves.csv`` (values and derivatives on ``[-5, 5]``).
    """
    try:
        out = Path(args.out)
        rows = activation_table(eps=args.eps, C=args.C)
        table = pd.DataFrame([{"activation": r.name, "function_sparsity": r.function_sparsity,
                               "gradient_sparsity": r.gradient_sparsity} for r in rows])
        write_table(out / "sparsity.csv", table)
        write_table(out / "curves.csv", activation_curves())
        print(table.to_string(index=False))
        print(f"Written to {out}")
        return 0

    except ElephantLabError as e:
        logger.error(f"Activation table error: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("Unexpected error while writing activation tables")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_config_list(args: argparse.Namespace) -> int:
    """Handle the config list command.

    Args:
        args: Command line arguments

    Returns:
        Exit code (0 for success, non-zero for failure)
    """
    try:
        flat_config = _flatten_config(config.as_dict())

        print("Current configuration:")
        print("----------------------")
        for key in sorted(flat_config.keys()):
            print(f"{key} = {flat_config[key]}")

        if getattr(args, "source", False):
            print()
            print("Configuration sources:")
            for label, path in (("project", config._project_config_path), ("user", config._user_config_path)):
                state = "loaded" if path.exists() else "not found"
                print(f"{label}: {path} ({state})")
        return 0

    except Exception as e:
        logger.exception("Unexpected error during config listing")
        print(f"Unexpected error: {e}", file=sys.stderr)
        return 2


def handle_config(args: argparse.Namespace) -> int:
    """Handle the config command."""
    if args.config_command == "list":
        return handle_config_list(args)
    print(f"Error: Unknown config command: {args.config_command}", file=sys.stderr)
    return 1


def _flatten_config(config_dict: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Flatten a nested dictionary into dotted keys."""
    result = {}
    for key, value in config_dict.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            result.update(_flatten_config(value, dotted))
        else:
            result[dotted] = value
    return result


def main(argv=None) -> int:
    """Main entry point for the elephantlab CLI.

    Returns:
        Exit code (0 for success, non-zero for failure)
    """
    from .parser import parse_args

    args = parse_args(argv)

    handlers = {
        "run": handle_run,
        "sweep": handle_sweep,
        "diag": handle_diag,
        "data": handle_data,
        "activations": handle_activations,
        "config": handle_config,
    }
    handler = handlers.get(args.command)
    if handler is None:
        print(f"Error: Unknown command: {args.command}", file=sys.stderr)
        return 1
    return handler(args)
