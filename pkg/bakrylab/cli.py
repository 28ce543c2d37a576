#!/usr/bin/env python3
"""Command line interface for bakrylab: run, sweep and validate experiment configs."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .config_manager import ExperimentConfig
from .constants import APP_VERSION, EXIT_CONFIG_ERROR, EXIT_OK
from .errors import ConfigError
from .runner import ExperimentRunner, sweep
from .ui import console, print_error, print_header, print_info, print_success
from .utils import parse_values, setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bakrylab",
        description="Numerical checks of gradient estimates for weighted nonlinear heat equations",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    parser.add_argument("--debug", action="store_true", help="verbose logging and tracebacks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve and run the configured checks")
    run.add_argument("config", help="experiment YAML file")

    sweep_parser = sub.add_parser("sweep", help="run a config over the values of one numeric field")
    sweep_parser.add_argument("config", help="experiment YAML file")
    sweep_parser.add_argument("--param", required=True, help="dotted field path, e.g. grid.n")
    sweep_parser.add_argument("--values", required=True, help="comma separated values")
    sweep_parser.add_argument("--workers", type=int, default=None, help="worker processes (default: physical cores)")

    validate = sub.add_parser("validate", help="check a config without running it")
    validate.add_argument("config", help="experiment YAML file")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.load(args.config)
    print_header(f"bakrylab {APP_VERSION}")
    result = ExperimentRunner(config).run()
    return result.exit_code


def cmd_sweep(args: argparse.Namespace) -> int:
    config = ExperimentConfig.load(args.config)
    try:
        values = parse_values(args.values)
    except ValueError as e:
        raise ConfigError(args.param, str(e)) from e
    print_header(f"sweep {args.param}")
    result = sweep(config, args.param, values, workers=args.workers)
    return result.exit_code


def cmd_validate(args: argparse.Namespace) -> int:
    config = ExperimentConfig.load(args.config)
    config.build_problem()
    print_success(f"{args.config} is valid (config {config.content_hash()})")
    print_info(f"Checks: {', '.join(config.checks) or 'none'}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    setup_logging(args.debug)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print_error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except OSError as e:
        print_error(f"I/O error: {e}")
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted[/yellow]")
        return 1
    except Exception as e:
        console.print(f"\n[red]Fatal error: {e}[/red]")
        import traceback
        if args.debug:
            console.print("[dim]" + traceback.format_exc() + "[/dim]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
