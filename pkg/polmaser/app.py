"""Application runner."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from polmaser import __version__
from polmaser.cli.presets import describe_presets, preset_payload
from polmaser.cli.simulate import simulate
from polmaser.cli.sweep import SweepAxis, sweep
from polmaser.cli.validation import Level, run_checks
from polmaser.config import AppConfig, load_config
from polmaser.errors import ConfigError, InvariantViolation, SimulationError, ValidationSuiteFailure
from polmaser.models import RunConfig, apply_overrides, load_payload, parse_override

logger = logging.getLogger("polmaser")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: str = "INFO", log_file: Path | None = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="Path to a JSON run configuration.")
    source.add_argument("--preset", help="Name of a built-in configuration (see 'preset list').")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field by dotted key, e.g. atom.xi=0.8 (repeatable).")
    parser.add_argument("--out", type=Path, default=None, help="Output directory.")
    parser.add_argument("--cutoff", type=int, default=None, help="Photon cutoff n_max per mode.")
    parser.add_argument("--variant", choices=("exact", "second-order"), default=None)
    parser.add_argument("--workers", type=int, default=None, help="Worker processes.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polmaser", description="Two-mode micromaser entanglement simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"), default=None)
    parser.add_argument("--log-file", type=Path, default=None, help="Also write the log to this file.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate_parser = commands.add_parser("simulate", help="Run every series of a configuration.")
    _add_run_arguments(simulate_parser)
    simulate_parser.add_argument("--seed", type=int, default=None, help="Monte Carlo master seed.")
    simulate_parser.add_argument("--traj", type=int, default=None, help="Monte Carlo trajectory count.")
    simulate_parser.add_argument("--no-cutoff-check", action="store_true", help="Skip the n_max + 4 re-run.")

    sweep_parser = commands.add_parser("sweep", help="Summaries over a grid of config values.")
    _add_run_arguments(sweep_parser)
    sweep_parser.add_argument("--axis", action="append", default=[], metavar="KEY[+KEY]=V1,V2",
                              help="Sweep axis (at most two).")

    validate_parser = commands.add_parser("validate", help="Run the invariant checks.")
    validate_parser.add_argument("--level", choices=[level.value for level in Level], default=Level.FAST.value)
    validate_parser.add_argument("--workers", type=int, default=None)

    preset_parser = commands.add_parser("preset", help="Built-in configurations.")
    preset_commands = preset_parser.add_subparsers(dest="preset_command", required=True)
    preset_commands.add_parser("list", help="List preset names.")
    return parser


def load_run_config(args: argparse.Namespace, app_config: AppConfig) -> RunConfig:
    if args.preset:
        payload = preset_payload(args.preset)
    else:
        payload = load_payload(args.config)

    overrides = dict(parse_override(item) for item in args.overrides)
    if args.cutoff is not None:
        overrides["cutoff"] = args.cutoff
    if args.variant is not None:
        overrides["variant"] = args.variant
    if getattr(args, "seed", None) is not None:
        overrides["monte_carlo.seed"] = args.seed
    if getattr(args, "traj", None) is not None:
        overrides["monte_carlo.n_traj"] = args.traj
    return RunConfig.from_payload(apply_overrides(payload, overrides), default_cutoff=app_config.default_cutoff)


def resolve_out_dir(args: argparse.Namespace, config: RunConfig, app_config: AppConfig) -> Path:
    if args.out is not None:
        return args.out
    if config.output.directory is not None:
        return config.output.directory
    name = args.preset or Path(args.config).stem
    return app_config.output_dir / name


def _workers(args: argparse.Namespace, app_config: AppConfig) -> int:
    workers = args.workers if args.workers is not None else app_config.max_workers
    if workers < 1:
        raise ConfigError("must be at least 1", field="workers")
    return workers


def _simulate(args: argparse.Namespace, app_config: AppConfig) -> int:
    config = load_run_config(args, app_config)
    report = simulate(
        config,
        resolve_out_dir(args, config, app_config),
        max_workers=_workers(args, app_config),
        chunk_size=app_config.chunk_size,
        check_cutoff=not args.no_cutoff_check,
    )
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _sweep(args: argparse.Namespace, app_config: AppConfig) -> int:
    config = load_run_config(args, app_config)
    axes = [SweepAxis.parse(text) for text in args.axis]
    rows = sweep(config, axes, resolve_out_dir(args, config, app_config), max_workers=_workers(args, app_config))
    return EXIT_OK if all(row["converged"] for row in rows) else EXIT_NOT_CONVERGED


def _validate(args: argparse.Namespace, app_config: AppConfig) -> int:
    results = run_checks(Level(args.level), max_workers=_workers(args, app_config), chunk_size=app_config.chunk_size)
    failed = [result.name for result in results if not result.passed]
    for result in results:
        print(f"{'ok' if result.passed else 'FAILED':<7}{result.name:<20}{result.detail}")
    if failed:
        raise ValidationSuiteFailure(f"{len(failed)} of {len(results)} checks failed", failed=failed)
    return EXIT_OK


def _preset(args: argparse.Namespace, app_config: AppConfig) -> int:
    for line in describe_presets():
        print(line)
    return EXIT_OK


COMMANDS = {
    "simulate": _simulate,
    "sweep": _sweep,
    "validate": _validate,
    "preset": _preset,
}


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are config errors; --help and --version exit cleanly
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    app_config = load_config()
    configure_logging(args.log_level or app_config.log_level, args.log_file)

    try:
        return COMMANDS[args.command](args, app_config)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except ValidationSuiteFailure as exc:
        logger.error("%s: %s", exc, ", ".join(exc.failed))
        return EXIT_INVALID
    except InvariantViolation as exc:
        logger.error("invariant violated: %s", exc)
        return EXIT_INVALID
    except SimulationError as exc:
        logger.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(run())
