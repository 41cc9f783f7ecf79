"""Command-line interface for the lifelong editing pipeline."""

# Load environment variables from .env file FIRST, before any other imports
from pathlib import Path
from dotenv import load_dotenv

env_path = Path(__file__).parent.parent / ".env"
if env_path.exists():
    load_dotenv(env_path, override=True)

import argparse
import json
import logging
import os
import sys

import yaml

from typing import Any, Callable, Dict, List, Optional

from src.application.experiment_use_case import ExperimentUseCase, parse_stream_configs
from src.application.pipeline_use_case import CommandResult, PipelineUseCase
from src.domain.config import RunConfig
from src.domain.errors import ConfigurationError, TrainingFailureError
from src.infrastructure.config_loader import KeyValueConfigParser, YamlConfigLoader, load_run_config
from src.infrastructure.storage.binary.checkpoints import CheckpointStore
from src.infrastructure.storage.jsonl.record_store import JsonLinesRecordStore
from src.infrastructure.storage.tables.table_writer import TableWriter
from src.infrastructure.versioning.manifest_manager import ManifestManager

PRESETS_DIR = Path(__file__).parent.parent / "config" / "presets"
LOG_LEVEL_ENV = "RLEDIT_LOG_LEVEL"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_FILE = 2
EXIT_CONFIG = 3
EXIT_TRAINING = 4
EXIT_INTERRUPTED = 130

# Where --out lands for each command and the file name appended for file targets.
_OUT_TARGETS = {
    "gen-data": ("paths.data_dir", None),
    "pretrain": ("paths.model_path", "model.rle"),
    "train": ("paths.hypernet_path", "hypernet.rlh"),
    "edit": ("paths.edited_path", "edited.rle"),
    "eval": ("paths.out_dir", None),
    "ablate": ("paths.out_dir", None),
    "sweep": ("paths.out_dir", None),
}


def _build_pipeline() -> PipelineUseCase:
    """Wire the pipeline use case to the file-backed stores."""
    return PipelineUseCase(
        record_store=JsonLinesRecordStore(),
        checkpoints=CheckpointStore(),
        tables=TableWriter(),
        manifests=ManifestManager(),
    )


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Collect the explicit flag values as dotted-key overrides.

    Args:
        args: Parsed command-line arguments.

    Returns:
        Overrides applied on top of the preset and the config file.

    Raises:
        ConfigurationError: If a ``--set`` entry is not ``key=value``.
    """
    overrides: Dict[str, Any] = {}
    if args.set:
        overrides.update(
            KeyValueConfigParser().parse_text("\n".join(args.set), source="--set")
        )
    overrides["trainer.seed"] = args.seed
    if args.stream_len is not None:
        overrides["hyper.trajectory_len"] = args.stream_len
    if args.batch_size is not None:
        overrides["hyper.batch_size"] = args.batch_size
    if args.ablation is not None:
        overrides["trainer.ablation"] = args.ablation
    if args.out is not None:
        key, filename = _OUT_TARGETS[args.command]
        overrides[key] = str(Path(args.out) / filename) if filename else args.out
    return overrides


def _get_config(args: argparse.Namespace) -> RunConfig:
    """Load the run configuration: preset, then --config file, then flags.

    Args:
        args: Parsed command-line arguments.

    Returns:
        Validated run configuration.
    """
    return load_run_config(
        YamlConfigLoader(str(PRESETS_DIR)),
        preset=args.preset,
        config_path=args.config,
        overrides=_flag_overrides(args),
    )


def _run_command(args: argparse.Namespace, config: RunConfig) -> CommandResult:
    pipeline = _build_pipeline()
    commands: Dict[str, Callable[[], CommandResult]] = {
        "gen-data": lambda: pipeline.gen_data(config),
        "pretrain": lambda: pipeline.pretrain(config),
        "train": lambda: pipeline.train(config, resume_path=args.resume),
        "edit": lambda: pipeline.edit(config),
        "eval": lambda: pipeline.evaluate(config, unedited=args.unedited),
        "ablate": lambda: ExperimentUseCase(pipeline, workers=args.workers).ablate(
            config, with_baselines=args.with_baselines
        ),
        "sweep": lambda: ExperimentUseCase(pipeline).sweep(
            config, parse_stream_configs(args.configs)
        ),
    }
    return commands[args.command]()


def _execute(args: argparse.Namespace) -> int:
    """Run one command without error handling.

    Args:
        args: Parsed command-line arguments.

    Returns:
        Exit code (0 for success).

    Raises:
        FileNotFoundError: If a referenced file is missing.
        yaml.YAMLError: If a preset cannot be parsed.
        ConfigurationError: If the configuration is invalid.
        TrainingFailureError: If training or editing diverges.
        ValueError: For malformed records or checkpoints.
        OSError: If I/O operations fail.
    """
    config = _get_config(args)
    logging.getLogger(__name__).info(
        "Running '%s' with preset '%s' and seed %d", args.command, config.preset.value, config.seed
    )
    result = _run_command(args, config)
    print(json.dumps(result.to_dict(), sort_keys=True, default=str))
    return EXIT_OK


def _handle_error(error: BaseException) -> int:
    """Handle errors and return the documented exit code.

    Args:
        error: Exception or BaseException that was raised.

    Returns:
        Exit code: 2 missing file, 3 configuration, 4 training failure,
        130 interrupted, 1 otherwise.
    """
    if isinstance(error, FileNotFoundError):
        missing = error.filename or error
        print(f"✗ File not found: {missing}", file=sys.stderr)
        return EXIT_MISSING_FILE
    if isinstance(error, ConfigurationError):
        print(f"✗ Configuration error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(error, yaml.YAMLError):
        print(f"✗ Invalid YAML preset: {error}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(error, TrainingFailureError):
        print(f"✗ Training failure: {error}", file=sys.stderr)
        return EXIT_TRAINING
    if isinstance(error, ValueError):
        print(f"✗ Invalid input: {error}", file=sys.stderr)
        return EXIT_ERROR
    if isinstance(error, OSError):
        print(f"✗ I/O error: {error}", file=sys.stderr)
        return EXIT_ERROR
    if isinstance(error, KeyboardInterrupt):
        print("\n✗ Operation cancelled by user", file=sys.stderr)
        return EXIT_INTERRUPTED

    # Fallback for unexpected errors
    print(f"✗ Unexpected error: {error}", file=sys.stderr)
    return EXIT_ERROR


def run(args: argparse.Namespace) -> int:
    """Run one command with error handling.

    Args:
        args: Parsed command-line arguments.

    Returns:
        Exit code.
    """
    try:
        return _execute(args)
    except KeyboardInterrupt as error:
        return _handle_error(error)
    except Exception as error:
        return _handle_error(error)


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="Seed for every random choice")
    parser.add_argument("--config", type=str, help="Flat 'key = value' run config file")
    parser.add_argument("--preset", choices=["desk", "paper"], help="Hyperparameter preset")
    parser.add_argument("--out", type=str, help="Output directory of this command")
    parser.add_argument("--stream-len", type=int, help="Edit batches per stream")
    parser.add_argument("--batch-size", type=int, help="Records per edit batch")
    parser.add_argument(
        "--ablation",
        choices=["none", "no_rl", "no_backtracking", "no_regularization"],
        help="Hypernetwork training variant",
    )
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="Any dotted config key, e.g. --set hyper.mu=0.9 (repeatable)",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose logging (DEBUG level)",
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per pipeline stage."""
    parser = argparse.ArgumentParser(
        prog="rledit",
        description="Train hypernetworks for lifelong editing of a small language model",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "exit codes: 0 ok, 1 error, 2 missing file, 3 configuration error, "
            "4 training failure, 130 interrupted"
        ),
    )
    commands = parser.add_subparsers(dest="command", required=True)

    helps = {
        "gen-data": "Generate the synthetic fact corpus",
        "pretrain": "Pretrain the base model W_0",
        "train": "Train the hypernetwork",
        "edit": "Apply a held-out edit stream",
        "eval": "Score an edited model",
        "ablate": "Train and compare every training variant",
        "sweep": "Edit under several stream configurations",
    }
    subparsers: Dict[str, argparse.ArgumentParser] = {}
    for name, help_text in helps.items():
        subparsers[name] = commands.add_parser(name, help=help_text)
        _add_common_arguments(subparsers[name])

    subparsers["train"].add_argument("--resume", type=str, help="Hypernetwork checkpoint to resume")
    subparsers["eval"].add_argument(
        "--unedited", action="store_true", help="Evaluate W_0 itself on the edit stream"
    )
    subparsers["ablate"].add_argument(
        "--workers", type=int, default=1, help="Parallel worker processes (default: 1)"
    )
    subparsers["ablate"].add_argument(
        "--with-baselines",
        action="store_true",
        help="Also score fine-tuning and the zero policy",
    )
    subparsers["sweep"].add_argument(
        "--configs",
        type=str,
        default="10x4,20x4,40x2",
        help="Comma-separated <batches>x<batch_size> list (default: 10x4,20x4,40x2)",
    )
    return parser


def _configure_logging(verbose: bool) -> None:
    level_name = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()
    level = logging.DEBUG if verbose else getattr(logging, level_name, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )
    if verbose:
        logging.info("Verbose logging enabled")


def main(argv: Optional[List[str]] = None):
    """Main entry point for CLI."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    sys.exit(run(args))


if __name__ == "__main__":
    main()
