"""
This module provide script for running augmentation, metrics, patch and loss
commands with given arguments in fast and easy way.
LICENSE
=======
Copyright (C) 2024  MorpAugmentor contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""
import argparse
import logging
import sys
from pathlib import Path

from config import Config
from morp_augmentor.app.dependencies import get_runner_dependencies
from morp_augmentor.app.geometry import GeometryError
from morp_augmentor.app.label_maps import LabelMapError
from morp_augmentor.app.morp_engine import BatchGenerator
from morp_augmentor.app.patch_pipeline import PatchPipelineError
from morp_augmentor.app.runners import ConfigError, Runner, RunnerFactory, RunPaths, load_run_config

logging.basicConfig(
    level=logging.INFO,
    format=Config.log_format,
    datefmt=Config.log_date_format,
    handlers=[logging.StreamHandler(sys.stdout)]
)
logger = logging.getLogger(__name__)


def main(argv: list[str] | None = None) -> int:
    """
    Script for running one command end to end.

    Args:
        argv (list[str] | None): Command line arguments, None reads sys.argv.

    Returns:
        int: Process exit code.
    """
    user_input = parse_args(argv)
    try:
        run_config = load_run_config(user_input.config, user_input.seed)
        if user_input.dry_run:
            print(run_config.model_dump_json(indent=2))
            return Config.exit_success
        paths = RunPaths(
            input_directory=Path(user_input.input_dir),
            output_directory=Path(user_input.output_dir),
            truth_directory=_optional_path(user_input, "truth_dir"),
            manifest=_optional_path(user_input, "manifest"),
            synth_input_directory=_optional_path(user_input, "synth_dir"),
            synth_truth_directory=_optional_path(user_input, "synth_truth_dir")
        )
        runner = RunnerFactory.create_runner(user_input.command, run_config, paths,
                                             get_runner_dependencies(), user_input.jobs)
        exit_code = runner.process()
    except ConfigError:
        return Config.exit_config_error
    except BatchGenerator.DuplicateOutputError:
        return Config.exit_partial
    except (OSError, LabelMapError, PatchPipelineError,
            Runner.EmptyInputDirectoryError, Runner.UnpairedFileError) as error:
        logger.error("Command '%s' failed: %s", user_input.command, error)
        return Config.exit_io_error
    except (GeometryError, ValueError) as error:
        logger.error("Command '%s' stopped: %s", user_input.command, error)
        return Config.exit_config_error
    logger.info("Process stopped.")
    return exit_code


def _optional_path(user_input: argparse.Namespace, name: str) -> Path | None:
    value = getattr(user_input, name, None)
    return Path(value) if value else None


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """
    Parses command line arguments from user.

    Args:
        argv (list[str] | None): Command line arguments, None reads sys.argv.

    Returns:
        argparse.Namespace: Arguments from user.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=Path, default=None,
                        help="Path to the TOML run configuration.")
    common.add_argument("--seed", type=int, default=None,
                        help="Master seed, overrides the config file value.")
    common.add_argument("--jobs", "-j", type=int, default=Config.jobs,
                        help="Worker pool width. Results don't depend on it.")
    common.add_argument("--dry-run", action="store_true",
                        help="Print the resolved config and touch no files.")
    common.add_argument("--input_dir", "-i", default=Config.input_directory,
                        help="Full path to the command input directory.")
    common.add_argument("--output_dir", "-o", default=Config.output_directory,
                        help="Full path to the command output directory.")

    parser = argparse.ArgumentParser(
        description="Label-space augmentation, metrics and patch preparation for "
                    "SAR oil spill segmentation masks."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("augment", parents=[common],
                        help="Augment a directory of masks.")
    metrics = commands.add_parser("metrics", parents=[common],
                                  help="Compare predicted masks (input) with ground truth.")
    metrics.add_argument("--truth_dir", "-t", required=True,
                         help="Directory with ground truth masks of the same names.")
    patches = commands.add_parser("patches", parents=[common],
                                  help="Cut training patches from scenes (input).")
    patches.add_argument("--manifest", "-m", required=True,
                         help="Scene manifest with the split column.")
    loss_eval = commands.add_parser("loss-eval", parents=[common],
                                    help="Evaluate the composite loss on probability maps (input).")
    loss_eval.add_argument("--truth_dir", "-t", required=True,
                           help="Directory with ground truth masks of the same stems.")
    loss_eval.add_argument("--synth_dir", default=None,
                           help="Directory with probability maps of synthetic samples.")
    loss_eval.add_argument("--synth_truth_dir", default=None,
                           help="Directory with ground truth of synthetic samples.")
    args = parser.parse_args(argv)
    return args


if __name__ == "__main__":
    sys.exit(main())
