"""
Main configuration dataclass for the MorpAugmentor command line tool.
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
from dataclasses import dataclass
from pathlib import Path

BASE_DIRECTORY = Path(__file__).resolve().parent


@dataclass
class Config:
    """
    Configuration settings for the command line tool.

    Attributes:
        commands (tuple[str, ...]): Available commands.
        input_directory (str): Default directory with command input.
        output_directory (str): Default directory where command output will be saved.
        jobs (int): Default worker pool width.
        log_format (str): Format of log records.
        log_date_format (str): Format of log timestamps.
        exit_success (int): Exit code of a fully successful run.
        exit_config_error (int): Exit code of schema, missing seed or unknown key errors.
        exit_partial (int): Exit code of a run with skipped edits.
        exit_io_error (int): Exit code of unreadable or unpaired inputs.
    """
    commands: tuple[str, ...] = ("augment", "metrics", "patches", "loss-eval")
    input_directory: str = str(BASE_DIRECTORY / "input_directory")
    output_directory: str = str(BASE_DIRECTORY / "output_directory")
    jobs: int = 1
    log_format: str = "%(asctime)s - %(levelname)s - %(message)s"
    log_date_format: str = "%Y-%m-%d %H:%M:%S"
    exit_success: int = 0
    exit_config_error: int = 1
    exit_partial: int = 2
    exit_io_error: int = 3
