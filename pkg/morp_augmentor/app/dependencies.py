"""
Dependency providers for command runners.
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
from typing import Type

from .label_maps import MaskProcessor, OpenCVMask


@dataclass
class RunnerDependencies:
    """
    Data class to hold dependencies for the runners.

    Attributes:
        mask_processor (Type[MaskProcessor]): Codec for reading and saving masks.
    """
    mask_processor: Type[MaskProcessor]


def get_mask_processor() -> Type[OpenCVMask]:
    """
    Provides the mask processor dependency.

    Returns:
        Type[OpenCVMask]: The mask processor class.
    """
    return OpenCVMask


def get_runner_dependencies(
        mask_processor: Type[MaskProcessor] | None = None
) -> RunnerDependencies:
    """
    Provides the dependencies required for the runners.

    Args:
        mask_processor (Type[MaskProcessor] | None): Replacement codec, default OpenCV.

    Returns:
        RunnerDependencies: Runner dependencies.
    """
    return RunnerDependencies(mask_processor=mask_processor or get_mask_processor())
