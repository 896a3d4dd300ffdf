from unittest.mock import MagicMock

from morp_augmentor.app.dependencies import (RunnerDependencies, get_mask_processor,
                                             get_runner_dependencies)
from morp_augmentor.app.label_maps import OpenCVMask


def test_get_mask_processor():
    assert get_mask_processor() is OpenCVMask


def test_get_runner_dependencies():
    dependencies = get_runner_dependencies()

    assert isinstance(dependencies, RunnerDependencies)
    assert dependencies.mask_processor is OpenCVMask


def test_get_runner_dependencies_with_replacement():
    mask_processor = MagicMock()

    assert get_runner_dependencies(mask_processor).mask_processor is mask_processor
