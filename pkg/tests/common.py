"""Common fixtures for all conftest files."""
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(scope="session")
def files_dir():
    return Path(__file__).parent / "test_files"


@pytest.fixture(scope="session")
def manifest_path(files_dir):
    return files_dir / "scene_manifest.csv"


@pytest.fixture
def disk_mask():
    rows, cols = np.mgrid[-12:13, -12:13]
    return rows ** 2 + cols ** 2 <= 144
