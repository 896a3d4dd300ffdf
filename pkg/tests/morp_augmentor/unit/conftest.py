import pytest

from tests.common import disk_mask, files_dir, manifest_path
from tests.morp_augmentor.common import dependencies, engine, morp_config, spill_scene
