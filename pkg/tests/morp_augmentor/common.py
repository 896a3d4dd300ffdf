"""Common fixtures for morp_augmentor conftest files."""
import numpy as np
import pytest

from morp_augmentor.app.dependencies import get_runner_dependencies
from morp_augmentor.app.label_maps import ClassId, LabelMap
from morp_augmentor.app.morp_engine import MorpEngine
from morp_augmentor.app.schemas import MorpConfig

MORP_CONFIG = {
    "selection": {"target_classes": [1, 2], "n_regions": 4, "mode": "largest",
                  "diversity": True},
    "placement": {"max_shift": 8.0, "forbid": [4], "allow": [0], "max_paste_retries": 10,
                  "flat_run_length": 8, "flat_kappa": 1e-3, "max_flat_bulges": 2},
    "apex": {"w": 5, "p": 2, "q": 0.9, "d": 5, "rho": 0.3, "d_s": 1, "m": 3},
    "edit": {"alpha": 0.35, "n_rays": 5, "p_exp": 0.5, "s_exp": 1.2, "s_shr": 0.5,
             "r_max_exp": 30, "r_max_shr": 15},
    "cleanup": {"min_px": 4, "fill": 0, "connectivity": 8},
    "large_oil_fraction": 0.05,
}


@pytest.fixture(scope="package")
def morp_config() -> MorpConfig:
    return MorpConfig.model_validate(MORP_CONFIG)


@pytest.fixture(scope="package")
def engine(morp_config) -> MorpEngine:
    return MorpEngine(morp_config)


@pytest.fixture(scope="package")
def dependencies():
    return get_runner_dependencies()


@pytest.fixture
def spill_scene() -> LabelMap:
    data = np.zeros((64, 64), dtype=np.uint8)
    data[10:22, 8:30] = ClassId.OIL
    data[40:50, 36:44] = ClassId.LOOKALIKE
    data[30:34, 50:53] = ClassId.SHIP
    data[:, 60:] = ClassId.LAND
    return LabelMap(data)
