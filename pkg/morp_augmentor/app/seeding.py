"""
This module provides the master-seed derivation scheme shared by the MORP engine
and the patch pipeline. Every stochastic step draws from a stream derived from
(seed, *keys), so results do not depend on execution order or worker count.
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
import logging

import numpy as np

logger = logging.getLogger(__name__)

# stream tags, keep stable: changing them changes every derived stream
SELECTION_STREAM = 0
PLACEMENT_STREAM = 1
EDIT_STREAM = 2
REGIME_STREAM = 3
PATCH_STREAM = 4
AUGMENT_STREAM = 5


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Creates an independent random generator for (seed, *keys).

    Args:
        seed (int): Master seed of the run.
        *keys (int): Stream path, e.g. mask index, replicate, stage, region ordinal.

    Returns:
        np.random.Generator: Generator seeded by hashing the whole key path.
    """
    if seed < 0 or any(key < 0 for key in keys):
        error_message = f"Seed and stream keys must be non-negative, got {(seed, *keys)}."
        logger.error(error_message)
        raise ValueError(error_message)
    sequence = np.random.SeedSequence([seed, *keys])
    return np.random.default_rng(sequence)
