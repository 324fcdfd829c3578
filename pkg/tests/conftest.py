import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles / corpus helpers

from layerlab import PixelVolume


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_gradient():
    """8x8 horizontal red-to-blue blend."""
    xs = np.linspace(0.0, 1.0, 8, dtype=np.float32)
    img = np.zeros((8, 8, 3), np.float32)
    img[:, :, 0] = 1.0 - xs[None, :]
    img[:, :, 2] = xs[None, :]
    return PixelVolume.from_array(img)
