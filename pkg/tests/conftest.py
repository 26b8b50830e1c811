import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surplus import Dataset


@pytest.fixture
def tiny_linear():
    """Noiseless y = 2*x1, second column pure noise; exact OLS territory."""
    rng = np.random.default_rng(0)
    X = rng.standard_normal((120, 2))
    return Dataset(("x1", "x2"), X, 2.0 * X[:, 0])


@pytest.fixture
def two_signal():
    """Noiseless y = x1 + x2 with two extra noise columns."""
    rng = np.random.default_rng(1)
    X = rng.standard_normal((150, 4))
    return Dataset(("x1", "x2", "x3", "x4"), X, X[:, 0] + X[:, 1])
