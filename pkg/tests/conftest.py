import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from polyalloc import polytope


@pytest.fixture(scope="session")
def simplex3():
    return polytope.build([], [], 3)


@pytest.fixture(scope="session")
def capped3():
    """3-simplex with the extra rows a_3 <= 0.6 and a_2 <= 0.7."""
    return polytope.build(
        [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]], [0.6, 0.7], 3
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
