import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gyralkan.graph import make_graph  # noqa: E402


@pytest.fixture
def path3():
    return make_graph(3, [(0, 1), (1, 2)], [0, 1, 2], n_rois=3)


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)], [0, 0, 1], n_rois=2)


@pytest.fixture
def star():
    return make_graph(4, [(0, 1), (0, 2), (0, 3)], [0, 1, 1, 2], n_rois=3)

