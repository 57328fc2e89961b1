import os

import numpy as np
import pytest

from kinoplan.config_loader import reset_config
from planning.costmap.core import LETHAL, Costmap
from planning.geometry.core import Pose2D, VehicleModel


def _grid(l, resolution=0.1, obstacles=(), origin=(0.0, 0.0), map_id="test"):
    cells = np.zeros((l, l), dtype=np.uint8)
    for ix, iy in obstacles:
        cells[iy, ix] = LETHAL
    return Costmap(cells=cells, resolution=resolution, origin=Pose2D.of(origin[0], origin[1], 0.0), map_id=map_id)


@pytest.fixture
def make_costmap():
    """Factory: make_costmap(l, resolution=0.1, obstacles=[(ix, iy), ...])."""
    return _grid


@pytest.fixture
def model():
    return VehicleModel()


@pytest.fixture(autouse=True)
def _fresh_config(monkeypatch):
    for key in list(os.environ):
        if key.startswith("KINOPLAN_"):
            monkeypatch.delenv(key)
    reset_config()
    yield
    reset_config()
