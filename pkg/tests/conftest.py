import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from psol.synthetic import PlantedBoxParams, make_synthetic_fixture


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """A tiny but complete dataset: 3 classes x 24 images, 12x12 grids."""
    root = tmp_path_factory.mktemp("small_fixture")
    return make_synthetic_fixture(
        root,
        seed=7,
        n_classes=3,
        images_per_class=24,
        depth=16,
        grid=12,
        net_input_size=96,
        box_params=PlantedBoxParams(min_cells=4, max_cells=8),
        train_overrides={"epochs": 5, "batch_size": 16, "hidden_width": 32},
    )


@pytest.fixture(scope="session")
def chain_fixture(tmp_path_factory):
    """Working-point geometry (28x28 grid, 448 input) at reduced volume,
    for box-quality assertions."""
    root = tmp_path_factory.mktemp("chain_fixture")
    return make_synthetic_fixture(
        root,
        seed=13,
        n_classes=2,
        images_per_class=40,
        depth=16,
        grid=28,
        net_input_size=448,
        train_overrides={"epochs": 60, "batch_size": 16, "hidden_width": 64},
    )


def random_box(rng, max_coord=50, max_side=40):
    x = int(rng.integers(0, max_coord))
    y = int(rng.integers(0, max_coord))
    w = int(rng.integers(1, max_side + 1))
    h = int(rng.integers(1, max_side + 1))
    return x, y, w, h


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
