import json
import os
import sys

import django
import numpy as np
import pytest


def pytest_configure():
    sys.path.insert(
        0, os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
    )
    os.environ.setdefault(
        "DJANGO_SETTINGS_MODULE", "sogm_decoder_backend.settings"
    )
    django.setup()


LAYERS = ("anomaly", "corner", "obstacle")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_half_grid():
    """20x10 grid, left half p=(0.1, 0.2, 0.3), right half (0.9, 0.8, 0.7)."""
    from sogm_decoder_algo.grid import GridSpec, SemanticGrid

    spec = GridSpec(20, 10, 0.01)
    probabilities = np.empty((3, 10, 20))
    for k, (left, right) in enumerate([(0.1, 0.9), (0.2, 0.8), (0.3, 0.7)]):
        probabilities[k, :, :10] = left
        probabilities[k, :, 10:] = right
    return SemanticGrid.from_probabilities(spec, LAYERS, probabilities)


@pytest.fixture
def quadrant_grid():
    """20x20 single-layer grid of four homogeneous quadrants."""
    from sogm_decoder_algo.grid import GridSpec, SemanticGrid

    spec = GridSpec(20, 20, 0.01)
    log_odds = np.empty((1, 20, 20))
    log_odds[0, :10, :10] = -2.0
    log_odds[0, :10, 10:] = -0.5
    log_odds[0, 10:, :10] = 0.7
    log_odds[0, 10:, 10:] = 2.0
    return SemanticGrid.from_log_odds(spec, ("anomaly",), log_odds)


@pytest.fixture
def class_means():
    from sogm_decoder_algo.scenario import manual_mean_table

    return {k: np.asarray(v) for k, v in manual_mean_table().items()}


@pytest.fixture
def small_config():
    """Experiment config small enough for unit tests."""
    from sogm_decoder_algo.config import config_from_dict

    return config_from_dict(
        {
            "scenario": {
                "n_scenes": 4,
                "seed": 3,
                "extent": 0.4,
                "resolution": 0.01,
                "max_objects": 1,
            },
            "segmentation": {"num_seeds": 24},
            "model": {"bakis_length": 3, "max_iters": 10},
        }
    )


@pytest.fixture
def config_file(tmp_path):
    """Writes a config dict to a JSON file and returns its path."""

    def write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return write
