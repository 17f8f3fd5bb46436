"""
Orderings on the default 20-scene synthetic benchmark.

Marked ``benchmark`` and deselected by default; run with
``pytest -m benchmark``.
"""

import dataclasses

import pandas as pd
import pytest
from django.test import SimpleTestCase

from sogm_decoder_algo.config import EvaluationConfig, ExperimentConfig
from sogm_decoder_algo.pipeline import (
    generate_scenes,
    run_sweep,
    summary_rows,
)

REPEATS = 3
BAKIS_LENGTHS = (3, 5, 7, 8, 9, 10, 15, 20, 30)


def sweep_table(config, scenes, **evaluation):
    config = dataclasses.replace(
        config,
        evaluation=EvaluationConfig(repeats=REPEATS, **evaluation),
    )
    return pd.DataFrame(summary_rows(run_sweep(config, scenes=scenes)))


@pytest.mark.benchmark
class BenchmarkTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.config = ExperimentConfig()
        self.scenes = generate_scenes(self.config)

    def test_classifier_ordering(self):
        table = sweep_table(
            self.config,
            self.scenes,
            classifiers=("hmm", "kmeans", "random", "majority"),
        )
        means = table.groupby("classifier")["macro_f1"].mean()
        self.assertGreater(means["hmm"], means["kmeans"])
        self.assertGreater(means["kmeans"], means["random"])
        self.assertGreaterEqual(means["random"], means["majority"])
        self.assertGreaterEqual(means["hmm"] - means["kmeans"], 0.03)
        self.assertGreaterEqual(means["hmm"], 0.60)

    def test_representation_ordering(self):
        table = sweep_table(
            self.config,
            self.scenes,
            representations=("cellwise", "pointcloud", "clustered"),
        )
        means = table.groupby("representation")["macro_f1"].mean()
        self.assertGreater(means["clustered"], means["pointcloud"])
        self.assertGreater(means["pointcloud"], means["cellwise"])
        self.assertGreaterEqual(means["clustered"] - means["cellwise"], 0.05)

    def test_longer_bakis_chains_score_higher(self):
        table = sweep_table(
            self.config, self.scenes, bakis_lengths=BAKIS_LENGTHS
        )
        means = table.groupby("bakis_length")["macro_f1"].mean()
        self.assertEqual(sorted(means.index), list(BAKIS_LENGTHS))
        for length in BAKIS_LENGTHS:
            if length >= 8:
                with self.subTest(bakis_length=length):
                    self.assertGreaterEqual(means[length] - means[3], 0.05)
