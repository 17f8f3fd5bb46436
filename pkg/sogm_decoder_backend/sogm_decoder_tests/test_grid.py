import math

import numpy as np
import pytest
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from sogm_decoder_algo.exceptions import (
    IndexOutOfBounds,
    InvalidParams,
    UnknownLayer,
)
from sogm_decoder_algo.grid import (
    EPS,
    LOGIT_MAX,
    GridSpec,
    LayerObservation,
    Pose,
    SemanticGrid,
    empty_grid,
    integrate_observation,
    inverse_logit,
    logit,
    probability_vector,
    update_cell,
)
from sogm_decoder_algo.scenario import (
    CORNER_BASE,
    OBSTACLE_BASE,
    P_LOW,
    manual_mean_table,
)


class LogOddsTest(SimpleTestCase):

    def test_logit_anchor_values(self):
        self.assertEqual(logit(0.5), 0.0)
        self.assertAlmostEqual(logit(0.88079708814621), 2.0, delta=1e-6)
        self.assertAlmostEqual(logit(0.119202919304371), -2.0, delta=1e-6)

    def test_inverse_logit_anchor_values(self):
        self.assertEqual(float(inverse_logit(0.0)), 0.5)
        self.assertAlmostEqual(
            float(inverse_logit(2.0)), 0.8807970779, delta=1e-9
        )
        self.assertAlmostEqual(
            float(inverse_logit(-2.0)), 0.1192029221, delta=1e-9
        )

    def test_logit_is_clamped_at_the_bounds(self):
        self.assertAlmostEqual(logit(0.0), -LOGIT_MAX)
        self.assertAlmostEqual(logit(1.0), LOGIT_MAX)
        self.assertTrue(math.isfinite(logit(0.0)))

    def test_round_trip_over_random_probabilities(self):
        p = np.random.default_rng(7).uniform(EPS, 1 - EPS, 10_000)
        assert_allclose(inverse_logit(logit(p)), p, rtol=0, atol=1e-12)

    def test_update_cell_examples(self):
        self.assertEqual(update_cell(0.0, 0.85), 0.85)
        expected = logit(0.9411764706)
        self.assertAlmostEqual(
            update_cell(logit(0.8), logit(0.8)), expected, delta=1e-9
        )
        self.assertAlmostEqual(update_cell(logit(0.8), logit(0.2)), 0.0)

    def test_update_cell_is_neutral_for_zero(self):
        values = np.random.default_rng(1).uniform(-10, 10, 10_000)
        assert_array_equal(update_cell(values, 0.0), values)

    def test_update_cell_saturates(self):
        self.assertEqual(update_cell(LOGIT_MAX, 5.0), LOGIT_MAX)
        self.assertEqual(update_cell(-LOGIT_MAX, -5.0), -LOGIT_MAX)


class GridSpecTest(SimpleTestCase):

    def test_invalid_geometry(self):
        with self.assertRaises(InvalidParams):
            GridSpec(0, 5, 0.1)
        with self.assertRaises(InvalidParams):
            GridSpec(5, 5, 0.0)

    def test_world_to_cell_and_centers(self):
        spec = GridSpec(10, 5, 0.5, origin=(1.0, -1.0))
        self.assertEqual(spec.world_to_cell(1.0, -1.0), (0, 0))
        self.assertEqual(spec.world_to_cell(2.26, 0.6), (2, 3))
        self.assertEqual(spec.cell_center((0, 0)), (1.25, -0.75))
        xs, ys = spec.cell_centers()
        self.assertEqual(xs.shape, (5, 10))
        self.assertEqual(xs[0, 3], 1.0 + 3.5 * 0.5)

    def test_check_index(self):
        spec = GridSpec(3, 2, 1.0)
        self.assertEqual(spec.check_index((2, 1)), (2, 1))
        with self.assertRaises(IndexOutOfBounds):
            spec.check_index((3, 0))
        with self.assertRaises(IndexOutOfBounds):
            spec.check_index((0, -1))

    def test_dict_round_trip(self):
        spec = GridSpec(4, 6, 0.005, origin=(0.1, 0.2))
        self.assertEqual(GridSpec.from_dict(spec.to_dict()), spec)

    def test_pose_heading_normalized(self):
        self.assertAlmostEqual(Pose(0, 0, 3 * math.pi).heading, math.pi)
        self.assertEqual(Pose(0, 0, -math.pi).heading, math.pi)
        self.assertAlmostEqual(
            Pose(0, 0, -3 * math.pi / 2).heading, math.pi / 2
        )


class SemanticGridTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.spec = GridSpec(6, 4, 0.1)
        self.grid = empty_grid(self.spec, ("anomaly", "corner", "obstacle"))

    def test_fresh_grid_is_uninformed(self):
        assert_array_equal(probability_vector(self.grid, (3, 2)), [0.5] * 3)

    def test_single_observation(self):
        obs = LayerObservation.single("corner", (2, 1), 1.0)
        fused = integrate_observation(self.grid, obs)
        self.assertAlmostEqual(
            fused.probability_vector((2, 1))[1], float(inverse_logit(1.0))
        )
        others = np.delete(fused.layer("corner").ravel(), 1 * 6 + 2)
        assert_array_equal(others, 0.5)
        assert_array_equal(fused.layer("anomaly"), 0.5)

    def test_integration_leaves_input_untouched(self):
        obs = LayerObservation.single("anomaly", (0, 0), 2.0)
        self.grid.integrate_observation(obs)
        assert_array_equal(self.grid.log_odds, 0.0)

    def test_repeated_observations_sum(self):
        obs = LayerObservation.single("obstacle", (5, 3), 0.3)
        fused = self.grid.fuse([obs] * 10)
        self.assertAlmostEqual(fused.logit_vector((5, 3))[2], 3.0, delta=1e-12)

    def test_order_independence(self):
        rng = np.random.default_rng(3)
        observations = [
            LayerObservation(
                str(rng.choice(self.grid.layer_names)),
                np.stack(
                    [rng.integers(0, 6, 5), rng.integers(0, 4, 5)], axis=1
                ),
                rng.normal(0.0, 1.0, 5),
            )
            for _ in range(40)
        ]
        reference = self.grid.fuse(observations).log_odds
        for _ in range(5):
            order = rng.permutation(len(observations))
            shuffled = self.grid.fuse([observations[i] for i in order])
            assert_allclose(shuffled.log_odds, reference, atol=1e-9)

    def test_unknown_layer(self):
        with self.assertRaises(UnknownLayer):
            self.grid.integrate_observation(
                LayerObservation.single("texture", (0, 0), 1.0)
            )
        with self.assertRaises(KeyError):
            self.grid.layer("texture")

    def test_observation_outside_grid(self):
        with self.assertRaises(IndexOutOfBounds):
            self.grid.integrate_observation(
                LayerObservation.single("corner", (6, 0), 1.0)
            )

    def test_single_layer_vector(self):
        grid = empty_grid(self.spec, ("obstacle",))
        grid = grid.integrate_observation(
            LayerObservation.single("obstacle", (1, 1), -1.0)
        )
        self.assertEqual(grid.probability_vector((1, 1)).shape, (1,))

    def test_duplicate_layer_names(self):
        with self.assertRaises(InvalidParams):
            SemanticGrid(self.spec, ("corner", "corner"))

    def test_grid_from_curve_values_at_distance_zero(self):
        ground = manual_mean_table()["ground"]
        log_odds = np.broadcast_to(
            np.asarray(ground)[:, None, None], (3,) + self.spec.shape
        )
        grid = SemanticGrid.from_log_odds(
            self.spec, self.grid.layer_names, log_odds
        )
        assert_allclose(
            grid.probability_vector((0, 0)),
            [P_LOW, CORNER_BASE, OBSTACLE_BASE],
            atol=1e-3,
        )
