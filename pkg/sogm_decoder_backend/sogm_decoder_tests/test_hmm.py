import itertools
import json
import math

import numpy as np
import pytest
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import logsumexp

from sogm_decoder_algo.exceptions import (
    DimensionError,
    EmptySequence,
    InvalidParams,
    NumericalFailure,
)
from sogm_decoder_algo.hmm import (
    GmmParams,
    ObservationSequence,
    PropertyModel,
    TrainingConfig,
    bakis_mask,
    baum_welch,
    emission_logpdf,
    forward_backward,
    init_emissions,
    make_bakis,
    sample,
    viterbi,
)


def random_model(rng, num_states, n_features, n_components, skip):
    mask = bakis_mask(num_states, skip)
    transition = np.zeros((num_states, num_states))
    for i in range(num_states):
        allowed = np.flatnonzero(mask[i])
        transition[i, allowed] = rng.dirichlet(np.ones(len(allowed)))
    emissions = [
        GmmParams(
            rng.dirichlet(np.ones(n_components)),
            rng.normal(0.0, 1.5, (n_components, n_features)),
            rng.uniform(0.3, 2.0, (n_components, n_features)),
        )
        for _ in range(num_states)
    ]
    return PropertyModel(
        transition, rng.dirichlet(np.ones(num_states)), emissions, mask
    )


def path_scores(model, frames):
    """Joint log-probability of every state path, by enumeration."""
    paths = np.array(
        list(itertools.product(range(model.num_states), repeat=len(frames)))
    )
    with np.errstate(divide="ignore"):
        log_a = np.log(model.transition)
        log_pi = np.log(model.start)
    log_b = model.emission_matrix(frames)
    scores = log_pi[paths[:, 0]] + log_b[0, paths[:, 0]]
    for t in range(1, len(frames)):
        scores = (
            scores
            + log_a[paths[:, t - 1], paths[:, t]]
            + log_b[t, paths[:, t]]
        )
    return paths, scores


class EmissionTest(SimpleTestCase):

    def test_standard_normal(self):
        gmm = GmmParams([1.0], [[0.0]], [[1.0]])
        self.assertAlmostEqual(
            emission_logpdf(gmm, [0.0]), -0.9189385332, delta=1e-9
        )

    def test_mixture_matches_weighted_sum(self):
        gmm = GmmParams(
            [0.3, 0.7], [[0.0, 1.0], [2.0, -1.0]], [[1.0, 2.0]] * 2
        )
        frame = np.array([0.5, 0.2])
        expected = 0.0
        for w, m, v in zip(gmm.weights, gmm.means, gmm.variances):
            density = np.prod(
                np.exp(-((frame - m) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v)
            )
            expected += w * density
        self.assertAlmostEqual(
            emission_logpdf(gmm, frame), math.log(expected), delta=1e-12
        )

    def test_dimension_mismatch(self):
        gmm = GmmParams([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
        with self.assertRaises(DimensionError):
            emission_logpdf(gmm, [0.0, 0.0, 0.0])

    def test_invalid_mixture(self):
        with self.assertRaises(InvalidParams):
            GmmParams([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])
        with self.assertRaises(InvalidParams):
            GmmParams([1.0], [[0.0]], [[0.0]])
        with self.assertRaises(InvalidParams):
            GmmParams([1.0], [[np.nan]], [[1.0]])
        with self.assertRaises(InvalidParams):
            GmmParams([0.5, 0.5], [[0.0], [1.0]], [[1.0], [np.inf]])


class TopologyTest(SimpleTestCase):

    def test_two_state_bakis(self):
        model = make_bakis(2, skip=0)
        assert_allclose(model.transition, [[0.5, 0.5], [0.0, 1.0]])
        assert_array_equal(model.start, [1.0, 0.0])

    def test_skip_width(self):
        mask = bakis_mask(5, skip=1)
        self.assertTrue(mask[0, 2])
        self.assertFalse(mask[0, 3])
        self.assertFalse(mask[2, 1])
        assert_allclose(make_bakis(5).transition.sum(axis=1), 1.0)

    def test_single_state(self):
        model = make_bakis(1)
        assert_array_equal(model.transition, [[1.0]])

    def test_invalid_topology(self):
        with self.assertRaises(InvalidParams):
            make_bakis(0)
        with self.assertRaises(InvalidParams):
            make_bakis(3, skip=-1)

    def test_json_round_trip_is_exact(self):
        model = random_model(np.random.default_rng(2), 3, 2, 2, skip=1)
        text = json.dumps(model.to_dict())
        restored = PropertyModel.from_dict(json.loads(text))
        assert_array_equal(restored.transition, model.transition)
        assert_array_equal(restored.start, model.start)
        for a, b in zip(restored.emissions, model.emissions):
            assert_array_equal(a.means, b.means)
            assert_array_equal(a.variances, b.variances)
            assert_array_equal(a.weights, b.weights)


class InferenceTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.rng = np.random.default_rng(2024)

    def test_against_enumeration(self):
        for _ in range(100):
            num_states = int(self.rng.integers(2, 5))
            n_frames = int(self.rng.integers(1, 9))
            model = random_model(
                self.rng,
                num_states,
                int(self.rng.integers(1, 4)),
                int(self.rng.integers(1, 3)),
                skip=int(self.rng.integers(0, 2)),
            )
            frames = self.rng.normal(0.0, 1.5, (n_frames, model.n_features))
            paths, scores = path_scores(model, frames)

            fb = forward_backward(model, frames)
            self.assertAlmostEqual(
                fb.log_likelihood, float(logsumexp(scores)), delta=1e-9
            )

            path, log_prob = viterbi(model, frames)
            self.assertAlmostEqual(log_prob, float(scores.max()), delta=1e-9)
            assert_array_equal(path, paths[np.argmax(scores)])

            weights = np.exp(scores - logsumexp(scores))
            for t in range(n_frames):
                expected = np.bincount(
                    paths[:, t], weights=weights, minlength=num_states
                )
                assert_allclose(fb.gamma[t], expected, atol=1e-9)

    def test_posteriors_are_distributions(self):
        model = random_model(self.rng, 4, 2, 2, skip=1)
        _, frames = sample(model, 30, self.rng)
        fb = forward_backward(model, ObservationSequence(frames))
        assert_allclose(fb.gamma.sum(axis=1), 1.0, atol=1e-9)
        assert_allclose(fb.xi.sum(axis=(1, 2)), 1.0, atol=1e-9)
        assert_allclose(fb.xi.sum(axis=2), fb.gamma[:-1], atol=1e-9)
        assert_allclose(fb.xi.sum(axis=1), fb.gamma[1:], atol=1e-9)
        self.assertTrue(np.all(fb.xi[:, ~model.mask] == 0.0))

    def test_viterbi_invariant_under_translation(self):
        for _ in range(20):
            model = random_model(self.rng, 4, 3, 2, skip=1)
            _, frames = sample(model, 25, self.rng)
            shift = self.rng.normal(0.0, 5.0, model.n_features)
            moved = PropertyModel(
                model.transition,
                model.start,
                [
                    GmmParams(gmm.weights, gmm.means + shift, gmm.variances)
                    for gmm in model.emissions
                ],
                model.mask,
            )
            path, log_prob = viterbi(model, frames)
            moved_path, moved_log_prob = viterbi(moved, frames + shift)
            assert_array_equal(moved_path, path)
            self.assertAlmostEqual(moved_log_prob, log_prob, delta=1e-8)

    def test_single_frame(self):
        model = make_bakis(3, n_features=1)
        fb = forward_backward(model, [[0.4]])
        self.assertEqual(fb.xi.shape, (0, 3, 3))
        path, _ = viterbi(model, [[0.4]])
        assert_array_equal(path, [0])

    def test_empty_sequence(self):
        model = make_bakis(2)
        with self.assertRaises(EmptySequence):
            forward_backward(model, np.zeros((0, 1)))
        with self.assertRaises(EmptySequence):
            viterbi(model, np.zeros((0, 1)))

    def test_dimension_mismatch(self):
        model = make_bakis(2, n_features=3)
        with self.assertRaises(DimensionError):
            forward_backward(model, np.zeros((4, 2)))

    def test_impossible_sequence(self):
        gmm = GmmParams([1.0], [[0.0]], [[1e-6]])
        model = PropertyModel([[1.0]], [1.0], [gmm])
        with self.assertRaises(NumericalFailure):
            forward_backward(model, [[1e4]])

    def test_observation_sequence_validation(self):
        with self.assertRaises(InvalidParams):
            ObservationSequence([[np.nan]])
        with self.assertRaises(InvalidParams):
            ObservationSequence([[0.0]], source="voxels")
        with self.assertRaises(DimensionError):
            ObservationSequence(np.zeros((2, 2, 2)))


class TrainingTest(SimpleTestCase):

    def test_log_likelihood_never_decreases(self):
        for run in range(20):
            rng = np.random.default_rng(run)
            truth = random_model(rng, 3, 2, 1, skip=1)
            sequences = [sample(truth, 25, rng)[1] for _ in range(5)]
            model = make_bakis(3, skip=1, n_features=2)
            model.emissions = init_emissions(
                "kmeans", 3, sequences, TrainingConfig(seed=run)
            )
            trained, trace = baum_welch(
                model, sequences, TrainingConfig(max_iters=30, tol=0.0)
            )
            self.assertTrue(np.all(np.diff(trace) >= -1e-6), trace)
            self.assertTrue(np.all(trained.transition[~trained.mask] == 0.0))
            assert_allclose(trained.transition.sum(axis=1), 1.0, atol=1e-9)
            self.assertAlmostEqual(trained.start.sum(), 1.0, delta=1e-9)

    def test_recovers_well_separated_means(self):
        rng = np.random.default_rng(8)
        truth = PropertyModel(
            [[0.9, 0.1], [0.0, 1.0]],
            [1.0, 0.0],
            [
                GmmParams([1.0], [[-2.0]], [[0.25]]),
                GmmParams([1.0], [[2.0]], [[0.25]]),
            ],
        )
        sequences = [sample(truth, 40, rng)[1] for _ in range(50)]
        model = make_bakis(2, skip=0, n_features=1)
        model.emissions = init_emissions(
            "manual_means", 2, mean_table=[[-1.0], [1.0]]
        )
        trained, _ = baum_welch(model, sequences, TrainingConfig())
        self.assertAlmostEqual(
            trained.emissions[0].means[0, 0], -2.0, delta=0.15
        )
        self.assertAlmostEqual(
            trained.emissions[1].means[0, 0], 2.0, delta=0.15
        )
        self.assertAlmostEqual(trained.transition[0, 1], 0.1, delta=0.05)

    def test_sample_statistics_are_a_fixed_point(self):
        frames = np.random.default_rng(1).normal(0.7, 1.3, (200, 1))
        gmm = GmmParams([1.0], [[frames.mean()]], [[frames.var()]])
        model = PropertyModel([[1.0]], [1.0], [gmm])
        trained, _ = baum_welch(model, [frames], TrainingConfig(max_iters=1))
        self.assertAlmostEqual(
            trained.emissions[0].means[0, 0], frames.mean(), delta=1e-6
        )
        self.assertAlmostEqual(
            trained.emissions[0].variances[0, 0], frames.var(), delta=1e-6
        )

    def test_variance_floor(self):
        frames = np.full((10, 1), 0.5)
        model = make_bakis(1)
        trained, _ = baum_welch(
            model, [frames], TrainingConfig(max_iters=3, var_floor=1e-3)
        )
        self.assertEqual(trained.emissions[0].variances[0, 0], 1e-3)

    def test_no_sequences(self):
        with self.assertRaises(EmptySequence):
            baum_welch(make_bakis(2), [])

    def test_invalid_training_config(self):
        with self.assertRaises(InvalidParams):
            TrainingConfig(max_iters=0)
        with self.assertRaises(InvalidParams):
            TrainingConfig(var_floor=0.0)


class InitEmissionsTest(SimpleTestCase):

    def test_manual_means_shared_row(self):
        emissions = init_emissions(
            "manual_means",
            3,
            mean_table=[1.0, -1.0],
            config=TrainingConfig(init_var=0.2),
        )
        self.assertEqual(len(emissions), 3)
        for gmm in emissions:
            assert_array_equal(gmm.means, [[1.0, -1.0]])
            assert_array_equal(gmm.variances, [[0.2, 0.2]])

    def test_kmeans_orders_states_left_to_right(self):
        rng = np.random.default_rng(0)
        sequences = [
            np.concatenate(
                [rng.normal(-3.0, 0.1, (10, 1)), rng.normal(3.0, 0.1, (10, 1))]
            )
            for _ in range(4)
        ]
        emissions = init_emissions("kmeans", 2, sequences)
        self.assertLess(emissions[0].means[0, 0], 0.0)
        self.assertGreater(emissions[1].means[0, 0], 0.0)

    def test_multiple_components_are_distinct(self):
        emissions = init_emissions(
            "manual_means",
            2,
            mean_table=[0.0],
            config=TrainingConfig(n_components=3),
        )
        self.assertEqual(emissions[0].n_components, 3)
        self.assertEqual(len(np.unique(emissions[0].means)), 3)

    def test_kmeans_on_constant_frames(self):
        sequences = [np.full((12, 3), -0.4), np.full((9, 3), -0.4)]
        for n_components in (1, 2):
            config = TrainingConfig(n_components=n_components, seed=3)
            emissions = init_emissions("kmeans", 8, sequences, config)
            self.assertEqual(len(emissions), 8)
            for gmm in emissions:
                self.assertTrue(np.all(np.isfinite(gmm.means)))
                self.assertTrue(np.all(gmm.variances >= config.var_floor))
                assert_allclose(gmm.means.mean(axis=0), -0.4, atol=0.5)

    def test_kmeans_with_fewer_distinct_frames_than_states(self):
        frames = np.repeat([[-2.0], [2.0]], 10, axis=0)
        emissions = init_emissions("kmeans", 5, [frames])
        self.assertEqual(len(emissions), 5)
        self.assertAlmostEqual(emissions[0].means[0, 0], -2.0)
        self.assertAlmostEqual(emissions[1].means[0, 0], 2.0)
        for gmm in emissions[2:]:
            self.assertAlmostEqual(gmm.means[0, 0], 0.0)
        model = make_bakis(5, n_features=1)
        model.emissions = emissions
        trained, trace = baum_welch(
            model, [frames], TrainingConfig(max_iters=5)
        )
        self.assertTrue(np.all(np.isfinite(trace)))
        for gmm in trained.emissions:
            self.assertTrue(np.all(np.isfinite(gmm.means)))

    def test_invalid_strategy(self):
        with self.assertRaises(InvalidParams):
            init_emissions("random", 2)
        with self.assertRaises(InvalidParams):
            init_emissions("manual_means", 2)
        with self.assertRaises(InvalidParams):
            init_emissions("kmeans", 5, [np.zeros((3, 1))])
