import json

import numpy as np
import pytest
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from sogm_decoder_algo.exceptions import InvalidParams, UnknownClass
from sogm_decoder_algo.hierarchy import (
    DecodeConfig,
    HierarchicalModel,
    decode_path,
    joint_logprob,
    label_runs,
    segment_scores,
    train_hierarchical,
)
from sogm_decoder_algo.hmm import (
    TrainingConfig,
    forward_backward,
    init_emissions,
    make_bakis,
    viterbi,
)
from sogm_decoder_algo.scenario import CLASS_NAMES, manual_mean_table

PATH = ("ground", "table", "object", "table", "ground")


def manual_model(states=3):
    table = manual_mean_table()
    submodels = []
    for name in CLASS_NAMES:
        model = make_bakis(states, n_features=3)
        model.emissions = init_emissions(
            "manual_means", states, mean_table=table[name]
        )
        submodels.append(model)
    return HierarchicalModel(CLASS_NAMES, np.full(3, 1 / 3), submodels)


def path_frames(runs, rng=None, noise=0.0):
    """Frames at the class means for ``runs`` of (class, length)."""
    table = manual_mean_table()
    frames, labels = [], []
    for name, length in runs:
        block = np.tile(table[name], (length, 1))
        if rng is not None:
            block = block + rng.normal(0.0, noise, block.shape)
        frames.append(block)
        labels.extend([name] * length)
    return np.concatenate(frames), labels


class JointProbabilityTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.model = manual_model()
        self.frames, _ = path_frames([("table", 6), ("object", 4)])

    def test_single_segment(self):
        expected = np.log(1 / 3) + forward_backward(
            self.model.submodel("table"), self.frames
        ).log_likelihood
        self.assertAlmostEqual(
            joint_logprob(self.model, [self.frames], ["table"]),
            expected,
            delta=1e-12,
        )

    def test_factorizes_over_segments(self):
        first, second = self.frames[:6], self.frames[6:]
        total = joint_logprob(self.model, [first, second], ["table", "object"])
        parts = joint_logprob(self.model, [first], ["table"]) + joint_logprob(
            self.model, [second], ["object"]
        )
        self.assertAlmostEqual(total, parts, delta=1e-9)

    def test_unknown_property(self):
        with self.assertRaises(UnknownClass):
            joint_logprob(self.model, [self.frames], ["chair"])

    def test_length_mismatch(self):
        with self.assertRaises(InvalidParams):
            joint_logprob(self.model, [self.frames], ["table", "object"])


class DecodeTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.model = manual_model()

    def test_constant_table_frames(self):
        frames, _ = path_frames([("table", 10)])
        self.assertEqual(decode_path(self.model, frames), ["table"] * 10)

    def test_noise_free_path(self):
        frames, labels = path_frames([(name, 8) for name in PATH])
        decoded = decode_path(self.model, frames)
        runs = label_runs(decoded)
        self.assertEqual(tuple(r[0] for r in runs), PATH)
        truth_runs = label_runs(labels)
        for (_, start, stop), (_, t_start, t_stop) in zip(runs, truth_runs):
            self.assertLessEqual(abs(start - t_start), 1)
            self.assertLessEqual(abs(stop - t_stop), 1)

    def test_short_segment_is_absorbed(self):
        frames, _ = path_frames([("table", 6), ("object", 1), ("table", 6)])
        decoded = decode_path(self.model, frames, DecodeConfig(3))
        self.assertEqual(decoded, ["table"] * 13)

    def test_sequence_shorter_than_minimum(self):
        frames, _ = path_frames([("object", 2)])
        self.assertEqual(decode_path(self.model, frames), ["object"] * 2)

    def test_segment_scores_match_viterbi(self):
        rng = np.random.default_rng(4)
        frames, _ = path_frames([("table", 4), ("object", 3)], rng, 0.3)
        submodel = self.model.submodel("object")
        scores = segment_scores(submodel, frames)
        for start in range(len(frames)):
            for end in range(start, len(frames)):
                _, expected = viterbi(submodel, frames[start : end + 1])
                self.assertAlmostEqual(
                    scores[start, end], expected, delta=1e-9
                )
        self.assertEqual(scores[3, 1], -np.inf)

    def test_invalid_decode_config(self):
        with self.assertRaises(InvalidParams):
            DecodeConfig(min_segment_length=0)

    def test_label_runs(self):
        self.assertEqual(
            label_runs(["a", "a", "b", "a"]),
            [("a", 0, 2), ("b", 2, 3), ("a", 3, 4)],
        )
        self.assertEqual(label_runs([]), [])


class TrainHierarchicalTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        rng = np.random.default_rng(21)
        lengths = [10, 10, 6, 10, 10]
        self.data = [
            path_frames(list(zip(PATH, lengths)), rng, 0.3) for _ in range(10)
        ]
        self.test_frames, self.test_labels = path_frames(
            list(zip(PATH, lengths)), rng, 0.3
        )
        self.training = TrainingConfig(max_iters=20)

    def test_per_class_training_decodes_held_out_path(self):
        model = train_hierarchical(
            self.data,
            CLASS_NAMES,
            bakis_length=3,
            training=self.training,
            mean_table=manual_mean_table(),
        )
        self.assertAlmostEqual(model.prior.sum(), 1.0)
        self.assertEqual(model.metadata["mode"], "per_class")
        self.assertEqual(
            model.metadata["segment_counts"],
            {"ground": 20, "table": 20, "object": 10},
        )
        decoded = decode_path(model, self.test_frames)
        accuracy = np.mean(
            [a == b for a, b in zip(decoded, self.test_labels)]
        )
        self.assertGreaterEqual(accuracy, 0.9)

    def test_kmeans_initialization(self):
        model = train_hierarchical(
            self.data,
            CLASS_NAMES,
            bakis_length=2,
            training=self.training,
            init="kmeans",
        )
        self.assertEqual(len(model.submodels), 3)
        self.assertEqual(model.metadata["init"], "kmeans")

    def test_kmeans_initialization_on_noise_free_runs(self):
        data = [path_frames(list(zip(PATH, [10, 10, 6, 10, 10])))] * 4
        model = train_hierarchical(
            data,
            CLASS_NAMES,
            bakis_length=8,
            training=self.training,
            init="kmeans",
        )
        for submodel in model.submodels:
            for gmm in submodel.emissions:
                self.assertTrue(np.all(np.isfinite(gmm.means)))
                self.assertTrue(np.all(np.isfinite(gmm.variances)))
        self.assertEqual(decode_path(model, data[0][0]), data[0][1])

    def test_pooled_training_maps_every_class(self):
        model = train_hierarchical(
            self.data,
            CLASS_NAMES,
            bakis_length=2,
            training=self.training,
            mode="pooled",
            mean_table=manual_mean_table(),
        )
        mapping = model.metadata["chain_to_class"]
        self.assertEqual(set(mapping.values()), set(CLASS_NAMES))
        self.assertAlmostEqual(model.prior.sum(), 1.0)
        for submodel in model.submodels:
            assert_allclose(submodel.transition.sum(axis=1), 1.0)

    def test_absent_class_keeps_manual_means(self):
        data = [path_frames([("ground", 8), ("table", 8)])]
        with self.assertLogs("sogm_decoder_algo.hierarchy", "WARNING"):
            model = train_hierarchical(
                data,
                CLASS_NAMES,
                bakis_length=2,
                training=self.training,
                mean_table=manual_mean_table(),
            )
        assert_allclose(
            model.submodel("object").emissions[0].means[0],
            manual_mean_table()["object"],
        )
        self.assertGreater(model.prior[model.class_index("object")], 0.0)

    def test_round_trip_keeps_decoding(self):
        model = train_hierarchical(
            self.data[:3],
            CLASS_NAMES,
            bakis_length=3,
            training=self.training,
            mean_table=manual_mean_table(),
        )
        restored = HierarchicalModel.from_dict(
            json.loads(json.dumps(model.to_dict()))
        )
        assert_array_equal(restored.prior, model.prior)
        self.assertEqual(
            decode_path(restored, self.test_frames),
            decode_path(model, self.test_frames),
        )

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidParams):
            train_hierarchical(self.data, CLASS_NAMES, 3, mode="joint")
        with self.assertRaises(InvalidParams):
            train_hierarchical([], CLASS_NAMES, 3)
        with self.assertRaises(InvalidParams):
            train_hierarchical(self.data, CLASS_NAMES, 0)
        with self.assertRaises(UnknownClass):
            train_hierarchical(
                [(np.zeros((4, 3)), ["chair"] * 4)],
                CLASS_NAMES,
                2,
                mean_table=manual_mean_table(),
            )
