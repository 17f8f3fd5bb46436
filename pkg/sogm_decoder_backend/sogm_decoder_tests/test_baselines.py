from collections import Counter

import numpy as np
import pytest
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal
from sklearn.metrics import f1_score

from sogm_decoder_algo.baselines import (
    KMeansClassifier,
    MajorityClassifier,
    RandomClassifier,
    classifier_from_dict,
    confusion,
    kmeans_classifier,
    macro_f1,
    majority_classifier,
    random_classifier,
)
from sogm_decoder_algo.exceptions import InvalidParams, UnknownClass

CLASSES = ("a", "b", "c")


class MacroF1Test(SimpleTestCase):

    def test_worked_example(self):
        truth = ["a", "a", "b", "b", "c", "c"]
        predicted = ["a", "b", "b", "c", "c", "c"]
        self.assertAlmostEqual(
            macro_f1(truth, predicted, CLASSES), 0.6556, delta=1e-4
        )
        per_class = confusion(truth, predicted, CLASSES).per_class_f1()
        self.assertAlmostEqual(per_class["a"], 2 / 3)
        self.assertAlmostEqual(per_class["b"], 1 / 2)
        self.assertAlmostEqual(per_class["c"], 4 / 5)

    def test_perfect_prediction(self):
        truth = ["a", "b", "c", "a"]
        self.assertEqual(macro_f1(truth, truth, CLASSES), 1.0)

    def test_length_mismatch(self):
        with self.assertRaises(InvalidParams):
            macro_f1(["a"], ["a", "b"], CLASSES)
        with self.assertRaises(InvalidParams):
            confusion(["a"], [], CLASSES)

    def test_unknown_label(self):
        with self.assertRaises(UnknownClass):
            macro_f1(["a", "z"], ["a", "a"], CLASSES)

    def test_absent_class_scores_zero_with_warning(self):
        with self.assertLogs("sogm_decoder_algo.baselines", "WARNING"):
            score = macro_f1(["a", "b"], ["a", "b"], CLASSES)
        self.assertAlmostEqual(score, 2 / 3)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.choice(CLASSES, 200)
        predicted = rng.choice(CLASSES, 200)
        order = rng.permutation(200)
        self.assertAlmostEqual(
            macro_f1(truth, predicted, CLASSES),
            macro_f1(truth[order], predicted[order], CLASSES),
            delta=1e-12,
        )

    def test_confusion_matches_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            truth = rng.choice(CLASSES, n).tolist()
            predicted = rng.choice(CLASSES, n).tolist()
            matrix = confusion(truth, predicted, CLASSES)
            self.assertEqual(matrix.total, n)
            for i, t in enumerate(CLASSES):
                for j, p in enumerate(CLASSES):
                    expected = sum(
                        1 for x, y in zip(truth, predicted) if (x, y) == (t, p)
                    )
                    self.assertEqual(matrix.counts[i, j], expected)
            reference = f1_score(
                truth,
                predicted,
                labels=list(CLASSES),
                average="macro",
                zero_division=0,
            )
            self.assertAlmostEqual(matrix.macro_f1(), reference, delta=1e-12)


class BaselineClassifierTest(SimpleTestCase):

    @pytest.fixture(autouse=True)
    def _setup(self):
        self.balanced = ["a", "b", "c"] * 20

    def test_majority_on_balanced_labels(self):
        classifier = majority_classifier(self.balanced)
        self.assertEqual(classifier.label, "a")
        predicted = classifier.predict(np.zeros((60, 3)))
        self.assertAlmostEqual(
            macro_f1(self.balanced, predicted, CLASSES), 1 / 6, delta=1e-9
        )

    def test_majority_picks_most_frequent(self):
        self.assertEqual(MajorityClassifier.fit(["c", "b", "b"]).label, "b")

    def test_random_follows_training_frequencies(self):
        classifier = random_classifier(self.balanced, seed=3)
        draws = Counter(classifier.predict(np.zeros((10_000, 3))))
        for name in CLASSES:
            self.assertAlmostEqual(draws[name] / 10_000, 1 / 3, delta=0.02)

    def test_random_is_reproducible(self):
        classifier = RandomClassifier.fit(self.balanced, seed=5)
        frames = np.zeros((50, 3))
        self.assertEqual(
            classifier.predict(frames), classifier.predict(frames)
        )

    def test_kmeans_separates_blobs(self):
        rng = np.random.default_rng(2)
        centers = {"a": [-5.0, 0.0], "b": [5.0, 0.0], "c": [0.0, 6.0]}
        labels = [name for name in CLASSES for _ in range(30)]
        frames = np.array([rng.normal(centers[n], 0.3) for n in labels])
        classifier = kmeans_classifier(frames, labels, k=3, seed=0)
        self.assertEqual(classifier.predict(frames), labels)

    def test_kmeans_with_duplicate_frames(self):
        blobs = {"a": [-4.0, 0.0], "b": [4.0, 0.0], "c": [0.0, 5.0]}
        labels = ["a"] * 7 + ["b"] * 5 + ["c"] * 3
        frames = np.array([blobs[name] for name in labels])
        classifier = KMeansClassifier.fit(frames, labels, k=4, seed=0)
        self.assertEqual(len(classifier.cluster_labels), 4)
        self.assertTrue(set(classifier.cluster_labels) <= set(CLASSES))
        predicted = classifier.predict(frames)
        self.assertTrue(set(predicted) <= set(CLASSES))
        self.assertEqual(predicted[:7], ["a"] * 7)

    def test_kmeans_inertia_never_increases(self):
        frames = np.random.default_rng(4).normal(0.0, 1.0, (200, 3))
        trace = KMeansClassifier.inertia_trace(frames, 5, 10, seed=1)
        self.assertEqual(len(trace), 10)
        self.assertTrue(np.all(np.diff(trace) <= 1e-9))

    def test_kmeans_rejects_bad_k(self):
        frames = np.zeros((4, 2))
        with self.assertRaises(InvalidParams):
            KMeansClassifier.fit(frames, ["a", "b", "c", "a"], k=5)
        with self.assertRaises(InvalidParams):
            KMeansClassifier.fit(frames, ["a", "b", "c", "a"], k=2)

    def test_empty_training_set(self):
        with self.assertRaises(InvalidParams):
            MajorityClassifier.fit([])

    def test_stored_classifiers_predict_the_same(self):
        rng = np.random.default_rng(6)
        frames = rng.normal(0.0, 1.0, (60, 2))
        for classifier in (
            MajorityClassifier.fit(self.balanced),
            RandomClassifier.fit(self.balanced, seed=1),
            KMeansClassifier.fit(frames, self.balanced, 4, seed=1),
        ):
            restored = classifier_from_dict(classifier.to_dict())
            self.assertEqual(
                restored.predict(frames), classifier.predict(frames)
            )

    def test_unknown_stored_kind(self):
        with self.assertRaises(InvalidParams):
            classifier_from_dict({"kind": "svm"})
        assert_array_equal(
            classifier_from_dict({"kind": "majority", "label": "b"}).predict(
                [0, 0]
            ),
            ["b", "b"],
        )
