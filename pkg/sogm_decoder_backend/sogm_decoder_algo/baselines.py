"""
Baseline frame classifiers and the macro-averaged F1 score.

The baselines ignore the order of frames: ``majority`` always predicts the
most frequent training class, ``random`` draws from the training label
distribution and ``kmeans`` labels frames by the majority class of their
nearest k-means centroid.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import confusion_matrix, f1_score

from .exceptions import InvalidParams, UnknownClass
from .hmm import _as_frames

logger = logging.getLogger(__name__)

CLASSIFIERS = ("hmm", "kmeans", "random", "majority")


def _check_labels(labels: Sequence[str]) -> list[str]:
    labels = [str(label) for label in labels]
    if not labels:
        raise InvalidParams("classifier needs a nonempty training set")
    return labels


def _most_frequent(labels: Sequence[str]) -> str:
    counts = Counter(labels)
    top = max(counts.values())
    return min(label for label, n in counts.items() if n == top)


class MajorityClassifier:
    """Predicts the most frequent training class; ties go to the
    lexicographically smaller name."""

    kind = "majority"

    def __init__(self, label: str):
        self.label = label

    @classmethod
    def fit(cls, train_labels: Sequence[str]) -> "MajorityClassifier":
        return cls(_most_frequent(_check_labels(train_labels)))

    def predict(self, frames) -> list[str]:
        return [self.label] * len(frames)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label}

    @classmethod
    def from_dict(cls, data: dict) -> "MajorityClassifier":
        return cls(data["label"])


class RandomClassifier:
    """
    Draws i.i.d. labels from the empirical training distribution.

    Parameters
    ----------
    classes : list of str
        Sorted class names
    probabilities : ndarray
        Training frequency of each class
    seed : int
        Seed of the draws; every :meth:`predict` call restarts from it
    """

    kind = "random"

    def __init__(self, classes, probabilities, seed: int = 0):
        self.classes = list(classes)
        self.probabilities = np.asarray(probabilities, dtype=float)
        self.seed = seed

    @classmethod
    def fit(cls, train_labels: Sequence[str], seed: int = 0):
        counts = Counter(_check_labels(train_labels))
        classes = sorted(counts)
        total = sum(counts.values())
        return cls(classes, [counts[c] / total for c in classes], seed)

    def predict(self, frames) -> list[str]:
        rng = np.random.default_rng(self.seed)
        draws = rng.choice(
            len(self.classes), len(frames), p=self.probabilities
        )
        return [self.classes[i] for i in draws]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classes": self.classes,
            "probabilities": self.probabilities.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RandomClassifier":
        return cls(data["classes"], data["probabilities"], data["seed"])


class KMeansClassifier:
    """
    Nearest-centroid classifier over k-means clusters of training frames.

    Each cluster carries the majority label of its training members (ties
    go to the lexicographically smaller name); a frame is labelled by its
    nearest centroid, ties toward the lower cluster index.
    """

    kind = "kmeans"

    def __init__(self, centroids, cluster_labels, seed: int = 0):
        self.centroids = np.asarray(centroids, dtype=float)
        self.cluster_labels = list(cluster_labels)
        self.seed = seed

    @classmethod
    def fit(
        cls, train_frames, train_labels: Sequence[str], k: int, seed: int = 0
    ) -> "KMeansClassifier":
        """
        Raises
        ------
        InvalidParams
            If ``k`` exceeds the number of training frames, is smaller than
            the number of training classes, or labels and frames differ in
            length
        """
        labels = _check_labels(train_labels)
        frames = _as_frames(train_frames)
        if len(frames) != len(labels):
            raise InvalidParams(
                f"{len(frames)} training frames but {len(labels)} labels"
            )
        if k > len(frames):
            raise InvalidParams(
                f"k={k} exceeds the {len(frames)} training frames"
            )
        if k < len(set(labels)):
            raise InvalidParams(
                f"k={k} is smaller than the {len(set(labels))} classes"
            )
        model = _kmeans(k, seed).fit(frames)
        assignment = model.labels_
        # clusters left empty by duplicate frames take the global majority
        fallback = _most_frequent(labels)
        cluster_labels = [
            _most_frequent(
                [labels[i] for i in np.flatnonzero(assignment == c)]
                or [fallback]
            )
            for c in range(k)
        ]
        logger.debug("k-means clusters labelled %s", cluster_labels)
        return cls(model.cluster_centers_, cluster_labels, seed)

    def predict(self, frames) -> list[str]:
        frames = _as_frames(frames, self.centroids.shape[1])
        distances = np.linalg.norm(
            frames[:, None, :] - self.centroids[None, :, :], axis=2
        )
        return [self.cluster_labels[i] for i in np.argmin(distances, axis=1)]

    @staticmethod
    def inertia_trace(frames, k: int, n_iter: int, seed: int = 0):
        """
        k-means objective after 1..``n_iter`` Lloyd iterations from the same
        k-means++ start; non-increasing.
        """
        frames = _as_frames(frames)
        return [
            float(_kmeans(k, seed, max_iter=i).fit(frames).inertia_)
            for i in range(1, n_iter + 1)
        ]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "centroids": self.centroids.tolist(),
            "cluster_labels": self.cluster_labels,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KMeansClassifier":
        return cls(data["centroids"], data["cluster_labels"], data["seed"])


def _kmeans(k: int, seed: int, max_iter: int = 300) -> KMeans:
    return KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=max_iter,
        tol=0.0,
        algorithm="lloyd",
        random_state=seed,
    )


def majority_classifier(train_labels) -> MajorityClassifier:
    return MajorityClassifier.fit(train_labels)


def random_classifier(train_labels, seed: int = 0) -> RandomClassifier:
    return RandomClassifier.fit(train_labels, seed)


def kmeans_classifier(train_frames, train_labels, k: int, seed: int = 0):
    return KMeansClassifier.fit(train_frames, train_labels, k, seed)


def classifier_from_dict(data: dict):
    """Rebuild a baseline classifier stored with ``to_dict``."""
    kinds = {
        c.kind: c
        for c in (MajorityClassifier, RandomClassifier, KMeansClassifier)
    }
    try:
        return kinds[data["kind"]].from_dict(data)
    except KeyError as exc:
        raise InvalidParams(
            f"not a stored baseline classifier: {exc}"
        ) from exc


@dataclass
class ConfusionMatrix:
    """
    Frame counts by true class (rows) and predicted class (columns).
    """

    classes: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_f1(self) -> dict[str, float]:
        tp = np.diag(self.counts).astype(float)
        fp = self.counts.sum(axis=0) - tp
        fn = self.counts.sum(axis=1) - tp
        denominator = 2 * tp + fp + fn
        f1 = np.divide(
            2 * tp,
            denominator,
            out=np.zeros_like(tp),
            where=denominator > 0,
        )
        return dict(zip(self.classes, f1.tolist()))

    def macro_f1(self) -> float:
        return float(np.mean(list(self.per_class_f1().values())))

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


def _check_scoring(truth, predictions, classes):
    truth, predictions = list(truth), list(predictions)
    if len(truth) != len(predictions):
        raise InvalidParams(
            f"{len(truth)} true labels but {len(predictions)} predictions"
        )
    if not classes:
        raise InvalidParams("no classes to score")
    unknown = (set(truth) | set(predictions)) - set(classes)
    if unknown:
        raise UnknownClass(
            f"labels {sorted(unknown)} are not in {list(classes)}"
        )
    return truth, predictions


def confusion(truth, predictions, classes) -> ConfusionMatrix:
    """
    Confusion matrix of per-frame labels.

    Raises
    ------
    InvalidParams
        If the label sequences differ in length
    """
    classes = tuple(classes)
    truth, predictions = _check_scoring(truth, predictions, classes)
    if not truth:
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    else:
        counts = confusion_matrix(truth, predictions, labels=list(classes))
    return ConfusionMatrix(classes, counts.astype(np.int64))


def macro_f1(truth, predictions, classes) -> float:
    """
    Unweighted mean of the per-class F1 scores.

    A class that occurs neither in ``truth`` nor in ``predictions`` scores
    0 and is reported with a warning.

    Raises
    ------
    InvalidParams
        If the label sequences differ in length
    """
    classes = list(classes)
    truth, predictions = _check_scoring(truth, predictions, classes)
    absent = [c for c in classes if c not in truth and c not in predictions]
    if absent:
        logger.warning("F1 undefined for absent classes %s, scored 0", absent)
    if not truth:
        return 0.0
    return float(
        f1_score(
            truth,
            predictions,
            labels=classes,
            average="macro",
            zero_division=0,
        )
    )
