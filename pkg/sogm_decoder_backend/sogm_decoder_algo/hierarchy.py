"""
Hierarchical property model and path decoding.

A path is a sequence of properties (ground, table, object, ...). Each
property class ``w`` has a prior ``P(w)`` and its own left-right HMM
``lambda_w`` over the log-odds frames it covers, so the joint probability
of a segmented path is the product of ``P(w_i)`` and the segment
likelihoods under ``lambda_w_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InvalidParams, UnknownClass
from .hmm import (
    PropertyModel,
    TrainingConfig,
    _as_frames,
    _decode,
    _encode,
    _log,
    bakis_mask,
    baum_welch,
    forward_backward,
    init_emissions,
    make_bakis,
    viterbi,
)

logger = logging.getLogger(__name__)

TRAINING_MODES = ("per_class", "pooled")
_EXIT_PROBABILITY = 0.05


@dataclass
class HierarchicalModel:
    """
    Property prior plus one HMM per property class.

    Parameters
    ----------
    classes : tuple of str
        Property names, in model order
    prior : ndarray
        ``P(w)`` for each class, summing to one
    submodels : list of PropertyModel
        ``lambda_w`` for each class
    metadata : dict
        Training provenance (mode, state-to-class mapping, traces)
    """

    classes: tuple[str, ...]
    prior: np.ndarray
    submodels: list[PropertyModel]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.prior = np.asarray(self.prior, dtype=float)
        if not (len(self.classes) == len(self.prior) == len(self.submodels)):
            raise InvalidParams(
                "classes, prior and submodels must have equal lengths"
            )
        if abs(self.prior.sum() - 1.0) > 1e-9 or np.any(self.prior < 0):
            raise InvalidParams(
                f"class prior must sum to 1, got {self.prior.tolist()}"
            )
        if len({m.n_features for m in self.submodels}) != 1:
            raise InvalidParams("all submodels must share the frame dimension")

    @property
    def n_features(self) -> int:
        return self.submodels[0].n_features

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise UnknownClass(
                f"unknown property class {name!r}; "
                f"model has {list(self.classes)}"
            ) from None

    def submodel(self, name: str) -> PropertyModel:
        return self.submodels[self.class_index(name)]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "prior": _encode(self.prior),
            "submodels": {
                name: model.to_dict()
                for name, model in zip(self.classes, self.submodels)
            },
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HierarchicalModel":
        classes = tuple(data["classes"])
        return cls(
            classes=classes,
            prior=_decode(data["prior"]),
            submodels=[
                PropertyModel.from_dict(data["submodels"][name])
                for name in classes
            ],
            metadata=data.get("metadata", {}),
        )


def joint_logprob(
    hmodel: HierarchicalModel,
    obs_segments: Sequence,
    properties: Sequence[str],
) -> float:
    """
    Log of the joint probability of segments and their property labels,
    ``sum_i log P(w_i) + log P(segment_i | lambda_w_i)``.

    Raises
    ------
    InvalidParams
        If segments and properties differ in length or are empty
    UnknownClass
        If a property is not a class of the model
    """
    if len(obs_segments) != len(properties) or not properties:
        raise InvalidParams(
            f"{len(obs_segments)} segments for {len(properties)} properties"
        )
    total = 0.0
    for segment, name in zip(obs_segments, properties):
        index = hmodel.class_index(name)
        fb = forward_backward(hmodel.submodels[index], segment)
        total += float(np.log(hmodel.prior[index])) + fb.log_likelihood
    return total


@dataclass(frozen=True)
class DecodeConfig:
    """Settings of :func:`decode_path`."""

    min_segment_length: int = 3

    def __post_init__(self):
        if self.min_segment_length < 1:
            raise InvalidParams("min_segment_length must be >= 1")


def segment_scores(model: PropertyModel, obs) -> np.ndarray:
    """
    Viterbi log-probability of every contiguous segment.

    Returns
    -------
    ndarray, shape (T, T)
        ``scores[s, e]`` is the best state-path log-probability of frames
        ``s..e`` (inclusive) under ``model``; ``-inf`` for ``e < s``
    """
    frames = _as_frames(obs, model.n_features)
    log_b = model.emission_matrix(frames)
    log_a, log_pi = _log(model.transition), _log(model.start)
    n_frames, n_states = log_b.shape

    scores = np.full((n_frames, n_frames), -np.inf)
    delta = np.full((n_frames, n_states), -np.inf)
    for t in range(n_frames):
        if t:
            # one Viterbi recursion per segment start, all advanced at once
            prev = delta[:t, :, None] + log_a[None, :, :]
            delta[:t] = prev.max(axis=1) + log_b[t]
        delta[t] = log_pi + log_b[t]
        scores[: t + 1, t] = delta[: t + 1].max(axis=1)
    return scores


def decode_path(
    hmodel: HierarchicalModel,
    obs,
    seg_config: DecodeConfig = DecodeConfig(),
) -> list[str]:
    """
    Label every frame with a property class.

    The sequence is split into contiguous segments of at least
    ``min_segment_length`` frames (the whole sequence when it is shorter);
    each segment scores ``log P(w) + viterbi(lambda_w, segment)`` for its
    best class and dynamic programming over segment boundaries picks the
    split with the highest total. Ties go to the lower class index, then
    the earlier segment start.

    Raises
    ------
    EmptySequence
        If the sequence has no frames
    """
    frames = _as_frames(obs, hmodel.n_features)
    n_frames = len(frames)
    shortest = min(seg_config.min_segment_length, n_frames)
    log_prior = _log(hmodel.prior)
    scores = np.stack([segment_scores(m, frames) for m in hmodel.submodels])

    best = np.full(n_frames + 1, -np.inf)
    best[0] = 0.0
    choice = np.zeros((n_frames + 1, 2), dtype=np.int64)
    for end in range(shortest, n_frames + 1):
        starts = np.arange(0, end - shortest + 1)
        candidates = (
            best[starts][None, :]
            + log_prior[:, None]
            + scores[:, starts, end - 1]
        )
        flat = int(np.argmax(candidates))
        index, pos = divmod(flat, len(starts))
        best[end] = candidates[index, pos]
        choice[end] = (index, starts[pos])

    labels = np.empty(n_frames, dtype=np.int64)
    end = n_frames
    while end > 0:
        index, start = choice[end]
        labels[start:end] = index
        end = start
    return [hmodel.classes[i] for i in labels]


def label_runs(labels: Sequence[str]) -> list[tuple[str, int, int]]:
    """Maximal runs of equal labels as ``(label, start, stop)``."""
    runs = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            runs.append((labels[start], start, t))
            start = t
    return runs


def train_hierarchical(
    data: Sequence[tuple[np.ndarray, Sequence[str]]],
    classes: Sequence[str],
    bakis_length: int,
    training: TrainingConfig = TrainingConfig(),
    init: str = "manual_means",
    mode: str = "per_class",
    mean_table: Mapping[str, Sequence[float]] | None = None,
) -> HierarchicalModel:
    """
    Train a hierarchical model from labelled frame sequences.

    Parameters
    ----------
    data : list of (frames, labels)
        Training sequences with one class label per frame
    classes : list of str
        Property classes of the model
    bakis_length : int
        States per class submodel
    training : TrainingConfig
        EM and initialization settings
    init : {"manual_means", "kmeans"}
        Emission initialization
    mode : {"per_class", "pooled"}
        ``per_class`` trains each submodel on the runs of its class;
        ``pooled`` trains one composite model on whole unlabelled sequences
        and maps its chains to classes by nearest manual mean.
    mean_table : dict, optional
        Manual log-odds mean vector per class

    Raises
    ------
    InvalidParams
        On an unknown mode, empty data or a missing mean table
    """
    if mode not in TRAINING_MODES:
        raise InvalidParams(
            f"unknown training mode {mode!r}; expected {TRAINING_MODES}"
        )
    if not data:
        raise InvalidParams("no training sequences")
    if bakis_length < 1:
        raise InvalidParams(f"bakis_length must be >= 1, got {bakis_length}")
    classes = tuple(classes)
    if mode == "per_class":
        return _train_per_class(
            data, classes, bakis_length, training, init, mean_table
        )
    if mean_table is None:
        raise InvalidParams("pooled training maps chains by a mean table")
    return _train_pooled(data, classes, bakis_length, training, mean_table)


def _train_per_class(data, classes, bakis_length, training, init, table):
    n_features = np.asarray(data[0][0]).shape[1]
    runs = {name: [] for name in classes}
    for frames, labels in data:
        frames = np.asarray(frames, dtype=float)
        for label, start, stop in label_runs(list(labels)):
            if label not in runs:
                raise UnknownClass(
                    f"training label {label!r} not in {classes}"
                )
            runs[label].append(frames[start:stop])

    counts = np.array([len(runs[name]) for name in classes], dtype=float)
    prior = (counts + 1.0) / (counts.sum() + len(classes))

    submodels, traces = [], {}
    for name in classes:
        model = make_bakis(
            bakis_length,
            training.skip,
            n_features,
            training.n_components,
            training.init_var,
        )
        class_init = init
        frame_count = sum(len(run) for run in runs[name])
        if not runs[name]:
            logger.warning("no training runs for class %r", name)
        if init == "kmeans" and frame_count < bakis_length:
            class_init = "manual_means"
        means = None if table is None else table.get(name)
        if class_init == "manual_means" and means is None:
            raise InvalidParams(f"no manual mean for class {name!r}")
        model.emissions = init_emissions(
            class_init, bakis_length, runs[name], training, means
        )
        if runs[name]:
            model, trace = baum_welch(model, runs[name], training)
            traces[name] = trace
            logger.info(
                "trained %r on %d runs: log-likelihood %.3f after %d "
                "iterations",
                name,
                len(runs[name]),
                trace[-1],
                len(trace),
            )
        submodels.append(model)

    metadata = {
        "mode": "per_class",
        "init": init,
        "bakis_length": bakis_length,
        "segment_counts": dict(zip(classes, counts.astype(int).tolist())),
        "iterations": {name: len(t) for name, t in traces.items()},
    }
    return HierarchicalModel(classes, prior, submodels, metadata)


def _train_pooled(data, classes, bakis_length, training, table):
    n_classes = len(classes)
    size = n_classes * bakis_length
    chain = bakis_mask(bakis_length, training.skip)

    mask = np.zeros((size, size), dtype=bool)
    for c in range(n_classes):
        block = slice(c * bakis_length, (c + 1) * bakis_length)
        mask[block, block] = chain
        for other in range(n_classes):
            if other != c:
                mask[block, other * bakis_length] = True

    transition = np.zeros((size, size))
    for c in range(n_classes):
        block = slice(c * bakis_length, (c + 1) * bakis_length)
        inner = chain / chain.sum(axis=1, keepdims=True)
        exits = _EXIT_PROBABILITY if n_classes > 1 else 0.0
        transition[block, block] = inner * (1.0 - exits)
        for other in range(n_classes):
            if other != c:
                transition[block, other * bakis_length] = exits / (
                    n_classes - 1
                )
    start = np.zeros(size)
    start[::bakis_length] = 1.0 / n_classes

    emissions = []
    for name in classes:
        emissions.extend(
            init_emissions(
                "manual_means", bakis_length, None, training, table[name]
            )
        )
    composite = PropertyModel(transition, start, emissions, mask)
    sequences = [np.asarray(frames, dtype=float) for frames, _ in data]
    composite, trace = baum_welch(composite, sequences, training)
    logger.info(
        "trained pooled model: log-likelihood %.3f after %d iterations",
        trace[-1],
        len(trace),
    )

    # chain entries along the Viterbi paths give the property prior
    entries = np.zeros(n_classes)
    for frames in sequences:
        path, _ = viterbi(composite, frames)
        chains = path // bakis_length
        entries[chains[0]] += 1
        entries += np.bincount(
            chains[1:][chains[1:] != chains[:-1]], minlength=n_classes
        )

    chain_means = np.stack(
        [
            np.mean(
                [
                    composite.emissions[c * bakis_length + s].weights
                    @ composite.emissions[c * bakis_length + s].means
                    for s in range(bakis_length)
                ],
                axis=0,
            )
            for c in range(n_classes)
        ]
    )
    manual = np.stack(
        [np.asarray(table[name], dtype=float) for name in classes]
    )
    cost = np.linalg.norm(chain_means[:, None, :] - manual[None, :, :], axis=2)
    chain_rows, class_cols = linear_sum_assignment(cost)
    mapping = {int(r): classes[int(c)] for r, c in zip(chain_rows, class_cols)}
    logger.info("pooled chain to class mapping: %s", mapping)

    submodels, prior = [], np.zeros(n_classes)
    by_class = {name: chain_id for chain_id, name in mapping.items()}
    for index, name in enumerate(classes):
        c = by_class[name]
        block = slice(c * bakis_length, (c + 1) * bakis_length)
        inner = composite.transition[block, block].copy()
        rows = inner.sum(axis=1)
        # a state that only ever left its chain keeps the initial topology
        inner[rows <= 0] = chain[rows <= 0]
        inner /= inner.sum(axis=1, keepdims=True)
        sub_start = np.zeros(bakis_length)
        sub_start[0] = 1.0
        submodels.append(
            PropertyModel(
                inner,
                sub_start,
                [e.copy() for e in composite.emissions[block]],
                chain.copy(),
            )
        )
        prior[index] = entries[c] + 1.0
    prior /= prior.sum()

    metadata = {
        "mode": "pooled",
        "init": "manual_means",
        "bakis_length": bakis_length,
        "mapping_rule": "nearest manual mean, one-to-one assignment",
        "chain_to_class": {str(k): v for k, v in mapping.items()},
        "iterations": len(trace),
    }
    return HierarchicalModel(classes, prior, submodels, metadata)
