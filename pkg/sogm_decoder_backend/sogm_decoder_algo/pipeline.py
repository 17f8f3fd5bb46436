"""
Trajectory sampling and end-to-end experiments.

A run builds (or receives) the synthetic scenes, segments their maps,
samples one observation sequence per scene along its evaluation trajectory
from the chosen representation, splits the scenes into training and test
sets, fits the classifier on the training scenes and scores its per-frame
predictions on the test scenes.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import (
    ConfusionMatrix,
    KMeansClassifier,
    MajorityClassifier,
    RandomClassifier,
    classifier_from_dict,
    confusion,
    macro_f1,
)
from .config import ExperimentConfig
from .exceptions import InvalidParams
from .grid import SemanticGrid, logit
from .hierarchy import HierarchicalModel, decode_path, train_hierarchical
from .hmm import ObservationSequence
from .scenario import (
    CLASS_NAMES,
    GroundTruthGrid,
    SceneData,
    build_dataset,
    manual_mean_table,
    random_scene_specs,
)
from .segmentation import (
    PointCloudMap,
    Segmentation,
    extract_supercells,
    to_point_cloud,
)
from .trajectory import Trajectory

logger = logging.getLogger(__name__)


class RepresentationTag(str, enum.Enum):
    CELLWISE = "cellwise"
    CLUSTERED = "clustered"
    POINTCLOUD = "pointcloud"


@dataclass
class LabeledSequence:
    """Observation sequence with one ground-truth class per frame."""

    obs: ObservationSequence
    truth: list[str]
    scene_id: str

    def __post_init__(self):
        self.truth = [str(label) for label in self.truth]
        if len(self.truth) != len(self.obs):
            raise InvalidParams(
                f"{self.scene_id}: {len(self.obs)} frames but "
                f"{len(self.truth)} labels"
            )


@dataclass
class SceneMaps:
    """A scene with its segmentation and point-cloud reduction."""

    scene: SceneData
    segmentation: Segmentation
    point_cloud: PointCloudMap


def _check_positions(grid: SemanticGrid, positions: np.ndarray) -> None:
    for x, y in positions:
        grid.spec.check_index(grid.spec.world_to_cell(x, y))


def sample_trajectory(
    grid: SemanticGrid,
    seg: Segmentation | None,
    pc: PointCloudMap | None,
    traj: Trajectory,
    rep,
) -> ObservationSequence:
    """
    Sample log-odds frames along a trajectory.

    ``cellwise`` emits the cells' own log-odds vectors and ``clustered`` the
    logit of their supercell's mean probability, one frame per traversed
    cell in both cases. ``pointcloud`` emits, every ``traj.step`` meters,
    the logit of the mean probability of the nearest point.

    Raises
    ------
    IndexOutOfBounds
        If the trajectory leaves the grid
    InvalidParams
        If the segmentation or point cloud the representation needs is
        missing
    """
    rep = RepresentationTag(rep)
    if rep is RepresentationTag.POINTCLOUD:
        if pc is None or len(pc) == 0:
            raise InvalidParams("pointcloud sampling needs a point cloud map")
        positions = traj.sample_positions()
        _check_positions(grid, positions)
        origin = np.asarray(grid.spec.origin)
        # cell coordinates put cell (ix, iy) at (ix, iy)
        query = (positions - origin) / grid.spec.resolution - 0.5
        frames = logit(pc.mean_p[pc.nearest(query)])
        return ObservationSequence(frames, rep.value)

    cells = np.array(traj.cells(grid.spec))
    ix, iy = cells[:, 0], cells[:, 1]
    if rep is RepresentationTag.CELLWISE:
        return ObservationSequence(grid.log_odds[:, iy, ix].T, rep.value)
    if seg is None:
        raise InvalidParams("clustered sampling needs a segmentation")
    if seg.spec != grid.spec:
        raise InvalidParams("segmentation and grid geometries differ")
    table = logit(np.stack([cell.mean_p for cell in seg.supercells]))
    return ObservationSequence(table[seg.labels[iy, ix]], rep.value)


def trajectory_truth(
    truth: GroundTruthGrid, traj: Trajectory, rep
) -> list[str]:
    """Ground-truth class of every frame :func:`sample_trajectory` emits."""
    rep = RepresentationTag(rep)
    if rep is RepresentationTag.POINTCLOUD:
        cells = [
            truth.spec.world_to_cell(x, y) for x, y in traj.sample_positions()
        ]
    else:
        cells = traj.cells(truth.spec)
    return truth.labels_at(cells)


def labeled_sequence(maps: SceneMaps, rep) -> LabeledSequence:
    scene = maps.scene
    obs = sample_trajectory(
        scene.grid,
        maps.segmentation,
        maps.point_cloud,
        scene.trajectory,
        rep,
    )
    truth = trajectory_truth(scene.truth, scene.trajectory, rep)
    return LabeledSequence(obs, truth, scene.scene_id)


def split_scenes(
    n_scenes: int, train_fraction: float, seed
) -> tuple[list[int], list[int]]:
    """
    Seeded scene-level train/test split, both parts sorted.

    Raises
    ------
    InvalidParams
        With fewer than two scenes
    """
    if n_scenes < 2:
        raise InvalidParams("a train/test split needs at least two scenes")
    n_train = min(max(int(round(n_scenes * train_fraction)), 1), n_scenes - 1)
    order = np.random.default_rng(seed).permutation(n_scenes)
    return sorted(order[:n_train].tolist()), sorted(order[n_train:].tolist())


def _segment(args) -> tuple[Segmentation, PointCloudMap]:
    grid, params = args
    seg = extract_supercells(grid, params)
    return seg, to_point_cloud(seg)


def segment_scenes(
    scenes: Sequence[SceneData], config: ExperimentConfig, jobs: int = 1
) -> list[SceneMaps]:
    """Segment every scene map; results keep the scene order."""
    params = config.segmentation.params()
    tasks = [(scene.grid, params) for scene in scenes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_segment, tasks))
    else:
        results = [_segment(task) for task in tasks]
    for scene, (seg, _) in zip(scenes, results):
        logger.debug(
            "%s: %d supercells", scene.scene_id, seg.num_supercells
        )
    return [
        SceneMaps(scene, seg, pc) for scene, (seg, pc) in zip(scenes, results)
    ]


def generate_scenes(config: ExperimentConfig, jobs: int = 1):
    """Benchmark scenes described by the ``scenario`` section."""
    scenario = config.scenario
    specs = random_scene_specs(
        scenario.n_scenes,
        scenario.seed,
        extent=scenario.extent,
        resolution=scenario.resolution,
        max_objects=scenario.max_objects,
    )
    return build_dataset(
        specs,
        scenario.curves(),
        scenario.traversal_plan(),
        scenario.seed,
        jobs,
    )


def fit_classifier(
    name: str,
    training: Sequence[LabeledSequence],
    config: ExperimentConfig,
    bakis_length: int | None = None,
    seed: int | None = None,
):
    """
    Train the named classifier on labelled sequences.

    Returns a HierarchicalModel for ``hmm`` and a baseline classifier
    otherwise.
    """
    if not training:
        raise InvalidParams("no training sequences")
    seed = config.scenario.seed if seed is None else seed
    labels = [label for seq in training for label in seq.truth]
    if name == "hmm":
        model = config.model
        return train_hierarchical(
            [(seq.obs.frames, seq.truth) for seq in training],
            CLASS_NAMES,
            bakis_length or model.bakis_length,
            model.training(seed),
            model.init,
            model.mode,
            manual_mean_table(),
        )
    if name == "majority":
        return MajorityClassifier.fit(labels)
    if name == "random":
        return RandomClassifier.fit(labels, seed)
    if name == "kmeans":
        frames = np.concatenate([seq.obs.frames for seq in training])
        return KMeansClassifier.fit(frames, labels, config.classifier.k, seed)
    raise InvalidParams(f"unknown classifier {name!r}")


def predict_sequences(
    classifier, sequences: Sequence[LabeledSequence], config
) -> list[list[str]]:
    """Per-frame predictions for every sequence, in sequence order."""
    if isinstance(classifier, HierarchicalModel):
        decoding = config.model.decoding()
        return [
            decode_path(classifier, seq.obs, decoding) for seq in sequences
        ]
    # one pass over all frames so seeded draws do not repeat per sequence
    frames = np.concatenate([seq.obs.frames for seq in sequences])
    flat = classifier.predict(frames)
    bounds = np.cumsum([len(seq.obs) for seq in sequences])[:-1]
    parts = np.split(np.array(flat, dtype=object), bounds)
    return [list(part) for part in parts]


def classifier_to_dict(classifier) -> dict:
    if isinstance(classifier, HierarchicalModel):
        return {"kind": "hmm", "model": classifier.to_dict()}
    return classifier.to_dict()


def classifier_from_json(data: dict):
    if data.get("kind") == "hmm":
        return HierarchicalModel.from_dict(data["model"])
    return classifier_from_dict(data)


@dataclass
class ExperimentResult:
    """
    Scores and per-frame predictions of one run.

    Parameters
    ----------
    run_id : str
        Content hash of the configuration and sweep point
    representation, classifier : str
        What was evaluated
    bakis_length : int
        States per class submodel (recorded for baselines too)
    predictions : list of dict
        ``scene_id``, ``truth`` and ``predicted`` labels per test sequence
    confusion : ConfusionMatrix
        Pooled over all test frames
    macro_f1 : float
    per_class_f1 : dict
    provenance : dict
        Configuration, seeds, split and library versions
    """

    run_id: str
    representation: str
    classifier: str
    bakis_length: int
    predictions: list[dict]
    confusion: ConfusionMatrix
    macro_f1: float
    per_class_f1: dict[str, float]
    provenance: dict = field(default_factory=dict)
    repeat: int = 0

    def summary_row(self) -> dict:
        row = {
            "run_id": self.run_id,
            "repeat": self.repeat,
            "representation": self.representation,
            "classifier": self.classifier,
            "bakis_length": self.bakis_length,
            "macro_f1": self.macro_f1,
        }
        for name, value in self.per_class_f1.items():
            row[f"f1_{name}"] = value
        return row

    def frame_rows(self) -> list[dict]:
        return [
            {
                "run_id": self.run_id,
                "scene_id": part["scene_id"],
                "frame": t,
                "truth": truth,
                "predicted": predicted,
            }
            for part in self.predictions
            for t, (truth, predicted) in enumerate(
                zip(part["truth"], part["predicted"])
            )
        ]

    def to_dict(self) -> dict:
        return {
            **self.summary_row(),
            "per_class_f1": self.per_class_f1,
            "confusion": self.confusion.to_dict(),
            "predictions": self.predictions,
            "provenance": self.provenance,
        }


def run_id_for(config: ExperimentConfig, **point) -> str:
    text = json.dumps(
        {"config": config.to_dict(), "point": point}, sort_keys=True
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def library_versions() -> dict[str, str]:
    import django
    import scipy
    import sklearn

    from . import __version__

    return {
        "sogm_decoder": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "django": django.get_version(),
    }


def evaluate(
    maps: Sequence[SceneMaps],
    config: ExperimentConfig,
    representation=None,
    classifier: str | None = None,
    bakis_length: int | None = None,
    repeat: int = 0,
) -> ExperimentResult:
    """
    One train/test evaluation on already segmented scenes.

    ``repeat`` selects the split: repeat ``r`` shuffles with the seed pair
    ``(scenario.seed, r)``.
    """
    rep = RepresentationTag(
        representation or config.evaluation.representation
    ).value
    name = classifier or config.classifier.name
    length = bakis_length or config.model.bakis_length
    scenario = config.scenario
    train_idx, test_idx = split_scenes(
        len(maps), scenario.train_fraction, [scenario.seed, repeat]
    )
    sequences = [labeled_sequence(m, rep) for m in maps]
    training = [sequences[i] for i in train_idx]
    testing = [sequences[i] for i in test_idx]

    model = fit_classifier(name, training, config, length, scenario.seed)
    predicted = predict_sequences(model, testing, config)
    truth = [label for seq in testing for label in seq.truth]
    flat = [label for part in predicted for label in part]
    matrix = confusion(truth, flat, CLASS_NAMES)
    per_class = matrix.per_class_f1()
    score = macro_f1(truth, flat, CLASS_NAMES)

    point = {
        "representation": rep,
        "classifier": name,
        "bakis_length": length,
        "repeat": repeat,
    }
    provenance = {
        "config": config.to_dict(),
        "seeds": {
            "scenario": scenario.seed,
            "segmentation": config.segmentation.rng_seed,
            "split": [scenario.seed, repeat],
        },
        "train_scenes": [sequences[i].scene_id for i in train_idx],
        "test_scenes": [sequences[i].scene_id for i in test_idx],
        "versions": library_versions(),
    }
    if isinstance(model, HierarchicalModel):
        provenance["training"] = model.metadata
    logger.info(
        "%s/%s/bakis=%d repeat %d: macro-F1 %.4f",
        rep,
        name,
        length,
        repeat,
        score,
    )
    return ExperimentResult(
        run_id=run_id_for(config, **point),
        representation=rep,
        classifier=name,
        bakis_length=length,
        predictions=[
            {
                "scene_id": seq.scene_id,
                "truth": seq.truth,
                "predicted": list(part),
            }
            for seq, part in zip(testing, predicted)
        ],
        confusion=matrix,
        macro_f1=score,
        per_class_f1=per_class,
        provenance=provenance,
        repeat=repeat,
    )


def run_experiment(
    config: ExperimentConfig, jobs: int = 1, scenes=None
) -> ExperimentResult:
    """
    Generate (unless ``scenes`` is given), segment, train and score.

    Raises
    ------
    InvalidParams
        On configuration inconsistencies
    """
    scenes = scenes if scenes is not None else generate_scenes(config, jobs)
    maps = segment_scenes(scenes, config, jobs)
    return evaluate(maps, config)


def sweep_points(config: ExperimentConfig) -> list[dict]:
    """Representation x classifier x bakis_length x repeat grid."""
    evaluation = config.evaluation
    representations = evaluation.representations or (
        evaluation.representation,
    )
    classifiers = evaluation.classifiers or (config.classifier.name,)
    lengths = evaluation.bakis_lengths or (config.model.bakis_length,)
    return [
        {
            "representation": rep,
            "classifier": name,
            "bakis_length": length,
            "repeat": repeat,
        }
        for rep in representations
        for name in classifiers
        for length in lengths
        for repeat in range(evaluation.repeats)
    ]


def run_sweep(
    config: ExperimentConfig, jobs: int = 1, scenes=None
) -> list[ExperimentResult]:
    """
    Evaluate every sweep point on one set of segmented scenes.

    Baselines do not depend on the Bakis length; they are evaluated at the
    first length only.
    """
    scenes = scenes if scenes is not None else generate_scenes(config, jobs)
    maps = segment_scenes(scenes, config, jobs)
    points = sweep_points(config)
    first_length = points[0]["bakis_length"]
    results = []
    for point in points:
        baseline = point["classifier"] != "hmm"
        if baseline and point["bakis_length"] != first_length:
            continue
        results.append(evaluate(maps, config, **point))
    logger.info("sweep finished: %d evaluations", len(results))
    return results


def summary_rows(results: Sequence[ExperimentResult]) -> list[dict]:
    return [result.summary_row() for result in results]

