"""
Synthetic table-top scenarios.

Stands in for recorded simulation runs: a scene is a table with disc
shaped objects on it, rasterized into ground-truth classes (ground, table,
object). Three classifiers (anomaly, corner, obstacle) are simulated as
noisy inverse sensor models whose mean response depends on the true class
of a cell and its distance to the table edge or the nearest object edge.
A robot sweep over the scene fuses their observations into a semantic grid
and an evaluation trajectory crosses ground, table and object.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .exceptions import InvalidParams
from .grid import (
    GridIndex,
    GridSpec,
    LayerObservation,
    Pose,
    SemanticGrid,
    empty_grid,
    logit,
)
from .trajectory import Trajectory, straight

logger = logging.getLogger(__name__)

CLASS_NAMES = ("ground", "table", "object")
LAYER_NAMES = ("anomaly", "corner", "obstacle")
FEATURES = ("table_edge", "object_edge")

# response anchors read off the layer curves of a robot approaching a mug
P_LOW = 0.00035697064595297
ANOMALY_PLATEAU = 0.88079708814621
OBSTACLE_PEAK = 0.99193799495697
OBSTACLE_BASE = 0.119202919304371
CORNER_BASE = 0.0566524267196655
DIP = 0.348645120859146

DEFAULT_NOISE_SIGMA = 0.5
DEFAULT_MISDETECTION_RATE = 0.2
DEFAULT_SENSOR_RANGE = 0.3
DEFAULT_RESOLUTION = 0.005


@dataclass(frozen=True)
class Disc:
    """Disc shaped object, center and radius in meters."""

    x: float
    y: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParams(f"object radius must be positive: {self}")


@dataclass(frozen=True)
class SceneSpec:
    """
    Table-top scene.

    Parameters
    ----------
    table : tuple of float
        Axis-aligned table rectangle ``(x_min, y_min, x_max, y_max)``
    objects : tuple of Disc
        Objects standing on the table
    grid : GridSpec
        Map geometry; must cover the table
    rng_seed : int
        Seed of the classifier noise of this scene
    """

    table: tuple[float, float, float, float]
    objects: tuple[Disc, ...]
    grid: GridSpec
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(map(float, self.table)))
        object.__setattr__(self, "objects", tuple(self.objects))
        x0, y0, x1, y1 = self.table
        if not (x0 < x1 and y0 < y1):
            raise InvalidParams(f"degenerate table rectangle {self.table}")
        for disc in self.objects:
            inside = (
                x0 <= disc.x - disc.radius
                and disc.x + disc.radius <= x1
                and y0 <= disc.y - disc.radius
                and disc.y + disc.radius <= y1
            )
            if not inside:
                raise InvalidParams(f"object {disc} does not lie on the table")
        gx0, gy0 = self.grid.origin
        gx1 = gx0 + self.grid.width * self.grid.resolution
        gy1 = gy0 + self.grid.height * self.grid.resolution
        if x0 < gx0 or y0 < gy0 or x1 > gx1 or y1 > gy1:
            raise InvalidParams("the grid does not cover the table")

    def to_dict(self) -> dict:
        return {
            "table": list(self.table),
            "objects": [[d.x, d.y, d.radius] for d in self.objects],
            "grid": self.grid.to_dict(),
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        try:
            return cls(
                table=tuple(data["table"]),
                objects=tuple(Disc(*o) for o in data.get("objects", [])),
                grid=GridSpec.from_dict(data["grid"]),
                rng_seed=int(data.get("rng_seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidParams(f"malformed scene description: {exc}") from exc


@dataclass
class GroundTruthGrid:
    """Per-cell class ids (indices into ``classes``), shape ``(H, W)``."""

    spec: GridSpec
    labels: np.ndarray
    classes: tuple[str, ...] = CLASS_NAMES

    def label_at(self, index: GridIndex) -> str:
        ix, iy = self.spec.check_index(index)
        return self.classes[int(self.labels[iy, ix])]

    def labels_at(self, cells: Sequence[GridIndex]) -> list[str]:
        return [self.label_at(cell) for cell in cells]

    def mask(self, name: str) -> np.ndarray:
        return self.labels == self.classes.index(name)

    def counts(self) -> dict[str, int]:
        ids = np.bincount(self.labels.ravel(), minlength=len(self.classes))
        return dict(zip(self.classes, ids.tolist()))


def generate_scene(spec: SceneSpec) -> GroundTruthGrid:
    """Rasterize a scene: object discs, then the table, else ground."""
    xs, ys = spec.grid.cell_centers()
    x0, y0, x1, y1 = spec.table
    labels = np.zeros(spec.grid.shape, dtype=np.uint8)
    labels[(xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)] = 1
    for disc in spec.objects:
        inside = (xs - disc.x) ** 2 + (ys - disc.y) ** 2 <= disc.radius**2
        labels[inside] = 2
    return GroundTruthGrid(spec.grid, labels)


@dataclass(frozen=True)
class ResponseTemplate:
    """Piecewise-linear mean probability over the distance (meters) to a
    scene feature; constant beyond the last knot."""

    feature: str
    distances: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if self.feature not in FEATURES:
            raise InvalidParams(f"unknown feature {self.feature!r}")
        if not self.distances or len(self.distances) != len(
            self.probabilities
        ):
            raise InvalidParams("response knots must pair up")
        if any(not 0.0 < p < 1.0 for p in self.probabilities):
            raise InvalidParams("response probabilities must lie in (0, 1)")
        if any(b < a for a, b in zip(self.distances, self.distances[1:])):
            raise InvalidParams("response distances must be ascending")

    def mean(self, distance):
        return np.interp(distance, self.distances, self.probabilities)


def _flat(feature: str, p: float) -> ResponseTemplate:
    return ResponseTemplate(feature, (0.0,), (p,))


@dataclass(frozen=True)
class ClassifierCurve:
    """
    Simulated classifier feeding one semantic layer.

    Parameters
    ----------
    layer_name : str
        Layer the classifier writes to
    response : dict
        Class name to ResponseTemplate
    noise_sigma : float
        Standard deviation of the fused log-odds noise
    misdetection_rate : float
        Probability that one pose reports the opposite evidence for a cell
    """

    layer_name: str
    response: Mapping[str, ResponseTemplate] = field(hash=False)
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    misdetection_rate: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise InvalidParams("noise_sigma must be >= 0")
        if not 0.0 <= self.misdetection_rate < 1.0:
            raise InvalidParams(
                f"misdetection_rate must lie in [0, 1), "
                f"got {self.misdetection_rate}"
            )

    def mean_probability(
        self, truth: GroundTruthGrid, distances: Mapping[str, np.ndarray]
    ) -> np.ndarray:
        """Mean response of every cell, shape ``(H, W)``."""
        out = np.full(truth.spec.shape, 0.5)
        for name in truth.classes:
            if name not in self.response:
                raise InvalidParams(
                    f"curve {self.layer_name!r} has no response for {name!r}"
                )
            template = self.response[name]
            cells = truth.mask(name)
            out[cells] = template.mean(distances[template.feature][cells])
        return out


def default_curves(
    noise_sigma: float = DEFAULT_NOISE_SIGMA, misdetection_rate: float = 0.0
):
    """Anomaly, corner and obstacle classifier curves."""
    anomaly = ClassifierCurve(
        "anomaly",
        {
            "ground": _flat("object_edge", P_LOW),
            "table": ResponseTemplate(
                "object_edge",
                (0.0, 0.02, 0.04, 0.06, 0.08, 0.10, 0.12),
                (0.7663, 0.6792, 0.5775, 0.4688, 0.2568, 0.0159, P_LOW),
            ),
            "object": ResponseTemplate(
                "object_edge",
                (0.0, 0.02, 0.04),
                (ANOMALY_PLATEAU, 0.8741, 0.8670),
            ),
        },
        noise_sigma,
        misdetection_rate,
    )
    corner = ClassifierCurve(
        "corner",
        {
            "ground": ResponseTemplate(
                "table_edge", (0.0, 0.01, 0.02), (P_LOW, P_LOW, CORNER_BASE)
            ),
            "table": ResponseTemplate(
                "table_edge",
                (0.0, 0.02, 0.03, 0.04),
                (P_LOW, P_LOW, DIP, 0.5),
            ),
            "object": _flat("table_edge", 0.5),
        },
        noise_sigma,
        misdetection_rate,
    )
    obstacle = ClassifierCurve(
        "obstacle",
        {
            "ground": ResponseTemplate(
                "table_edge",
                (0.0, 0.01, 0.02),
                (OBSTACLE_PEAK, OBSTACLE_PEAK, OBSTACLE_BASE),
            ),
            "table": ResponseTemplate(
                "table_edge",
                (0.0, 0.02, 0.03, 0.04, 0.05),
                (OBSTACLE_PEAK, OBSTACLE_PEAK, DIP, P_LOW, 0.5),
            ),
            "object": _flat("table_edge", 0.5),
        },
        noise_sigma,
        misdetection_rate,
    )
    return [anomaly, corner, obstacle]


def manual_mean_table() -> dict[str, list[float]]:
    """Hand-picked log-odds mean per class, ordered like LAYER_NAMES."""
    return {
        "ground": [logit(P_LOW), logit(CORNER_BASE), logit(OBSTACLE_BASE)],
        "table": [logit(P_LOW), 0.0, 0.0],
        "object": [logit(ANOMALY_PLATEAU), 0.0, 0.0],
    }


def feature_distances(truth: GroundTruthGrid) -> dict[str, np.ndarray]:
    """
    Distance (meters) of every cell to the table edge and to the nearest
    object edge, measured from inside or outside as appropriate.
    """
    resolution = truth.spec.resolution
    table = truth.labels >= truth.classes.index("table")
    objects = truth.mask("object")
    return {
        "table_edge": _edge_distance(table) * resolution,
        "object_edge": _edge_distance(objects) * resolution,
    }


def _edge_distance(region: np.ndarray) -> np.ndarray:
    if not region.any() or region.all():
        return np.full(region.shape, np.inf)
    inside = ndimage.distance_transform_edt(region)
    outside = ndimage.distance_transform_edt(~region)
    # cell-center distances, shifted onto the boundary between cells
    return np.where(region, inside, outside) - 0.5


def simulate_classifiers(
    scene: GroundTruthGrid,
    curves: Sequence[ClassifierCurve],
    poses: Sequence[Pose],
    sensor_range: float,
    rng_seed,
) -> list[LayerObservation]:
    """
    Noisy classifier observations for a sequence of poses.

    Every cell within ``sensor_range`` of a pose is observed by each
    classifier. A cell seen from ``k`` poses receives ``logit(mean) / k``
    plus Gaussian noise of standard deviation ``sigma / sqrt(k)`` per frame,
    so after the full sweep it holds ``logit(mean)`` plus noise of
    standard deviation ``sigma``. With probability ``misdetection_rate`` a
    pose reports ``-logit(mean) / k`` instead, so ``f`` misdetections out
    of ``k`` leave ``logit(mean) * (1 - 2 f / k)``. Cells out of range are
    never observed.

    Returns
    -------
    list of LayerObservation
        Pose-major, layer-minor order

    Raises
    ------
    InvalidParams
        If a layer has no curve (or two)
    """
    by_layer = {curve.layer_name: curve for curve in curves}
    if sorted(by_layer) != sorted(LAYER_NAMES) or len(curves) != len(
        LAYER_NAMES
    ):
        raise InvalidParams(
            f"need exactly one curve per layer {LAYER_NAMES}, got "
            f"{[c.layer_name for c in curves]}"
        )
    if not poses:
        return []

    distances = feature_distances(scene)
    means = {
        name: logit(by_layer[name].mean_probability(scene, distances))
        for name in LAYER_NAMES
    }
    xs, ys = scene.spec.cell_centers()
    in_range = [
        (xs - pose.x) ** 2 + (ys - pose.y) ** 2 <= sensor_range**2
        for pose in poses
    ]
    coverage = np.sum(in_range, axis=0)

    rng = np.random.default_rng(rng_seed)
    observations = []
    for visible in in_range:
        iy, ix = np.nonzero(visible)
        share = coverage[iy, ix].astype(float)
        cells = np.stack([ix, iy], axis=1)
        for name in LAYER_NAMES:
            sigma = by_layer[name].noise_sigma
            rate = by_layer[name].misdetection_rate
            values = means[name][iy, ix] / share
            if rate > 0:
                flipped = rng.random(len(values)) < rate
                values = np.where(flipped, -values, values)
            if sigma > 0:
                values = values + rng.normal(0.0, sigma / np.sqrt(share))
            observations.append(LayerObservation(name, cells, values))
    return observations


def sweep_poses(
    spec: GridSpec, sensor_range: float, spacing: float = 0.7
) -> list[Pose]:
    """
    Lawnmower sweep over the whole grid.

    Poses sit on a lattice no coarser than ``spacing * sensor_range``
    (``spacing <= 0.7`` keeps every cell in range of some pose), visited
    row by row in alternating directions.
    """
    if not sensor_range > 0 or not spacing > 0:
        raise InvalidParams("sensor_range and spacing must be positive")
    step = spacing * sensor_range
    x0, y0 = spec.origin
    x1 = x0 + spec.width * spec.resolution
    y1 = y0 + spec.height * spec.resolution
    columns = np.linspace(x0, x1, max(2, math.ceil((x1 - x0) / step) + 1))
    rows = np.linspace(y0, y1, max(2, math.ceil((y1 - y0) / step) + 1))
    poses = []
    for r, y in enumerate(rows):
        heading = 0.0 if r % 2 == 0 else math.pi
        ordered = columns if r % 2 == 0 else columns[::-1]
        poses.extend(Pose(float(x), float(y), heading) for x in ordered)
    return poses


def evaluation_trajectory(spec: SceneSpec, step: float | None = None):
    """
    Straight line across the grid through the first object's center (the
    table center without objects): ground, table, object, table, ground.
    """
    grid = spec.grid
    if spec.objects:
        y = spec.objects[0].y
    else:
        y = 0.5 * (spec.table[1] + spec.table[3])
    half = 0.5 * grid.resolution
    start = (grid.origin[0] + half, y)
    end = (grid.origin[0] + grid.width * grid.resolution - half, y)
    return straight(start, end, step or grid.resolution)


@dataclass(frozen=True)
class TraversalPlan:
    """Sweep and evaluation-trajectory settings of :func:`build_dataset`."""

    sensor_range: float = DEFAULT_SENSOR_RANGE
    sweep_spacing: float = 0.7
    trajectory_step: float | None = None


@dataclass
class SceneData:
    """One generated scene: map, ground truth and evaluation trajectory."""

    scene_id: str
    spec: SceneSpec
    grid: SemanticGrid
    truth: GroundTruthGrid
    trajectory: Trajectory


def scene_seed(rng_seed: int, index: int, spec_seed: int) -> int:
    """Derived noise seed of one scene."""
    sequence = np.random.SeedSequence([int(rng_seed), int(index), spec_seed])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _build_scene(args) -> SceneData:
    index, spec, curves, plan, rng_seed = args
    truth = generate_scene(spec)
    poses = sweep_poses(spec.grid, plan.sensor_range, plan.sweep_spacing)
    observations = simulate_classifiers(
        truth,
        curves,
        poses,
        plan.sensor_range,
        scene_seed(rng_seed, index, spec.rng_seed),
    )
    grid = empty_grid(spec.grid, LAYER_NAMES).fuse(observations)
    trajectory = evaluation_trajectory(spec, plan.trajectory_step)
    logger.debug(
        "scene %d: %d poses, %d observations",
        index,
        len(poses),
        len(observations),
    )
    return SceneData(f"scene_{index:03d}", spec, grid, truth, trajectory)


def build_dataset(
    specs: Sequence[SceneSpec],
    curves: Sequence[ClassifierCurve],
    plan: TraversalPlan = TraversalPlan(),
    rng_seed: int = 0,
    jobs: int = 1,
) -> list[SceneData]:
    """
    Simulate a sweep over every scene and fuse it into a semantic grid.

    Scenes are independent; with ``jobs > 1`` they are built in worker
    processes and returned in input order.

    Raises
    ------
    InvalidParams
        If ``specs`` is empty or a component rejects its input
    """
    if not specs:
        raise InvalidParams("build_dataset needs at least one scene")
    tasks = [
        (index, spec, list(curves), plan, rng_seed)
        for index, spec in enumerate(specs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            scenes = list(pool.map(_build_scene, tasks))
    else:
        scenes = [_build_scene(task) for task in tasks]
    logger.info("built %d scenes", len(scenes))
    return scenes


def random_scene_specs(
    n_scenes: int,
    seed: int,
    extent: float = 0.6,
    resolution: float = DEFAULT_RESOLUTION,
    max_objects: int = 3,
    radius_range: tuple[float, float] = (0.02, 0.05),
) -> list[SceneSpec]:
    """
    Random table-top scenes on a square grid of side ``extent`` meters.

    Tables keep a margin to the grid border so trajectories start and end on
    the ground; objects keep a margin to the table edge and to each other.
    """
    if n_scenes < 1 or max_objects < 0:
        raise InvalidParams("n_scenes must be >= 1 and max_objects >= 0")
    cells = int(round(extent / resolution))
    grid = GridSpec(cells, cells, resolution)
    margin = 0.1 * extent
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n_scenes):
        width = rng.uniform(0.5, 0.7) * extent
        height = rng.uniform(0.5, 0.7) * extent
        x0 = rng.uniform(margin, extent - margin - width)
        y0 = rng.uniform(margin, extent - margin - height)
        table = (x0, y0, x0 + width, y0 + height)

        objects: list[Disc] = []
        wanted = int(rng.integers(1, max_objects + 1)) if max_objects else 0
        for _attempt in range(50 * max(wanted, 1)):
            if len(objects) == wanted:
                break
            radius = rng.uniform(*radius_range)
            pad = radius + 0.06
            if 2 * pad >= min(width, height):
                continue
            disc = Disc(
                rng.uniform(table[0] + pad, table[2] - pad),
                rng.uniform(table[1] + pad, table[3] - pad),
                radius,
            )
            clear = all(
                math.hypot(disc.x - o.x, disc.y - o.y)
                > disc.radius + o.radius + 0.02
                for o in objects
            )
            if clear:
                objects.append(disc)
        specs.append(
            SceneSpec(table, tuple(objects), grid, int(rng.integers(2**31)))
        )
    return specs
