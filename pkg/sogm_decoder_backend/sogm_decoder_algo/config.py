"""
Experiment configuration.

An experiment is described by one JSON document with the sections
``scenario``, ``segmentation``, ``model``, ``classifier`` and
``evaluation``. Every field has a default, so ``{}`` is a valid document.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import CLASSIFIERS
from .exceptions import InvalidParams, NotFound
from .hierarchy import TRAINING_MODES, DecodeConfig
from .hmm import INIT_VAR, REPRESENTATIONS, TrainingConfig
from .scenario import (
    DEFAULT_MISDETECTION_RATE,
    DEFAULT_NOISE_SIGMA,
    DEFAULT_RESOLUTION,
    TraversalPlan,
    default_curves,
)
from .segmentation import SegmentationParams

INIT_STRATEGIES = ("manual_means", "kmeans")
BENCHMARK_VAR_FLOOR = 0.05


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic benchmark and its train/test split."""

    n_scenes: int = 20
    seed: int = 0
    extent: float = 0.6
    resolution: float = DEFAULT_RESOLUTION
    max_objects: int = 3
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    misdetection_rate: float = DEFAULT_MISDETECTION_RATE
    sensor_range: float = 0.3
    sweep_spacing: float = 0.7
    trajectory_step: float | None = None
    train_fraction: float = 0.7

    def validate(self):
        _require(self.n_scenes >= 1, "scenario.n_scenes must be >= 1")
        _require(self.extent > 0, "scenario.extent must be positive")
        _require(self.resolution > 0, "scenario.resolution must be positive")
        _require(self.max_objects >= 0, "scenario.max_objects must be >= 0")
        _require(self.noise_sigma >= 0, "scenario.noise_sigma must be >= 0")
        _require(
            0.0 <= self.misdetection_rate < 1.0,
            "scenario.misdetection_rate must lie in [0, 1)",
        )
        _require(
            0.0 < self.train_fraction < 1.0,
            "scenario.train_fraction must lie in (0, 1)",
        )

    def traversal_plan(self) -> TraversalPlan:
        return TraversalPlan(
            self.sensor_range, self.sweep_spacing, self.trajectory_step
        )

    def curves(self):
        return default_curves(self.noise_sigma, self.misdetection_rate)


@dataclass(frozen=True)
class SegmentationConfig:
    num_seeds: int = 64
    compactness: float = 0.25
    max_iters: int = 10
    min_cell_count: int = 4
    rng_seed: int = 0

    def validate(self):
        self.params()

    def params(self) -> SegmentationParams:
        return _wrap("segmentation", SegmentationParams, self)


@dataclass(frozen=True)
class ModelConfig:
    """Hierarchical HMM structure, initialization and training."""

    bakis_length: int = 8
    skip: int = 1
    n_components: int = 1
    init: str = "manual_means"
    mode: str = "per_class"
    max_iters: int = 100
    tol: float = 1e-4
    # log-odds squared; repeated supercell frames collapse states below it
    var_floor: float = BENCHMARK_VAR_FLOOR
    init_var: float = INIT_VAR
    min_segment_length: int = 3

    def validate(self):
        _require(self.bakis_length >= 1, "model.bakis_length must be >= 1")
        _require(
            self.init in INIT_STRATEGIES,
            f"model.init must be one of {INIT_STRATEGIES}",
        )
        _require(
            self.mode in TRAINING_MODES,
            f"model.mode must be one of {TRAINING_MODES}",
        )
        self.training(0)
        self.decoding()

    def training(self, seed: int) -> TrainingConfig:
        return _build(
            "model",
            TrainingConfig,
            max_iters=self.max_iters,
            tol=self.tol,
            var_floor=self.var_floor,
            n_components=self.n_components,
            skip=self.skip,
            init_var=self.init_var,
            seed=seed,
        )

    def decoding(self) -> DecodeConfig:
        return _build(
            "model", DecodeConfig, min_segment_length=self.min_segment_length
        )


@dataclass(frozen=True)
class ClassifierConfig:
    name: str = "hmm"
    k: int = 3

    def validate(self):
        _require(
            self.name in CLASSIFIERS,
            f"classifier.name must be one of {CLASSIFIERS}",
        )
        _require(self.k >= 1, "classifier.k must be >= 1")


@dataclass(frozen=True)
class EvaluationConfig:
    """
    Representation of the single run plus optional sweeps.

    Empty sweep lists keep the single-run value; ``repeats`` re-draws the
    train/test split that many times per sweep point.
    """

    representation: str = "clustered"
    representations: tuple[str, ...] = ()
    bakis_lengths: tuple[int, ...] = ()
    classifiers: tuple[str, ...] = ()
    repeats: int = 1

    def validate(self):
        for rep in (self.representation,) + self.representations:
            _require(
                rep in REPRESENTATIONS,
                f"evaluation.representation {rep!r} not in {REPRESENTATIONS}",
            )
        for name in self.classifiers:
            _require(
                name in CLASSIFIERS,
                f"evaluation.classifiers entry {name!r} not in {CLASSIFIERS}",
            )
        _require(
            all(
                isinstance(length, int)
                and not isinstance(length, bool)
                and length >= 1
                for length in self.bakis_lengths
            ),
            "evaluation.bakis_lengths must be integers >= 1",
        )
        _require(self.repeats >= 1, "evaluation.repeats must be >= 1")

    @property
    def is_sweep(self) -> bool:
        return bool(
            self.representations
            or self.bakis_lengths
            or self.classifiers
            or self.repeats > 1
        )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    segmentation: SegmentationConfig = field(
        default_factory=SegmentationConfig
    )
    model: ModelConfig = field(default_factory=ModelConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        for section in SECTIONS:
            getattr(self, section).validate()
        if self.classifier.name == "kmeans":
            _require(
                self.classifier.k >= 3,
                "classifier.k must cover the three classes",
            )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, seed=None) -> "ExperimentConfig":
        if seed is None:
            return self
        return dataclasses.replace(
            self, scenario=dataclasses.replace(self.scenario, seed=seed)
        )


SECTIONS = {
    "scenario": ScenarioConfig,
    "segmentation": SegmentationConfig,
    "model": ModelConfig,
    "classifier": ClassifierConfig,
    "evaluation": EvaluationConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    """
    Build an ExperimentConfig from parsed JSON.

    Raises
    ------
    InvalidParams
        On unknown sections or keys, wrong value types or values out of
        range; the message names the dotted key
    """
    if not isinstance(data, dict):
        raise InvalidParams("the experiment config must be a JSON object")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise InvalidParams(f"unknown config sections {sorted(unknown)}")
    sections = {
        name: _section(name, cls, data.get(name, {}))
        for name, cls in SECTIONS.items()
    }
    return ExperimentConfig(**sections)


def load_config(path) -> ExperimentConfig:
    """
    Read an experiment config file; ``None`` gives the defaults.

    Raises
    ------
    NotFound
        If the file does not exist
    InvalidParams
        On malformed JSON (with file, line and column) or invalid values
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise NotFound(f"config file {path} not found")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidParams(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    try:
        return config_from_dict(data)
    except InvalidParams as exc:
        raise InvalidParams(f"{path}: {exc}") from exc


def _section(name, cls, values):
    if not isinstance(values, dict):
        raise InvalidParams(f"config section {name!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        keys = ", ".join(f"{name}.{key}" for key in sorted(unknown))
        raise InvalidParams(f"unknown config keys: {keys}")
    kwargs = {}
    for key, value in values.items():
        default = fields[key].default
        kwargs[key] = _coerce(f"{name}.{key}", value, default)
    return cls(**kwargs)


def _coerce(key, value, default):
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise InvalidParams(f"{key} must be a list")
        return tuple(value)
    if value is None and default is None:
        return None
    if isinstance(default, bool) or isinstance(value, bool):
        if not isinstance(value, bool) or not isinstance(default, bool):
            raise InvalidParams(f"{key} has the wrong type")
        return value
    if isinstance(default, int):
        if not isinstance(value, int):
            raise InvalidParams(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if not isinstance(value, (int, float)):
            raise InvalidParams(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise InvalidParams(f"{key} must be a string, got {value!r}")
    return value


def _require(condition: bool, message: str):
    if not condition:
        raise InvalidParams(message)


def _build(section, cls, **kwargs):
    try:
        return cls(**kwargs)
    except InvalidParams as exc:
        raise InvalidParams(f"{section}: {exc}") from exc


def _wrap(section, cls, source):
    return _build(section, cls, **dataclasses.asdict(source))
