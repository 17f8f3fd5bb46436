"""
On-disk formats.

Grids are a JSON manifest plus one ``<name>.<layer>.f32`` blob per layer
(little-endian float32 log-odds, row-major). Segmentations add a
``<name>.labels.u32`` blob, datasets a ``truth.u8`` class-id blob per
scene. Tables (summaries, predictions, scores) are CSV files written with
pandas.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .exceptions import InvalidParams, NotFound
from .grid import EPS, GridSpec, SemanticGrid
from .scenario import GroundTruthGrid, SceneData, SceneSpec
from .segmentation import Segmentation, SegmentationParams
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

GRID_FORMAT = "sogm-grid/1"
SEGMENTATION_FORMAT = "sogm-segmentation/1"
SCENE_FORMAT = "sogm-scene/1"
MANIFEST_NAME = "manifest.json"


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, indent=2, sort_keys=True, default=_plain)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    """
    Raises
    ------
    NotFound
        If the file does not exist
    InvalidParams
        If it is not valid JSON (message carries file, line and column)
    """
    path = Path(path)
    if not path.is_file():
        raise NotFound(f"{path} not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidParams(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _write_blob(path: Path, array: np.ndarray, dtype: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype=dtype).tofile(path)
    return path.name


def _read_blob(path: Path, dtype: str, shape) -> np.ndarray:
    if not path.is_file():
        raise NotFound(f"{path} not found")
    data = np.fromfile(path, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise InvalidParams(
            f"{path} holds {data.size} values, expected {np.prod(shape)}"
        )
    return data.reshape(shape)


def save_grid(grid: SemanticGrid, directory, name: str = "grid") -> Path:
    directory = Path(directory)
    blobs = {
        layer: _write_blob(
            directory / f"{name}.{layer}.f32", grid.log_odds[k], "<f4"
        )
        for k, layer in enumerate(grid.layer_names)
    }
    return write_json(
        directory / f"{name}.json",
        {
            "format": GRID_FORMAT,
            "spec": grid.spec.to_dict(),
            "layers": list(grid.layer_names),
            "eps": EPS,
            "blobs": blobs,
        },
    )


def load_grid(directory, name: str = "grid") -> SemanticGrid:
    directory = Path(directory)
    manifest = read_json(directory / f"{name}.json")
    if manifest.get("format") != GRID_FORMAT:
        raise InvalidParams(f"{directory / name}.json is not a grid manifest")
    spec = GridSpec.from_dict(manifest["spec"])
    layers = manifest["layers"]
    log_odds = np.stack(
        [
            _read_blob(directory / manifest["blobs"][layer], "<f4", spec.shape)
            for layer in layers
        ]
    ).astype(float)
    return SemanticGrid.from_log_odds(spec, layers, log_odds)


def export_grid_csv(grid: SemanticGrid, path) -> Path:
    """One row per cell: ``x``, ``y`` and the probability of each layer."""
    iy, ix = np.indices(grid.spec.shape)
    table = pd.DataFrame({"x": ix.ravel(), "y": iy.ravel()})
    probabilities = grid.probabilities
    for k, layer in enumerate(grid.layer_names):
        table[f"p_{layer}"] = probabilities[k].ravel()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return path


def save_segmentation(
    seg: Segmentation,
    params: SegmentationParams,
    directory,
    name: str = "segmentation",
) -> Path:
    directory = Path(directory)
    blob = _write_blob(
        directory / f"{name}.labels.u32", seg.labels, "<u4"
    )
    return write_json(
        directory / f"{name}.json",
        {
            "format": SEGMENTATION_FORMAT,
            "spec": seg.spec.to_dict(),
            "params": params.to_dict(),
            "num_supercells": seg.num_supercells,
            "mean_variance": seg.mean_variance(),
            "supercells": [cell.to_dict() for cell in seg.supercells],
            "labels": blob,
        },
    )


def load_segmentation(
    grid: SemanticGrid, directory, name: str = "segmentation"
) -> Segmentation:
    """Labels from disk; member statistics are recomputed from ``grid``."""
    directory = Path(directory)
    manifest = read_json(directory / f"{name}.json")
    if manifest.get("format") != SEGMENTATION_FORMAT:
        raise InvalidParams(f"{directory / name}.json is not a segmentation")
    spec = GridSpec.from_dict(manifest["spec"])
    if spec != grid.spec:
        raise InvalidParams("segmentation and grid geometries differ")
    labels = _read_blob(directory / manifest["labels"], "<u4", spec.shape)
    return Segmentation.from_labels(grid, labels.astype(np.int64))


def save_scene(scene: SceneData, directory) -> Path:
    """Grid, ground-truth blob and scene description of one scene."""
    directory = Path(directory)
    save_grid(scene.grid, directory, "grid")
    truth_blob = _write_blob(directory / "truth.u8", scene.truth.labels, "u1")
    return write_json(
        directory / "scene.json",
        {
            "format": SCENE_FORMAT,
            "scene_id": scene.scene_id,
            "spec": scene.spec.to_dict(),
            "trajectory": scene.trajectory.to_dict(),
            "classes": list(scene.truth.classes),
            "truth": truth_blob,
            "grid": "grid.json",
        },
    )


def load_scene(directory) -> SceneData:
    directory = Path(directory)
    description = read_json(directory / "scene.json")
    if description.get("format") != SCENE_FORMAT:
        raise InvalidParams(f"{directory}/scene.json is not a scene")
    spec = SceneSpec.from_dict(description["spec"])
    labels = _read_blob(
        directory / description["truth"], "u1", spec.grid.shape
    )
    truth = GroundTruthGrid(spec.grid, labels, tuple(description["classes"]))
    return SceneData(
        scene_id=description["scene_id"],
        spec=spec,
        grid=load_grid(directory, "grid"),
        truth=truth,
        trajectory=Trajectory.from_dict(description["trajectory"]),
    )


def save_dataset(scenes: Sequence[SceneData], directory) -> list[Path]:
    directory = Path(directory)
    paths = [save_scene(scene, directory / scene.scene_id) for scene in scenes]
    write_json(
        directory / "dataset.json",
        {
            "scenes": [scene.scene_id for scene in scenes],
            "classes": list(scenes[0].truth.classes) if scenes else [],
        },
    )
    logger.info("wrote %d scenes to %s", len(scenes), directory)
    return paths


def load_dataset(directory) -> list[SceneData]:
    """
    Raises
    ------
    NotFound
        If ``directory`` holds no dataset
    """
    directory = Path(directory)
    index = read_json(directory / "dataset.json")
    return [load_scene(directory / scene_id) for scene_id in index["scenes"]]


def write_table(rows: Iterable[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(path, index=False, float_format="%.10g")
    return path


def read_table(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise NotFound(f"{path} not found")
    return pd.read_csv(path)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def content_hashes(directory, exclude=(MANIFEST_NAME,)) -> dict[str, str]:
    """SHA-256 of every file below ``directory`` by relative path."""
    directory = Path(directory)
    return {
        path.relative_to(directory).as_posix(): file_digest(path)
        for path in sorted(directory.rglob("*"))
        if path.is_file() and path.name not in exclude
    }


@dataclass
class RunManifest:
    """
    Provenance of one command run, written as ``manifest.json``.

    Artifacts are listed with their content hashes; timing lives only here
    so every other output is reproducible byte for byte.
    """

    command: str
    config: dict
    seeds: dict
    tool_version: str
    artifacts: dict[str, str] = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    finished: float | None = None

    def finish(self, directory) -> Path:
        self.finished = time.time()
        self.artifacts = content_hashes(directory)
        return write_json(Path(directory) / MANIFEST_NAME, asdict(self))

    @property
    def elapsed(self) -> float | None:
        if self.finished is None:
            return None
        return self.finished - self.started
