"""Shared plumbing of the pipeline management commands."""

import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ... import __version__
from ...config import load_config
from ...exceptions import InvalidParams, SogmError
from ...pipeline import SceneMaps, segment_scenes
from ...segmentation import to_point_cloud
from ...storage import (
    RunManifest,
    load_dataset,
    load_segmentation,
    write_json,
    write_table,
)

logger = logging.getLogger(__name__)


class PipelineCommand(BaseCommand):
    """
    Base class of the pipeline stages.

    Subclasses implement :meth:`run`; package errors become a
    ``CommandError`` whose return code is the error's exit code (2 invalid
    input, 3 missing artifact, 4 numerical failure).
    """

    requires_migrations_checks = False
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("--config", help="experiment config (JSON)")
        parser.add_argument("--out", help="output directory")
        parser.add_argument(
            "--seed", type=int, help="overrides scenario.seed"
        )
        parser.add_argument(
            "--jobs", type=int, help="worker processes (default SOGM_JOBS)"
        )
        parser.add_argument(
            "--format",
            choices=("csv", "json"),
            default="csv",
            help="format of tabular outputs",
        )

    def handle(self, *args, **options):
        try:
            return self.run(options)
        except SogmError as exc:
            logger.error("%s failed: %s", self.command_name, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, options):
        raise NotImplementedError

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def load_config(self, options):
        config = load_config(options.get("config"))
        return config.with_overrides(seed=options.get("seed"))

    def output_dir(self, options) -> Path:
        out = Path(options.get("out") or settings.SOGM_OUTPUT_DIR)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def jobs(self, options) -> int:
        jobs = options.get("jobs") or settings.SOGM_JOBS
        if jobs < 1:
            raise InvalidParams(f"--jobs must be >= 1, got {jobs}")
        return jobs

    def manifest(self, config) -> RunManifest:
        return RunManifest(
            command=self.command_name,
            config=config.to_dict(),
            seeds={
                "scenario": config.scenario.seed,
                "segmentation": config.segmentation.rng_seed,
            },
            tool_version=__version__,
        )

    def report(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))


def load_scene_maps(dataset, segmentations, config, jobs) -> list[SceneMaps]:
    """
    Scenes of a stored dataset with their segmentations, read from
    ``segmentations`` when given and computed otherwise.
    """
    scenes = load_dataset(dataset)
    if not segmentations:
        logger.info(
            "no segmentations given, segmenting %d scenes", len(scenes)
        )
        return segment_scenes(scenes, config, jobs)
    maps = []
    for scene in scenes:
        seg = load_segmentation(
            scene.grid, Path(segmentations) / scene.scene_id
        )
        maps.append(SceneMaps(scene, seg, to_point_cloud(seg)))
    return maps


def write_rows(rows, out: Path, name: str, fmt: str) -> Path:
    """Write a list of flat records as ``<name>.csv`` or ``<name>.json``."""
    path = out / f"{name}.{fmt}"
    if fmt == "json":
        return write_json(path, list(rows))
    return write_table(rows, path)
