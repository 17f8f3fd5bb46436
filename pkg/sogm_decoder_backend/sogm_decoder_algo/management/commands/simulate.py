import logging

from ...pipeline import generate_scenes
from ...scenario import SceneSpec, build_dataset
from ...storage import export_grid_csv, read_json, save_dataset
from ._base import PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = (
        "Generate synthetic table-top scenes, fuse a simulated sweep of the "
        "anomaly, corner and obstacle classifiers into semantic grids and "
        "write the dataset"
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--scenes",
            help="JSON list of scene descriptions instead of random scenes",
        )
        parser.add_argument(
            "--export-csv",
            action="store_true",
            help="also write a per-cell probability CSV for every scene",
        )

    def run(self, options):
        config = self.load_config(options)
        out = self.output_dir(options)
        jobs = self.jobs(options)
        manifest = self.manifest(config)

        if options.get("scenes"):
            specs = [
                SceneSpec.from_dict(s) for s in read_json(options["scenes"])
            ]
            scenario = config.scenario
            scenes = build_dataset(
                specs,
                scenario.curves(),
                scenario.traversal_plan(),
                scenario.seed,
                jobs,
            )
        else:
            scenes = generate_scenes(config, jobs)

        save_dataset(scenes, out)
        if options["export_csv"]:
            for scene in scenes:
                export_grid_csv(scene.grid, out / scene.scene_id / "grid.csv")
        manifest.finish(out)
        self.report(f"Wrote {len(scenes)} scenes to {out}")
