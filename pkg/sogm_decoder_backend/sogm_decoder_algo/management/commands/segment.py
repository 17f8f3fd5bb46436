import dataclasses
import logging
from pathlib import Path

from ...pipeline import segment_scenes
from ...segmentation import boundary_recall
from ...storage import load_dataset, save_segmentation
from ._base import PipelineCommand, write_rows

logger = logging.getLogger(__name__)

OVERRIDES = ("num_seeds", "compactness", "max_iters", "min_cell_count")


class Command(PipelineCommand):
    help = (
        "Segment the semantic grids of a dataset into supercells and write "
        "a summary with supercell counts, variance and boundary recall"
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", required=True, help="dataset dir")
        parser.add_argument("--num-seeds", type=int)
        parser.add_argument("--compactness", type=float)
        parser.add_argument("--max-iters", type=int)
        parser.add_argument("--min-cell-count", type=int)

    def run(self, options):
        config = self.load_config(options)
        changes = {
            key: options[key]
            for key in OVERRIDES
            if options.get(key) is not None
        }
        config = dataclasses.replace(
            config,
            segmentation=dataclasses.replace(config.segmentation, **changes),
        )
        params = config.segmentation.params()
        jobs = self.jobs(options)
        out = self.output_dir(options)
        manifest = self.manifest(config)

        scenes = load_dataset(Path(options["dataset"]))
        rows = []
        for maps in segment_scenes(scenes, config, jobs):
            scene, seg = maps.scene, maps.segmentation
            save_segmentation(seg, params, out / scene.scene_id)
            rows.append(
                {
                    "scene_id": scene.scene_id,
                    "num_supercells": seg.num_supercells,
                    "mean_variance": seg.mean_variance(),
                    "boundary_recall": boundary_recall(
                        seg.labels, scene.truth.labels
                    ),
                }
            )
            logger.info(
                "%s: %d supercells", scene.scene_id, seg.num_supercells
            )
        write_rows(rows, out, "summary", options["format"])
        manifest.finish(out)
        self.report(
            f"Segmented {len(rows)} scenes into {out} with {jobs} job(s)"
        )
