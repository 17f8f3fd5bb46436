import dataclasses
import logging
from pathlib import Path

from ...pipeline import (
    RepresentationTag,
    classifier_to_dict,
    fit_classifier,
    labeled_sequence,
    split_scenes,
)
from ...storage import write_json
from ._base import PipelineCommand, load_scene_maps

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = (
        "Train a classifier (hierarchical HMM or baseline) on the training "
        "split of a dataset and write it as model.json"
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", required=True, help="dataset dir")
        parser.add_argument(
            "--segmentations", help="segment output dir (else recomputed)"
        )
        parser.add_argument(
            "--representation",
            choices=[tag.value for tag in RepresentationTag],
        )
        parser.add_argument(
            "--classifier", choices=("hmm", "kmeans", "random", "majority")
        )
        parser.add_argument("--bakis-length", type=int)

    def run(self, options):
        config = self.load_config(options)
        if options.get("classifier"):
            config = dataclasses.replace(
                config,
                classifier=dataclasses.replace(
                    config.classifier, name=options["classifier"]
                ),
            )
        if options.get("bakis_length"):
            config = dataclasses.replace(
                config,
                model=dataclasses.replace(
                    config.model, bakis_length=options["bakis_length"]
                ),
            )
        representation = (
            options.get("representation") or config.evaluation.representation
        )
        out = self.output_dir(options)
        manifest = self.manifest(config)

        maps = load_scene_maps(
            Path(options["dataset"]),
            options.get("segmentations"),
            config,
            self.jobs(options),
        )
        train_idx, test_idx = split_scenes(
            len(maps),
            config.scenario.train_fraction,
            [config.scenario.seed, 0],
        )
        training = [
            labeled_sequence(maps[i], representation) for i in train_idx
        ]
        classifier = fit_classifier(config.classifier.name, training, config)

        write_json(
            out / "model.json",
            {
                "classifier": classifier_to_dict(classifier),
                "representation": representation,
                "bakis_length": config.model.bakis_length,
                "train_scenes": [maps[i].scene.scene_id for i in train_idx],
                "test_scenes": [maps[i].scene.scene_id for i in test_idx],
                "config": config.to_dict(),
            },
        )
        manifest.finish(out)
        self.report(
            f"Trained {config.classifier.name} on {len(training)} scenes "
            f"({representation}) into {out / 'model.json'}"
        )
