import logging
from pathlib import Path

from ...config import config_from_dict
from ...exceptions import InvalidParams
from ...pipeline import (
    classifier_from_json,
    labeled_sequence,
    predict_sequences,
)
from ...storage import read_json
from ._base import PipelineCommand, load_scene_maps, write_rows

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = (
        "Label every trajectory frame of the test scenes with a trained "
        "model and write per-frame predictions"
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--dataset", required=True, help="dataset dir")
        parser.add_argument("--model", required=True, help="model.json")
        parser.add_argument(
            "--segmentations", help="segment output dir (else recomputed)"
        )
        parser.add_argument(
            "--all-scenes",
            action="store_true",
            help="decode every scene instead of the model's test split",
        )

    def run(self, options):
        stored = read_json(Path(options["model"]))
        try:
            config = config_from_dict(stored["config"])
            classifier = classifier_from_json(stored["classifier"])
            representation = stored["representation"]
        except KeyError as exc:
            raise InvalidParams(
                f"{options['model']} is not a stored model: missing {exc}"
            ) from exc
        out = self.output_dir(options)
        manifest = self.manifest(config)

        maps = load_scene_maps(
            Path(options["dataset"]),
            options.get("segmentations"),
            config,
            self.jobs(options),
        )
        if not options["all_scenes"]:
            wanted = set(stored.get("test_scenes", []))
            maps = [m for m in maps if m.scene.scene_id in wanted]
        if not maps:
            raise InvalidParams("no scenes to decode")

        sequences = [labeled_sequence(m, representation) for m in maps]
        predicted = predict_sequences(classifier, sequences, config)
        rows = [
            {
                "scene_id": seq.scene_id,
                "frame": t,
                "representation": representation,
                "classifier": config.classifier.name,
                "bakis_length": stored.get("bakis_length"),
                "truth": truth,
                "predicted": label,
            }
            for seq, labels in zip(sequences, predicted)
            for t, (truth, label) in enumerate(zip(seq.truth, labels))
        ]
        write_rows(rows, out, "predictions", options["format"])
        manifest.finish(out)
        self.report(f"Decoded {len(sequences)} scenes into {out}")
