import logging
from pathlib import Path

import pandas as pd

from ...baselines import confusion, macro_f1
from ...exceptions import InvalidParams
from ...models import record_result
from ...pipeline import (
    ExperimentResult,
    run_experiment,
    run_id_for,
    run_sweep,
)
from ...plotting import sweep_plots
from ...scenario import CLASS_NAMES
from ...storage import (
    file_digest,
    load_dataset,
    read_json,
    read_table,
    write_json,
)
from ._base import PipelineCommand, write_rows

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = (
        "Score classifiers by macro-F1: run the configured experiment or "
        "sweep end to end, or score a stored predictions file"
    )

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--dataset", help="stored dataset (else scenes are generated)"
        )
        parser.add_argument(
            "--predictions", help="score this predictions file instead"
        )
        parser.add_argument(
            "--record",
            action="store_true",
            help="store the scores in the run registry",
        )
        parser.add_argument(
            "--plot",
            action="store_true",
            help="write SVG box plots of swept scores",
        )

    def run(self, options):
        config = self.load_config(options)
        out = self.output_dir(options)
        jobs = self.jobs(options)
        manifest = self.manifest(config)

        if options.get("predictions"):
            results = [score_predictions(Path(options["predictions"]))]
            run_id = results[0].run_id
        else:
            scenes = None
            if options.get("dataset"):
                scenes = load_dataset(Path(options["dataset"]))
            if config.evaluation.is_sweep:
                results = run_sweep(config, jobs, scenes)
            else:
                results = [run_experiment(config, jobs, scenes)]
            run_id = run_id_for(config)

        rows = [result.summary_row() for result in results]
        write_rows(rows, out, "scores", options["format"])
        write_json(
            out / "results.json",
            {
                "run_id": run_id,
                "results": [result.to_dict() for result in results],
            },
        )
        if len(results) == 1:
            write_rows(
                results[0].frame_rows(), out, "predictions", options["format"]
            )
        if options["plot"]:
            sweep_plots(pd.DataFrame(rows), out)
        manifest.finish(out)

        if options["record"]:
            run = record_result(results, self.command_name, out, run_id)
            logger.info("recorded run %s", run.run_id)
        best = max(result.macro_f1 for result in results)
        self.report(
            f"Evaluated {len(results)} configurations, best macro-F1 "
            f"{best:.4f}; scores in {out}"
        )


def score_predictions(path: Path) -> ExperimentResult:
    """Macro-F1 of a predictions file written by the decode command."""
    if path.suffix == ".json":
        table = pd.DataFrame(read_json(path))
    else:
        table = read_table(path)
    for column in ("scene_id", "truth", "predicted"):
        if column not in table.columns:
            raise InvalidParams(f"{path} has no {column!r} column")
    truth = table["truth"].astype(str).tolist()
    predicted = table["predicted"].astype(str).tolist()
    matrix = confusion(truth, predicted, CLASS_NAMES)

    def first(column, default):
        if column in table.columns and len(table):
            value = table[column].iloc[0]
            return default if pd.isna(value) else value
        return default

    predictions = [
        {
            "scene_id": scene_id,
            "truth": group["truth"].astype(str).tolist(),
            "predicted": group["predicted"].astype(str).tolist(),
        }
        for scene_id, group in table.groupby("scene_id", sort=False)
    ]
    return ExperimentResult(
        run_id=file_digest(path)[:16],
        representation=str(first("representation", "")),
        classifier=str(first("classifier", "")),
        bakis_length=int(first("bakis_length", 0)),
        predictions=predictions,
        confusion=matrix,
        macro_f1=macro_f1(truth, predicted, CLASS_NAMES),
        per_class_f1=matrix.per_class_f1(),
        provenance={"predictions": str(path)},
    )
