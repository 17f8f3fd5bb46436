from django.db import models, transaction
from django.db.models import Avg, Count, Max, Min

"""
Run registry for decoding experiments.

This module contains the models that keep a record of pipeline runs:
- ExperimentRun: One invocation of a pipeline command with its configuration
- ExperimentScore: One evaluated combination of representation, classifier
  and Bakis length inside a run

Runs are stored only when a command is called with ``--record``.
"""

GROUPINGS = ("representation", "classifier", "bakis_length")


class ExperimentRun(models.Model):
    """
    ExperimentRun model representing one pipeline command invocation. This
    class stores the configuration snapshot and provides methods for
    summarizing the scores of the run.

    Parameters
    ----------
    run_id : str
        Content hash of the configuration (unique)
    command : str
        Pipeline command that produced the run (e.g., "evaluate")
    config : dict
        Experiment configuration snapshot
    seed : int
        Scenario seed of the run
    tool_version : str
        Package version that produced the run
    created : datetime
        When the run was recorded
    artifact_dir : str
        Directory holding the run's files

    Methods
    -------
    get_score_statistics(group_by=None)
        Returns macro-F1 statistics over the run's scores
    __str__()
        Returns a string representation of the run (command and id)
    """

    run_id = models.CharField(max_length=64, unique=True)
    command = models.CharField(max_length=32)
    config = models.JSONField(default=dict)
    seed = models.BigIntegerField(default=0)
    tool_version = models.CharField(max_length=32)
    created = models.DateTimeField(auto_now_add=True)
    artifact_dir = models.CharField(max_length=500, blank=True)

    def get_score_statistics(self, group_by=None):
        """
        Returns mean, min, max and count of macro-F1 over the run's scores,
        either overall or as a list with one entry per value of
        ``group_by`` (representation, classifier or bakis_length)
        """
        scores = ExperimentScore.objects.filter(run=self)

        def safe_round(value):
            return round(value, 4) if value is not None else None

        def summarize(row):
            return {
                "mean": safe_round(row["mean"]),
                "min": safe_round(row["min"]),
                "max": safe_round(row["max"]),
                "count": row["count"],
            }

        aggregates = {
            "mean": Avg("macro_f1"),
            "min": Min("macro_f1"),
            "max": Max("macro_f1"),
            "count": Count("id"),
        }
        if group_by is None:
            return summarize(scores.aggregate(**aggregates))
        if group_by not in GROUPINGS:
            raise ValueError(f"cannot group scores by {group_by!r}")
        rows = (
            scores.values(group_by).annotate(**aggregates).order_by(group_by)
        )
        return [{group_by: row[group_by], **summarize(row)} for row in rows]

    def __str__(self):
        return f"{self.command}: {self.run_id}"


class ExperimentScore(models.Model):
    """
    ExperimentScore model representing the evaluation of one sweep point.

    Parameters
    ----------
    run : ForeignKey
        Reference to the ExperimentRun the score belongs to
    representation : str
        Input representation (cellwise, clustered or pointcloud)
    classifier : str
        Classifier name (hmm, kmeans, random or majority)
    bakis_length : int
        States per class submodel
    repeat : int
        Index of the train/test split
    macro_f1 : float
        Unweighted mean of the per-class F1 scores, between 0 and 1
    per_class_f1 : dict
        F1 score of each class

    Meta
    ----
    unique_together : [run, representation, classifier, bakis_length, repeat]
        Ensures one score per sweep point and split
    """

    run = models.ForeignKey(
        ExperimentRun, on_delete=models.CASCADE, related_name="scores"
    )
    representation = models.CharField(max_length=16)
    classifier = models.CharField(max_length=16)
    bakis_length = models.PositiveIntegerField()
    repeat = models.PositiveIntegerField(default=0)
    macro_f1 = models.FloatField()
    per_class_f1 = models.JSONField(default=dict)

    class Meta:
        unique_together = [
            "run",
            "representation",
            "classifier",
            "bakis_length",
            "repeat",
        ]

    def __str__(self):
        return (
            f"{self.representation}/{self.classifier}/{self.bakis_length} "
            f"(macro-F1: {self.macro_f1:.3f})"
        )


def record_result(results, command, artifact_dir="", run_id=None):
    """
    Store experiment results as one ExperimentRun with a score per result.

    Parameters
    ----------
    results : ExperimentResult or list of ExperimentResult
        Results sharing one configuration
    command : str
        Name of the command that produced them
    artifact_dir : str
        Where the run's files were written
    run_id : str, optional
        Registry key; defaults to the first result's run id

    Returns
    -------
    ExperimentRun
        The stored run; a run with the same id is replaced
    """
    from . import __version__

    if not isinstance(results, (list, tuple)):
        results = [results]
    if not results:
        raise ValueError("no results to record")
    first = results[0]
    provenance = first.provenance
    with transaction.atomic():
        run, _ = ExperimentRun.objects.update_or_create(
            run_id=run_id or first.run_id,
            defaults={
                "command": command,
                "config": provenance.get("config", {}),
                "seed": provenance.get("seeds", {}).get("scenario", 0),
                "tool_version": __version__,
                "artifact_dir": str(artifact_dir),
            },
        )
        run.scores.all().delete()
        ExperimentScore.objects.bulk_create(
            [
                ExperimentScore(
                    run=run,
                    representation=result.representation,
                    classifier=result.classifier,
                    bakis_length=result.bakis_length,
                    repeat=result.repeat,
                    macro_f1=result.macro_f1,
                    per_class_f1=result.per_class_f1,
                )
                for result in results
            ]
        )
    return run
