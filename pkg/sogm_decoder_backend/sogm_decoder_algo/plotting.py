"""SVG box plots of sweep scores, rendered from the long-format table."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .exceptions import InvalidParams  # noqa: E402


def score_boxplot(
    table: pd.DataFrame,
    group_by: str,
    path,
    metric: str = "macro_f1",
    title: str | None = None,
) -> Path:
    """
    One box per value of ``group_by`` over the ``metric`` column.

    Groups keep their order of first appearance in ``table``. The SVG
    carries no timestamp and fixed element ids, so identical tables give
    identical files.

    Raises
    ------
    InvalidParams
        If a column is missing or the table is empty
    """
    for column in (group_by, metric):
        if column not in table.columns:
            raise InvalidParams(f"score table has no column {column!r}")
    if table.empty:
        raise InvalidParams("nothing to plot")
    groups = list(dict.fromkeys(table[group_by].tolist()))
    values = [
        table.loc[table[group_by] == g, metric].to_numpy() for g in groups
    ]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "sogm", "font.size": 9}):
        fig, ax = plt.subplots(figsize=(1.2 + 0.8 * len(groups), 3.0))
        ax.boxplot(values)
        ax.set_xticks(range(1, len(groups) + 1), [str(g) for g in groups])
        ax.set_xlabel(group_by.replace("_", " "))
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_ylim(0.0, 1.0)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def sweep_plots(table: pd.DataFrame, directory) -> list[Path]:
    """Box plots for every swept column that takes more than one value."""
    directory = Path(directory)
    paths = []
    for column in ("representation", "bakis_length", "classifier"):
        if column in table.columns and table[column].nunique() > 1:
            paths.append(
                score_boxplot(table, column, directory / f"{column}.svg")
            )
    return paths
