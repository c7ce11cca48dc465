"""CSV reports for training runs and evaluations, and a markdown run summary."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable
from dataclasses import asdict
from pathlib import Path

from motionfield.core.training import Metrics, TrainReport

METRIC_COLUMNS = ("variant", "epe", "cd", "cdn", "std_e", "std_v", "params", "seed")


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def train_report_csv(report: TrainReport) -> str:
    """iteration, total loss, then one column per loss term in first-seen order."""
    names = report.term_names
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["iteration", "loss", *names])
    for i, (loss, terms) in enumerate(zip(report.losses, report.terms, strict=True)):
        writer.writerow([i, _cell(loss), *(_cell(terms.get(name)) for name in names)])
    return out.getvalue()


def metrics_csv(rows: Iterable[Metrics]) -> str:
    """Evaluation rows under the fixed header variant,epe,cd,cdn,std_e,std_v,params,seed."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        values = asdict(row)
        writer.writerow([_cell(values[column]) for column in METRIC_COLUMNS])
    return out.getvalue()


def write_train_report(report: TrainReport, path: str | Path) -> None:
    Path(path).write_text(train_report_csv(report), encoding="utf-8")


def write_metrics(rows: Iterable[Metrics], path: str | Path) -> None:
    Path(path).write_text(metrics_csv(rows), encoding="utf-8")


def summary_markdown(
    title: str, rows: Iterable[Metrics], report: TrainReport | None = None
) -> str:
    """A short markdown digest of a run for READMEs and issue threads.

    Args:
        title: Heading of the summary.
        rows: Evaluation rows, one table line each.
        report: Optional training report; adds the iteration count and final loss.

    Returns:
        The markdown text.
    """
    markdown = [f"# {title}\n"]
    if report is not None and report.iterations:
        markdown.append("\n## Training\n")
        markdown.append(f"- **Iterations:** {report.iterations}\n")
        markdown.append(f"- **Final loss:** {_cell(report.final_loss)}\n")
        for name in report.term_names:
            last = report.terms[-1].get(name)
            markdown.append(f"- **{name}:** {_cell(last)}\n")

    markdown.append("\n## Metrics\n\n")
    markdown.append("| " + " | ".join(METRIC_COLUMNS) + " |\n")
    markdown.append("|" + "---|" * len(METRIC_COLUMNS) + "\n")
    for row in rows:
        values = asdict(row)
        markdown.append("| " + " | ".join(_cell(values[c]) or "-" for c in METRIC_COLUMNS) + " |\n")
    return "".join(markdown)
