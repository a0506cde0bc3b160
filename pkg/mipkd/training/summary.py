# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Tables summarising finished runs."""

import csv
import logging
import os

from mipkd.errors import DatasetError
from mipkd.evaluation.report import markdown_table
from mipkd.training.trainer import RUN_FILE, RunReport

__all__ = [
    "find_runs",
    "summarise_runs",
]

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = (
    "run",
    "method",
    "dataset",
    "scale",
    "psnr",
    "ssim",
    "initial_loss",
    "final_loss",
)


def find_runs(runs_dir):
    """Run directories under runs_dir, sorted by name."""
    runs = []
    for root, dirs, files in os.walk(runs_dir):
        dirs.sort()
        if RUN_FILE in files:
            runs.append(root)
    return sorted(runs)


def summarise_runs(runs_dir):
    """Write summary.csv and summary.md for every run under runs_dir.

    :return: The paths of the two files.
    """
    runs = find_runs(runs_dir)
    if not runs:
        raise DatasetError("No runs found under %s" % runs_dir)
    rows = []
    table = []
    for run_dir in runs:
        report = RunReport.read(run_dir)
        name = os.path.relpath(run_dir, runs_dir)
        method = report.config.get("method", "")
        for eval_report in report.final_evals:
            rows.append(
                [
                    name,
                    method,
                    eval_report.dataset,
                    eval_report.scale,
                    repr(eval_report.mean_psnr),
                    repr(eval_report.mean_ssim),
                    repr(report.initial_loss),
                    repr(report.final_loss),
                ]
            )
        table.append((name, report.final_evals))
    csv_path = os.path.join(runs_dir, "summary.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_FIELDS)
        writer.writerows(rows)
    md_path = os.path.join(runs_dir, "summary.md")
    with open(md_path, "w") as f:
        f.write(markdown_table(table))
    logger.info("Summarised %d runs in %s", len(runs), runs_dir)
    return csv_path, md_path
