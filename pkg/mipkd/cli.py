# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""The `mipkd` command."""

import argparse
import os
import sys

from mipkd.config import config
from mipkd.data.dataset import write_dataset
from mipkd.data.synthetic import synth_textures
from mipkd.errors import (
    ConfigurationError,
    DatasetError,
    DimensionError,
    TeacherModified,
    TrainingDiverged,
)
from mipkd.evaluation.report import markdown_table
from mipkd.log import setup_logging
from mipkd.training.ablations import ABLATIONS, run_ablation
from mipkd.training.chain import distill_chain
from mipkd.training.config import load_chain_config, load_train_config
from mipkd.training.evaluate import evaluate
from mipkd.training.summary import summarise_runs
from mipkd.training.trainer import train

__all__ = [
    "main",
]

EXIT_DOMAIN_ERROR = 2
DOMAIN_ERRORS = (
    ConfigurationError,
    DatasetError,
    DimensionError,
    TeacherModified,
    TrainingDiverged,
)


def _print_reports(label, reports, out):
    out.write(markdown_table([(label, reports)]))


def cmd_train(args, out):
    cfg = load_train_config(args.config, args.override, require_teacher=True)
    report = train(cfg, args.run_dir)
    out.write("%s\n" % report.run_dir)
    _print_reports(cfg.method, report.final_evals, out)


def cmd_eval(args, out):
    reports = evaluate(args.ckpt, args.data)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for report in reports:
            report.write_csv(
                os.path.join(
                    args.out, "%s_x%d.csv" % (report.dataset, report.scale)
                )
            )
    if reports:
        _print_reports(os.path.basename(args.ckpt), reports, out)


def cmd_chain(args, out):
    stages = load_chain_config(args.config, args.override)
    reports = distill_chain(stages, args.run_root)
    out.write(
        markdown_table(
            [(os.path.basename(r.run_dir), r.final_evals) for r in reports]
        )
    )


def cmd_make_data(args, out):
    images = synth_textures(args.count, args.size, args.seed)
    hr_dir = write_dataset(args.out, images, args.scales)
    out.write("%s\n" % hr_dir)


def cmd_report(args, out):
    for path in summarise_runs(args.runs):
        out.write("%s\n" % path)


def cmd_ablate(args, out):
    reports = run_ablation(
        args.config, args.row, args.override, args.run_root
    )
    out.write(
        markdown_table(
            [(row, report.final_evals) for row, report in reports.items()]
        )
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mipkd",
        description="Distil super-resolution networks with prior mixers.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_config(command):
        command.add_argument("--config", required=True)
        command.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override a configuration key, e.g. mixer.grid_cell=2",
        )

    command = commands.add_parser("train", help="Train one run.")
    add_config(command)
    command.add_argument("--run-dir")
    command.set_defaults(func=cmd_train)

    command = commands.add_parser("eval", help="Evaluate a checkpoint.")
    command.add_argument(
        "--ckpt",
        required=True,
        help="A checkpoint file, or bicubic:<scale> for the baseline.",
    )
    command.add_argument("--data", nargs="*", default=[], metavar="DIR")
    command.add_argument("--out", help="Directory for per-image CSVs.")
    command.set_defaults(func=cmd_eval)

    command = commands.add_parser("chain", help="Train a multi-stage chain.")
    add_config(command)
    command.add_argument("--run-root")
    command.set_defaults(func=cmd_chain)

    command = commands.add_parser(
        "make-data", help="Write a synthetic image dataset."
    )
    command.add_argument("--count", type=int, default=32)
    command.add_argument("--size", type=int, default=96)
    command.add_argument("--seed", type=int, default=0)
    command.add_argument(
        "--scales",
        type=int,
        nargs="*",
        default=[],
        help="Also write bicubic LR sets at these scales.",
    )
    command.add_argument("--out", required=True)
    command.set_defaults(func=cmd_make_data)

    command = commands.add_parser("report", help="Summarise finished runs.")
    command.add_argument("--runs", required=True)
    command.set_defaults(func=cmd_report)

    command = commands.add_parser("ablate", help="Run ablation rows.")
    add_config(command)
    command.add_argument(
        "--row",
        action="append",
        choices=sorted(ABLATIONS),
        help="A row to run; repeat for several. Defaults to every row.",
    )
    command.add_argument("--run-root")
    command.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    log_dir = config.get("mipkd_log_dir")
    setup_logging(
        os.path.join(log_dir, "mipkd.log") if log_dir else None,
        config.get("mipkd_log_level") or "INFO",
    )
    try:
        args.func(args, out)
    except DOMAIN_ERRORS as e:
        err.write("mipkd: error: %s\n" % e)
        return EXIT_DOMAIN_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
