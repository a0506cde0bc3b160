# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import io
import logging
import os

from fixtures import EnvironmentVariable, TempDir
from testtools import TestCase

from mipkd.cli import main
from mipkd.training.tests.runs import (
    tiny_document,
    write_config,
    write_teacher,
)


def remove_cli_handlers():
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_mipkd_handler", False):
            root.removeHandler(handler)
            handler.close()


class TestMain(TestCase):
    def setUp(self):
        super().setUp()
        self.root = self.useFixture(TempDir()).path
        self.useFixture(EnvironmentVariable("MIPKD_SEED"))
        self.useFixture(EnvironmentVariable("MIPKD_LOG_DIR", self.root))
        self.addCleanup(remove_cli_handlers)

    def run_main(self, *argv):
        out = io.StringIO()
        err = io.StringIO()
        status = main(list(argv), out, err)
        return status, out.getvalue(), err.getvalue()

    def test_make_data(self):
        out_dir = os.path.join(self.root, "data")
        status, out, _ = self.run_main(
            "make-data",
            "--count",
            "2",
            "--size",
            "32",
            "--scales",
            "2",
            "--out",
            out_dir,
        )
        self.assertEqual(0, status)
        hr_dir = os.path.join(out_dir, "hr")
        self.assertEqual(hr_dir + "\n", out)
        self.assertEqual(["0000.png", "0001.png"], sorted(os.listdir(hr_dir)))
        self.assertEqual(
            ["0000.png", "0001.png"],
            sorted(os.listdir(os.path.join(out_dir, "hr_x2"))),
        )

    def test_train_and_report(self):
        teacher_ckpt = write_teacher(self.root)
        path = write_config(self.root, tiny_document(self.root, teacher_ckpt))
        run_dir = os.path.join(self.root, "runs", "cli")
        status, out, err = self.run_main(
            "train",
            "--config",
            path,
            "--override",
            "iters=1",
            "--override",
            "mixer.mask_strategy=grid",
            "--run-dir",
            run_dir,
        )
        self.assertEqual(0, status, err)
        self.assertTrue(out.startswith(run_dir + "\n"))
        self.assertIn("| mipkd |", out)
        self.assertTrue(os.path.exists(os.path.join(run_dir, "final.ckpt")))
        self.assertTrue(
            os.path.exists(os.path.join(self.root, "mipkd.log"))
        )

        status, out, _ = self.run_main(
            "report", "--runs", os.path.join(self.root, "runs")
        )
        self.assertEqual(0, status)
        self.assertIn("summary.csv", out)
        self.assertIn("summary.md", out)

    def test_eval_bicubic(self):
        data_dir = os.path.join(self.root, "set")
        self.run_main(
            "make-data", "--count", "1", "--size", "32", "--out", data_dir
        )
        csv_dir = os.path.join(self.root, "scores")
        status, out, _ = self.run_main(
            "eval",
            "--ckpt",
            "bicubic:2",
            "--data",
            os.path.join(data_dir, "hr"),
            "--out",
            csv_dir,
        )
        self.assertEqual(0, status)
        self.assertIn("| bicubic:2 |", out)
        self.assertIn("set x2", out)
        self.assertEqual(["set_x2.csv"], os.listdir(csv_dir))

    def test_domain_errors_exit_with_status_2(self):
        status, out, err = self.run_main(
            "train", "--config", os.path.join(self.root, "missing.yaml")
        )
        self.assertEqual(2, status)
        self.assertEqual("", out)
        self.assertTrue(err.startswith("mipkd: error: "))

    def test_missing_teacher_is_a_domain_error(self):
        path = write_config(self.root, tiny_document(self.root))
        status, _, err = self.run_main("train", "--config", path)
        self.assertEqual(2, status)
        self.assertIn("teacher_ckpt", err)

    def test_unknown_ablation_row(self):
        self.assertRaises(
            SystemExit,
            self.run_main,
            "ablate",
            "--config",
            "x.yaml",
            "--row",
            "nonsense",
        )
