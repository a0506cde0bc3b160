# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import csv
import os

import torch
from fixtures import TempDir
from testtools import TestCase

from mipkd.data.dataset import (
    SOURCE_DIRECTORY,
    DatasetSpec,
    ImageDataset,
    write_dataset,
)
from mipkd.errors import DatasetError
from mipkd.evaluation.report import (
    BicubicUpsampler,
    EvalReport,
    evaluate_model,
    evaluate_pairs,
    markdown_table,
)
from mipkd.evaluation.tests.baseline import BICUBIC_X2, baseline_images
from mipkd.models.backbones import NetworkSpec, build_model


def small_dataset(scale=2):
    spec = DatasetSpec(
        synth_count=3, synth_size=36, synth_seed=5, scale=scale
    )
    return ImageDataset(spec, min_size=0)


class TestEvalReport(TestCase):
    def setUp(self):
        super().setUp()
        self.report = EvalReport(
            "set", 2, 2, [("a", 30.0, 0.9), ("b", 32.5, 0.7)]
        )

    def test_means_recompute_from_rows(self):
        self.assertEqual(31.25, self.report.mean_psnr)
        self.assertAlmostEqual(0.8, self.report.mean_ssim, places=12)

    def test_dict_round_trip(self):
        data = self.report.to_dict()
        self.assertEqual(31.25, data["mean_psnr"])
        self.assertEqual(self.report, EvalReport.from_dict(data))

    def test_write_csv(self):
        path = os.path.join(self.useFixture(TempDir()).path, "set.csv")
        self.report.write_csv(path)
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(["a", "b"], [row["image"] for row in rows])
        self.assertEqual(32.5, float(rows[1]["psnr"]))

    def test_markdown_table(self):
        other = EvalReport("urban", 2, 2, [("x", 25.0, 0.75)])
        table = markdown_table(
            [("scratch", [self.report]), ("mipkd", [self.report, other])]
        )
        lines = table.splitlines()
        self.assertEqual("| Method | set x2 | urban x2 |", lines[0])
        self.assertEqual("| scratch | 31.25/0.8000 | - |", lines[2])
        self.assertEqual(
            "| mipkd | 31.25/0.8000 | 25.00/0.7500 |", lines[3]
        )


class TestEvaluatePairs(TestCase):
    def test_identity_is_capped(self):
        images = [
            ("%d" % i, hr, hr) for i, hr in enumerate(torch.rand(3, 3, 24, 24))
        ]
        report = evaluate_pairs("self", images, 2)
        self.assertEqual(100.0, report.mean_psnr)
        self.assertAlmostEqual(1.0, report.mean_ssim, places=12)
        self.assertEqual(2, report.border_crop)

    def test_rows_are_sorted_by_id(self):
        hr = torch.rand(3, 20, 20)
        report = evaluate_pairs("set", [("b", hr, hr), ("a", hr, hr)], 2)
        self.assertEqual(["a", "b"], [row[0] for row in report.per_image])

    def test_unscorable_images_are_skipped(self):
        good = torch.rand(3, 20, 20)
        tiny = torch.rand(3, 8, 8)
        report = evaluate_pairs(
            "set", [("good", good, good), ("tiny", tiny, tiny)], 2
        )
        self.assertEqual(["good"], [row[0] for row in report.per_image])
        self.assertRaises(
            DatasetError, evaluate_pairs, "set", [("t", tiny, tiny)], 2
        )


class TestEvaluateModel(TestCase):
    def test_bicubic_baseline(self):
        root = self.useFixture(TempDir()).path
        hr_dir = write_dataset(
            os.path.join(root, "baseline"), baseline_images()
        )
        dataset = ImageDataset(
            DatasetSpec(source=SOURCE_DIRECTORY, hr_dir=hr_dir), min_size=0
        )
        report = evaluate_model(BicubicUpsampler(2), dataset, 2)
        self.assertEqual("baseline", report.dataset)
        self.assertEqual(
            sorted(BICUBIC_X2), [row[0] for row in report.per_image]
        )
        for image_id, value, structure in report.per_image:
            expected_psnr, expected_ssim = BICUBIC_X2[image_id]
            self.assertAlmostEqual(expected_psnr, value, delta=1e-3)
            self.assertAlmostEqual(expected_ssim, structure, delta=5e-5)

    def test_deterministic(self):
        dataset = small_dataset(scale=3)
        model = build_model(NetworkSpec(channels=8, blocks=2, scale=3), 0)
        first = evaluate_model(model, dataset, 3)
        second = evaluate_model(model, dataset, 3)
        self.assertEqual(first, second)
        self.assertEqual("synthetic-5", first.dataset)
        self.assertEqual(3, first.border_crop)
        self.assertTrue(model.training)
