# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Whole-dataset evaluation and its reports."""

import csv
import dataclasses
import logging

import torch
from torch import nn

from mipkd.data.resize import bicubic_resize
from mipkd.errors import DatasetError, DimensionError
from mipkd.evaluation.metrics import psnr, rgb_to_y, shave, ssim
from mipkd.models.backbones import SRForward

__all__ = [
    "BicubicUpsampler",
    "EvalReport",
    "evaluate_model",
    "evaluate_pairs",
    "markdown_table",
]

logger = logging.getLogger(__name__)

CSV_FIELDS = ("dataset", "scale", "image", "psnr", "ssim")


@dataclasses.dataclass
class EvalReport:
    """PSNR/SSIM of every image of one dataset, ordered by image id."""

    dataset: str
    scale: int
    border_crop: int
    per_image: list = dataclasses.field(default_factory=list)

    @property
    def mean_psnr(self):
        return sum(p for _, p, _ in self.per_image) / len(self.per_image)

    @property
    def mean_ssim(self):
        return sum(s for _, _, s in self.per_image) / len(self.per_image)

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "scale": self.scale,
            "border_crop": self.border_crop,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "per_image": [
                {"image": i, "psnr": p, "ssim": s}
                for i, p, s in self.per_image
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            dataset=data["dataset"],
            scale=data["scale"],
            border_crop=data["border_crop"],
            per_image=[
                (row["image"], row["psnr"], row["ssim"])
                for row in data["per_image"]
            ],
        )

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_FIELDS)
            for image_id, p, s in self.per_image:
                writer.writerow(
                    [self.dataset, self.scale, image_id, repr(p), repr(s)]
                )
        return path

    def summary(self):
        return "%s x%d: %.2f dB / %.4f (%d images)" % (
            self.dataset,
            self.scale,
            self.mean_psnr,
            self.mean_ssim,
            len(self.per_image),
        )


class BicubicUpsampler(nn.Module):
    """Stand-in for a trained network that only upsamples bicubically."""

    def __init__(self, scale):
        super().__init__()
        self.scale = scale

    def describe(self):
        return "bicubic x%d" % self.scale

    def forward(self, lr, taps=()):
        height, width = lr.shape[-2:]
        sr = bicubic_resize(lr, height * self.scale, width * self.scale)
        return SRForward(sr, [], None)


def evaluate_pairs(name, pairs, scale, border_crop=None):
    """Score (image id, SR, HR) triples on the luma channel.

    Images that cannot be scored are skipped with a warning; if none
    can, the whole evaluation fails.
    """
    if border_crop is None:
        border_crop = scale
    per_image = []
    for image_id, sr, hr in pairs:
        try:
            sr_y = shave(rgb_to_y(sr.clamp(0, 1)), border_crop)
            hr_y = shave(rgb_to_y(hr), border_crop)
            per_image.append((image_id, psnr(sr_y, hr_y), ssim(sr_y, hr_y)))
        except DimensionError as e:
            logger.warning("Not scoring %s/%s: %s", name, image_id, e)
    if not per_image:
        raise DatasetError("No image of %s could be evaluated" % name)
    per_image.sort(key=lambda row: row[0])
    return EvalReport(name, scale, border_crop, per_image)


def evaluate_model(model, dataset, scale):
    """Super-resolve every LR image of a dataset and score it."""
    if len(dataset) == 0:
        raise DatasetError("Cannot evaluate on an empty dataset")
    was_training = model.training
    model.eval()

    def pairs():
        for index, image_id in enumerate(dataset.ids):
            lr, hr = dataset.pair(index)
            sr = model(lr.unsqueeze(0)).sr[0]
            yield image_id, sr, hr

    try:
        with torch.no_grad():
            report = evaluate_pairs(dataset.spec.name, pairs(), scale)
    finally:
        model.train(was_training)
    logger.info("Evaluated %s", report.summary())
    return report


def markdown_table(rows):
    """A PSNR/SSIM table with one row per label and a column per dataset.

    :param rows: (label, [EvalReport, ...]) pairs.
    """
    rows = list(rows)
    columns = []
    for _, reports in rows:
        for report in reports:
            key = (report.dataset, report.scale)
            if key not in columns:
                columns.append(key)
    lines = [
        "| Method | "
        + " | ".join("%s x%d" % key for key in columns)
        + " |",
        "|---" * (len(columns) + 1) + "|",
    ]
    for label, reports in rows:
        cells = {(r.dataset, r.scale): r for r in reports}
        values = []
        for key in columns:
            report = cells.get(key)
            if report is None:
                values.append("-")
            else:
                values.append(
                    "%.2f/%.4f" % (report.mean_psnr, report.mean_ssim)
                )
        lines.append("| %s | %s |" % (label, " | ".join(values)))
    return "\n".join(lines) + "\n"
