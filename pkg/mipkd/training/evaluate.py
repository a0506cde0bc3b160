# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import dataclasses
import os

from mipkd.data.dataset import SOURCE_DIRECTORY, DatasetSpec, ImageDataset
from mipkd.errors import ConfigurationError, DatasetError
from mipkd.evaluation.report import BicubicUpsampler, evaluate_model
from mipkd.models.checkpoint import load_checkpoint

__all__ = [
    "BICUBIC_PREFIX",
    "evaluate",
    "load_model",
]

# Pseudo-checkpoint naming a bicubic upsampler, e.g. "bicubic:4".
BICUBIC_PREFIX = "bicubic:"


def load_model(ckpt):
    """A model from a checkpoint path or a bicubic pseudo-checkpoint."""
    if ckpt.startswith(BICUBIC_PREFIX):
        try:
            scale = int(ckpt[len(BICUBIC_PREFIX) :])
        except ValueError:
            raise ConfigurationError("Bad bicubic pseudo-checkpoint %r" % ckpt)
        return BicubicUpsampler(scale), scale
    model, _ = load_checkpoint(ckpt)
    return model, model.spec.scale


def _dataset_spec(dataset, scale):
    if isinstance(dataset, DatasetSpec):
        return dataclasses.replace(dataset, scale=scale)
    return DatasetSpec(source=SOURCE_DIRECTORY, hr_dir=dataset, scale=scale)


def evaluate(ckpt, datasets):
    """Score a checkpoint on each dataset, in the given order.

    :param datasets: DatasetSpecs or HR image directories.
    """
    model, scale = load_model(ckpt)
    specs = [_dataset_spec(dataset, scale) for dataset in datasets]
    missing = [
        spec.hr_dir
        for spec in specs
        if spec.source == SOURCE_DIRECTORY and not os.path.isdir(spec.hr_dir)
    ]
    if missing:
        raise DatasetError("Missing datasets: %s" % ", ".join(missing))
    return [
        evaluate_model(model, ImageDataset(spec, min_size=0), scale)
        for spec in specs
    ]
