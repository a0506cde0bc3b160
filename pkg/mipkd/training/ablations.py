# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Named configuration overrides for the ablation studies."""

import logging
import os

from mipkd.config import config
from mipkd.errors import ConfigurationError
from mipkd.helpers import run_dir_name
from mipkd.training.config import load_train_config
from mipkd.training.trainer import train

__all__ = [
    "ABLATIONS",
    "ablation_config",
    "run_ablation",
]

logger = logging.getLogger(__name__)


def _weights(rec, kd, feat, block):
    return (
        "weights.lambda_rec=%s" % rec,
        "weights.lambda_kd=%s" % kd,
        "weights.lambda_feat=%s" % feat,
        "weights.lambda_block=%s" % block,
    )


ABLATIONS = {
    # Which mixers are active.
    "mixers-none": ("mixer.enabled=false", "blockmix.enabled=false"),
    "mixers-feature": ("mixer.enabled=true", "blockmix.enabled=false"),
    "mixers-block": ("mixer.enabled=false", "blockmix.enabled=true"),
    "mixers-both": ("mixer.enabled=true", "blockmix.enabled=true"),
    # Encoders, measured without the block mixer.
    "encoder-none": ("mixer.encoder_sharing=none", "blockmix.enabled=false"),
    "encoder-shared": (
        "mixer.encoder_sharing=shared",
        "blockmix.enabled=false",
    ),
    "encoder-separate": (
        "mixer.encoder_sharing=separate",
        "blockmix.enabled=false",
    ),
    "encoder-mlp": ("mixer.encoder_arch=MLP",),
    "encoder-conv": ("mixer.encoder_arch=Conv",),
    "mask-cosine": ("mixer.mask_strategy=cosine",),
    "mask-grid": ("mixer.mask_strategy=grid",),
    "mask-cka": ("mixer.mask_strategy=cka",),
    "mask-random": ("mixer.mask_strategy=random",),
    "ae-off": ("mixer.ae_loss_enabled=false",),
    "ae-on": ("mixer.ae_loss_enabled=true",),
    "weights-1-1-1-1": _weights(1, 1, 1, 1),
    "weights-1-1-0.1-1": _weights(1, 1, 0.1, 1),
    "weights-1-1-0.1-0.1": _weights(1, 1, 0.1, 0.1),
    "weights-1-1-1-0.1": _weights(1, 1, 1, 0.1),
}


def ablation_config(path, row, overrides=()):
    """The run configuration of one ablation row over a base document.

    Row overrides apply after the caller's, so a row always means what
    its name says.
    """
    if row not in ABLATIONS:
        raise ConfigurationError(
            "No ablation row %r; choose from %s" % (row, ", ".join(ABLATIONS))
        )
    overrides = list(overrides) + ["method=mipkd"] + list(ABLATIONS[row])
    return load_train_config(path, overrides, require_teacher=True)


def run_ablation(path, rows=None, overrides=(), run_root=None):
    """Train each row; returns {row: RunReport}."""
    rows = list(rows or ABLATIONS)
    configs = {row: ablation_config(path, row, overrides) for row in rows}
    reports = {}
    for row, cfg in configs.items():
        root = run_root or cfg.run_root or config.get("mipkd_run_root")
        name = run_dir_name(cfg.method, cfg.student.arch, cfg.scale, cfg.seed)
        run_dir = os.path.join(root, "ablate-%s_%s" % (row, name))
        logger.info("Ablation row %s", row)
        reports[row] = train(cfg, run_dir)
    return reports
