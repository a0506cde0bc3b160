# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Multi-stage distillation through teaching assistants."""

import dataclasses
import logging
import os

from mipkd.config import config
from mipkd.errors import ConfigurationError
from mipkd.helpers import run_dir_name
from mipkd.training.trainer import train

__all__ = [
    "check_chain",
    "distill_chain",
]

logger = logging.getLogger(__name__)


def check_chain(stages):
    """Reject a chain whose stages do not hand over to each other."""
    if not stages:
        raise ConfigurationError("A chain needs at least one stage")
    stages[0].check_runnable()
    for index, (previous, current) in enumerate(
        zip(stages, stages[1:]), start=2
    ):
        if not current.uses_teacher:
            raise ConfigurationError(
                "Stage %d trains from scratch and cannot learn from stage %d"
                % (index, index - 1)
            )
        if previous.student != current.teacher:
            raise ConfigurationError(
                "Stage %d teacher %s is not stage %d student %s"
                % (
                    index,
                    current.teacher.describe(),
                    index - 1,
                    previous.student.describe(),
                )
            )


def distill_chain(stages, run_root=None, statsd_client=None):
    """Train stages in order; each final student teaches the next stage.

    Optimiser state starts afresh in every stage.
    """
    check_chain(stages)
    run_root = run_root or stages[0].run_root or config.get("mipkd_run_root")
    reports = []
    for index, cfg in enumerate(stages, start=1):
        if reports:
            cfg = dataclasses.replace(
                cfg, teacher_ckpt=reports[-1].final_checkpoint
            )
        name = run_dir_name(cfg.method, cfg.student.arch, cfg.scale, cfg.seed)
        run_dir = os.path.join(run_root, "stage%d_%s" % (index, name))
        logger.info(
            "Chain stage %d/%d: %s teaches %s",
            index,
            len(stages),
            cfg.teacher_ckpt or "nobody",
            cfg.student.describe(),
        )
        reports.append(train(cfg, run_dir, statsd_client))
    return reports
