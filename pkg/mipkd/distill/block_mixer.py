# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Block prior mixer.

At every kept tap position the enhanced feature is spliced into the
remaining blocks of either the student or the teacher, and the output of
that combined network is supervised by the teacher output and the ground
truth.
"""

import dataclasses

import torch

from mipkd.distill.feature_mixer import adapt_to_student
from mipkd.distill.losses import mae
from mipkd.errors import ConfigurationError
from mipkd.models.backbones import ROLE_STUDENT, ROLE_TEACHER

__all__ = [
    "BlockMixConfig",
    "RoutingDecision",
    "block_mix_loss",
    "mixed_forward",
    "sample_routing",
]


@dataclasses.dataclass
class BlockMixConfig:
    w: float = 0.5
    route_prob: float = 0.5
    keep_prob: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        for name in ("w", "route_prob", "keep_prob"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ConfigurationError(
                    "%s must lie in [0, 1], not %r" % (name, value)
                )


@dataclasses.dataclass(frozen=True)
class RoutingDecision:
    """Where the enhanced feature goes at one tap position.

    R=1 continues through the student, R=0 through the teacher; D=0
    drops the position for this iteration.
    """

    position_index: int
    R: int
    D: int

    @property
    def dropped(self):
        return self.D == 0

    @property
    def role(self):
        return ROLE_STUDENT if self.R else ROLE_TEACHER

    def describe(self):
        if self.dropped:
            return "-"
        return "S" if self.R else "T"


def sample_routing(config, K, generator):
    """Draw K independent routing decisions.

    Each position takes one uniform draw for R and one for D, in that
    order, so the decisions depend only on the generator's state.
    """
    if K < 1:
        raise ConfigurationError("K must be at least 1")
    draws = torch.rand(K, 2, generator=generator, dtype=torch.float64)
    decisions = []
    for k in range(K):
        decisions.append(
            RoutingDecision(
                position_index=k,
                R=int(draws[k, 0].item() < config.route_prob),
                D=int(draws[k, 1].item() < config.keep_prob),
            )
        )
    return decisions


def mixed_forward(
    teacher,
    student,
    bundle,
    k,
    enhanced,
    decision,
    taps,
    teacher_head=None,
    student_head=None,
):
    """Propagate an enhanced feature through the selected remainder.

    :param k: Tap position index.
    :param enhanced: Teacher-width enhanced feature at position k.
    :param taps: The TapSet mapping positions to network stages.
    :param teacher_head, student_head: Head features of this iteration's
        full forwards; default to each network's cached head.
    :return: The combined network's SR output, or None when the
        position is dropped.
    """
    if decision.dropped:
        return None
    if decision.R:
        feature = adapt_to_student(bundle, k, enhanced)
        stage = taps.stage(ROLE_STUDENT, k)
        return student.forward_from(stage, feature, student_head)
    stage = taps.stage(ROLE_TEACHER, k)
    return teacher.forward_from(stage, enhanced, teacher_head)


def block_mix_loss(mixed_sr, teacher_sr, hr, config):
    """Weighted MAE to the teacher output (w) and ground truth (1 - w)."""
    to_teacher = mae(mixed_sr, teacher_sr.detach())
    to_truth = mae(mixed_sr, hr)
    return config.w * to_teacher + (1 - config.w) * to_truth
