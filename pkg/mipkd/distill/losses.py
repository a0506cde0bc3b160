# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Reconstruction, distillation and composite losses."""

import dataclasses
import math

import torch
import torch.nn.functional as F
from torch import nn

from mipkd.errors import ConfigurationError, DimensionError
from mipkd.models.backbones import init_weights_

__all__ = [
    "LossBreakdown",
    "LossWeights",
    "at_loss",
    "build_hint_adapters",
    "fakd_affinity_loss",
    "fitnet_loss",
    "logits_loss",
    "mae",
    "rec_loss",
    "spatial_affinity",
    "total_loss",
]


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(
            "Shapes %s and %s differ" % (tuple(a.shape), tuple(b.shape))
        )


def _check_same_spatial(a, b):
    if a.dim() != 4 or b.dim() != 4 or a.shape[2:] != b.shape[2:]:
        raise DimensionError(
            "Spatial sizes of %s and %s differ"
            % (tuple(a.shape), tuple(b.shape))
        )


def mae(a, b):
    _check_same_shape(a, b)
    return F.l1_loss(a, b)


def rec_loss(student_sr, hr):
    return mae(student_sr, hr)


def logits_loss(student_sr, teacher_sr):
    return mae(student_sr, teacher_sr.detach())


def _attention_map(feature):
    """Channel-summed squared activations, L2-normalised over space."""
    return F.normalize(feature.pow(2).sum(dim=1).flatten(1), dim=1)


def at_loss(student_feature, teacher_feature):
    _check_same_spatial(student_feature, teacher_feature)
    diff = _attention_map(student_feature) - _attention_map(
        teacher_feature.detach()
    )
    return diff.pow(2).mean()


def fitnet_loss(student_feature, teacher_feature, hint_adapter):
    hinted = hint_adapter(student_feature)
    _check_same_shape(hinted, teacher_feature)
    return F.mse_loss(hinted, teacher_feature.detach())


def spatial_affinity(feature):
    """(HW)×(HW) cosine affinity between spatial positions, per item."""
    columns = F.normalize(feature.flatten(2), dim=1)
    return columns.transpose(1, 2) @ columns


def fakd_affinity_loss(student_feature, teacher_feature):
    _check_same_spatial(student_feature, teacher_feature)
    return F.l1_loss(
        spatial_affinity(student_feature),
        spatial_affinity(teacher_feature.detach()),
    )


def build_hint_adapters(student_width, teacher_width, num_taps, generator):
    """One trainable 1×1 hint map per tap for FitNet."""
    adapters = nn.ModuleList(
        nn.Conv2d(student_width, teacher_width, 1) for _ in range(num_taps)
    )
    init_weights_(adapters, generator)
    return adapters


@dataclasses.dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 1.0
    lambda_kd: float = 1.0
    lambda_feat: float = 1.0
    lambda_block: float = 0.1

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(
                    "%s must be finite and non-negative, not %r"
                    % (field.name, value)
                )


def _value(term):
    if isinstance(term, torch.Tensor):
        return term.detach().item()
    return None if term is None else float(term)


@dataclasses.dataclass
class LossBreakdown:
    """The weighted terms of one iteration's objective.

    Per-tap lists hold None for terms that were not computed, such as
    block terms at dropped positions.
    """

    rec: torch.Tensor
    logits: torch.Tensor
    feat_per_tap: list
    ae_per_tap: list
    block_per_tap: list
    weights: LossWeights
    total: torch.Tensor

    def terms(self):
        """Ordered (name, float) pairs of every computed term."""
        terms = []
        if self.rec is not None:
            terms.append(("rec", _value(self.rec)))
        if self.logits is not None:
            terms.append(("logits", _value(self.logits)))
        for name, values in (
            ("feat", self.feat_per_tap),
            ("ae", self.ae_per_tap),
            ("block", self.block_per_tap),
        ):
            for k, value in enumerate(values):
                if value is not None:
                    terms.append(("%s_%d" % (name, k), _value(value)))
        return terms

    def recompose(self):
        """Recompute the total from the recorded floats."""
        return _compose(
            _value(self.rec),
            _value(self.logits),
            [_value(v) for v in self.feat_per_tap],
            [_value(v) for v in self.ae_per_tap],
            [_value(v) for v in self.block_per_tap],
            self.weights,
            0.0,
        )


def _compose(rec, logits, feats, aes, blocks, weights, zero):
    total = zero
    if rec is not None and weights.lambda_rec:
        total = total + weights.lambda_rec * rec
    if logits is not None and weights.lambda_kd:
        total = total + weights.lambda_kd * logits
    positions = max(len(feats), len(aes), len(blocks))
    for k in range(positions):
        feat = feats[k] if k < len(feats) else None
        ae = aes[k] if k < len(aes) else None
        block = blocks[k] if k < len(blocks) else None
        if weights.lambda_feat and (feat is not None or ae is not None):
            term = feat if feat is not None else 0.0
            if ae is not None:
                term = term + ae
            total = total + weights.lambda_feat * term
        if block is not None and weights.lambda_block:
            total = total + weights.lambda_block * block
    return total


def total_loss(
    weights,
    rec=None,
    logits=None,
    feat_per_tap=(),
    ae_per_tap=(),
    block_per_tap=(),
):
    """Compose the training objective from its parts.

    The per-tap feature term is the mixer loss plus, where computed, the
    auto-encoder loss. Absent terms and zero-weighted terms contribute
    nothing.
    """
    if not isinstance(weights, LossWeights):
        raise ConfigurationError("weights must be a LossWeights")
    parts = [rec, logits, *feat_per_tap, *ae_per_tap, *block_per_tap]
    reference = next((p for p in parts if p is not None), None)
    if reference is None:
        zero = torch.zeros(())
    else:
        zero = torch.zeros((), dtype=reference.dtype, device=reference.device)
    total = _compose(
        rec,
        logits,
        list(feat_per_tap),
        list(ae_per_tap),
        list(block_per_tap),
        weights,
        zero,
    )
    return LossBreakdown(
        rec=rec,
        logits=logits,
        feat_per_tap=list(feat_per_tap),
        ae_per_tap=list(ae_per_tap),
        block_per_tap=list(block_per_tap),
        weights=weights,
        total=total,
    )
