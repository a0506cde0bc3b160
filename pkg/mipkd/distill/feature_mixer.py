# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Feature prior mixer.

Teacher and student tap features are encoded into one latent space,
stitched together element by element under a binary mask and decoded
back to an enhanced teacher-width feature.
"""

import dataclasses
import math

import torch
import torch.nn.functional as F
from torch import nn

from mipkd.distill.losses import mae
from mipkd.errors import ConfigurationError, DimensionError
from mipkd.models.backbones import init_weights_

__all__ = [
    "FeatureTap",
    "LatentPair",
    "Mask3D",
    "MixerBundle",
    "MixerConfig",
    "adapt_to_student",
    "autoencoder_loss",
    "build_mixer",
    "encode_pair",
    "feature_mixer_loss",
    "fuse_and_decode",
    "generate_mask",
]

ENCODER_CONV = "Conv"
ENCODER_MLP = "MLP"
ENCODER_ARCHS = (ENCODER_CONV, ENCODER_MLP)

SHARING_SEPARATE = "separate"
SHARING_SHARED = "shared"
SHARING_NONE = "none"
SHARING_MODES = (SHARING_SEPARATE, SHARING_SHARED, SHARING_NONE)

MASK_RANDOM = "random"
MASK_GRID = "grid"
MASK_COSINE = "cosine"
MASK_CKA = "cka"
MASK_STRATEGIES = (MASK_RANDOM, MASK_GRID, MASK_COSINE, MASK_CKA)

# Similarities are ranked after rounding to this many decimals, so that
# channels equal up to float noise tie and fall back to channel order.
SIMILARITY_DECIMALS = 6


@dataclasses.dataclass
class MixerConfig:
    latent_width: int = None
    hidden_width: int = None
    encoder_arch: str = ENCODER_CONV
    encoder_sharing: str = SHARING_SEPARATE
    mask_strategy: str = MASK_RANDOM
    mask_keep_prob: float = 0.5
    grid_cell: int = 1
    ae_loss_enabled: bool = True
    ae_loss_until: int = None
    enabled: bool = True

    def __post_init__(self):
        if self.encoder_arch not in ENCODER_ARCHS:
            raise ConfigurationError(
                "encoder_arch must be one of %s" % (ENCODER_ARCHS,)
            )
        if self.encoder_sharing not in SHARING_MODES:
            raise ConfigurationError(
                "encoder_sharing must be one of %s" % (SHARING_MODES,)
            )
        if self.mask_strategy not in MASK_STRATEGIES:
            raise ConfigurationError(
                "mask_strategy must be one of %s" % (MASK_STRATEGIES,)
            )
        if not 0 < self.mask_keep_prob < 1:
            raise ConfigurationError("mask_keep_prob must lie in (0, 1)")
        if self.grid_cell < 1:
            raise ConfigurationError("grid_cell must be at least 1")
        for name in ("latent_width", "hidden_width"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigurationError("%s must be positive" % name)

    def ae_active(self, iteration=None):
        """Whether the auto-encoder loss applies at this iteration."""
        if not self.ae_loss_enabled:
            return False
        if self.ae_loss_until is None or iteration is None:
            return True
        return iteration < self.ae_loss_until


@dataclasses.dataclass
class FeatureTap:
    position_index: int
    student_feature: torch.Tensor
    teacher_feature: torch.Tensor


@dataclasses.dataclass
class LatentPair:
    z_student: torch.Tensor
    z_teacher: torch.Tensor


@dataclasses.dataclass
class Mask3D:
    """Binary B×C×H×W mask; 1 selects the teacher latent."""

    values: torch.Tensor
    strategy: str
    seed: int = None


def _two_layer(in_width, hidden, out_width, arch):
    kernel = 3 if arch == ENCODER_CONV else 1
    padding = kernel // 2
    return nn.Sequential(
        nn.Conv2d(in_width, hidden, kernel, padding=padding),
        nn.ReLU(),
        nn.Conv2d(hidden, out_width, kernel, padding=padding),
    )


def _pointwise(in_width, out_width):
    return nn.Conv2d(in_width, out_width, 1)


class MixerBundle(nn.Module):
    """Trainable modules of the feature prior mixer.

    `student_align` brings student features to teacher width; it feeds
    a shared encoder, stands in for absent encoders, and splices bare
    student features into the teacher when the feature mixer is off. It
    is None when the widths already agree. `adapters` maps the
    enhanced teacher-width feature back to student width, one per tap.
    """

    def __init__(
        self,
        config,
        student_width,
        teacher_width,
        encoder_student,
        encoder_teacher,
        decoder,
        adapters,
        student_align=None,
    ):
        super().__init__()
        self.config = config
        self.student_width = student_width
        self.teacher_width = teacher_width
        self.encoder_student = encoder_student
        self.encoder_teacher = encoder_teacher
        self.decoder = decoder
        self.adapters = nn.ModuleList(adapters)
        self.student_align = student_align

    def align_student(self, student_feature):
        """Student feature at teacher width (identity when equal)."""
        if self.student_align is None:
            return student_feature
        return self.student_align(student_feature)


def build_mixer(config, student_width, teacher_width, num_taps, generator):
    """Build a MixerBundle for the given widths and tap count."""
    latent = config.latent_width or teacher_width
    hidden = config.hidden_width or 2 * latent
    arch = config.encoder_arch
    student_align = None
    if student_width != teacher_width:
        student_align = _pointwise(student_width, teacher_width)
    if config.encoder_sharing == SHARING_SEPARATE:
        encoder_student = _two_layer(student_width, hidden, latent, arch)
        encoder_teacher = _two_layer(teacher_width, hidden, latent, arch)
    elif config.encoder_sharing == SHARING_SHARED:
        encoder_teacher = _two_layer(teacher_width, hidden, latent, arch)
        encoder_student = encoder_teacher
    else:
        if latent != teacher_width:
            raise ConfigurationError(
                "Without encoders the latent width must equal the teacher "
                "width (%d), not %d" % (teacher_width, latent)
            )
        encoder_student = nn.Identity()
        encoder_teacher = nn.Identity()
    decoder = _two_layer(latent, hidden, teacher_width, arch)
    if student_width != teacher_width:
        adapters = [
            _pointwise(teacher_width, student_width) for _ in range(num_taps)
        ]
    else:
        adapters = [nn.Identity() for _ in range(num_taps)]
    bundle = MixerBundle(
        config,
        student_width,
        teacher_width,
        encoder_student,
        encoder_teacher,
        decoder,
        adapters,
        student_align,
    )
    init_weights_(bundle, generator)
    return bundle


def _check_width(feature, width, what):
    if feature.dim() != 4 or feature.shape[1] != width:
        raise DimensionError(
            "%s of shape %s does not have width %d"
            % (what, tuple(feature.shape), width)
        )


def encode_pair(bundle, tap):
    """Map a tap's student and teacher features into the latent space."""
    _check_width(tap.student_feature, bundle.student_width, "Student feature")
    _check_width(tap.teacher_feature, bundle.teacher_width, "Teacher feature")
    if tap.student_feature.shape[2:] != tap.teacher_feature.shape[2:]:
        raise DimensionError("Tap features differ in spatial size")
    student = tap.student_feature
    if bundle.config.encoder_sharing != SHARING_SEPARATE:
        student = bundle.align_student(student)
    return LatentPair(
        z_student=bundle.encoder_student(student),
        z_teacher=bundle.encoder_teacher(tap.teacher_feature),
    )


def _rank_channels(similarity, keep):
    """Per-row mask of the `keep` least similar channels.

    :param similarity: B×C similarities.
    """
    rounded = torch.round(similarity.double() * 10**SIMILARITY_DECIMALS)
    order = torch.sort(rounded, dim=1, stable=True).indices[:, :keep]
    selected = torch.zeros_like(rounded)
    selected.scatter_(1, order, 1.0)
    return selected


def _cosine_similarity(latents):
    z_s = latents.z_student.detach().double().flatten(2)
    z_t = latents.z_teacher.detach().double().flatten(2)
    return F.cosine_similarity(z_s, z_t, dim=2, eps=1e-12)


def _cka_similarity(latents):
    """Linear CKA per channel between the two latents over the batch."""
    z_s = latents.z_student.detach().double().flatten(2).transpose(0, 1)
    z_t = latents.z_teacher.detach().double().flatten(2).transpose(0, 1)
    # C×B×HW, centred over the batch.
    z_s = z_s - z_s.mean(dim=1, keepdim=True)
    z_t = z_t - z_t.mean(dim=1, keepdim=True)
    # Batch-space Gram matrices, C×B×B.
    gram_s = z_s @ z_s.transpose(1, 2)
    gram_t = z_t @ z_t.transpose(1, 2)
    cross = (gram_s * gram_t).sum(dim=(1, 2))
    norms = torch.linalg.matrix_norm(gram_s)
    norms = norms * torch.linalg.matrix_norm(gram_t)
    cka = cross / norms.clamp_min(1e-12)
    batch = latents.z_student.shape[0]
    return cka.unsqueeze(0).repeat(batch, 1)


def generate_mask(config, shape, latents=None, generator=None, seed=None):
    """Draw the binary mask stitching teacher into student latents.

    :param shape: (B, C, H, W) of the latents.
    :param generator: torch.Generator for the random strategy; when
        absent one is seeded from `seed`.
    """
    batch, channels, height, width = shape
    strategy = config.mask_strategy
    p = config.mask_keep_prob
    if strategy == MASK_RANDOM:
        if generator is None:
            generator = torch.Generator().manual_seed(seed or 0)
        values = (torch.rand(shape, generator=generator) < p).float()
    elif strategy == MASK_GRID:
        cell = config.grid_cell
        c = torch.arange(channels).view(-1, 1, 1) // cell
        h = torch.arange(height).view(1, -1, 1) // cell
        w = torch.arange(width).view(1, 1, -1) // cell
        parity = ((c + h + w) % 2 == 0).float()
        values = parity.unsqueeze(0).expand(batch, -1, -1, -1).contiguous()
    else:
        if latents is None:
            raise ConfigurationError(
                "The %s mask strategy needs the latents" % strategy
            )
        if strategy == MASK_COSINE:
            similarity = _cosine_similarity(latents)
        else:
            similarity = _cka_similarity(latents)
        keep = math.ceil(p * channels)
        selected = _rank_channels(similarity, keep).float()
        values = selected.view(batch, channels, 1, 1).expand(
            -1, -1, height, width
        )
        values = values.contiguous()
    return Mask3D(values=values, strategy=strategy, seed=seed)


def fuse_and_decode(bundle, latents, mask):
    """Stitch latents under the mask and decode the enhanced feature."""
    if latents.z_student.shape != latents.z_teacher.shape:
        raise DimensionError("Latent shapes differ")
    if mask.values.shape != latents.z_teacher.shape:
        raise DimensionError(
            "Mask shape %s does not match latent shape %s"
            % (tuple(mask.values.shape), tuple(latents.z_teacher.shape))
        )
    selected = mask.values.to(latents.z_teacher.device).bool()
    fused = torch.where(selected, latents.z_teacher, latents.z_student)
    return bundle.decoder(fused)


def feature_mixer_loss(enhanced, teacher_feature):
    return mae(enhanced, teacher_feature.detach())


def autoencoder_loss(bundle, teacher_feature):
    """Reconstruction of the teacher feature through encoder and decoder."""
    if not bundle.config.ae_loss_enabled:
        raise ConfigurationError("The auto-encoder loss is disabled")
    teacher_feature = teacher_feature.detach()
    _check_width(teacher_feature, bundle.teacher_width, "Teacher feature")
    reconstructed = bundle.decoder(bundle.encoder_teacher(teacher_feature))
    return mae(reconstructed, teacher_feature)


def adapt_to_student(bundle, position_index, enhanced):
    """Bring an enhanced teacher-width feature to the student's width."""
    if not 0 <= position_index < len(bundle.adapters):
        raise ConfigurationError(
            "No adapter for tap position %d" % position_index
        )
    _check_width(enhanced, bundle.teacher_width, "Enhanced feature")
    return bundle.adapters[position_index](enhanced)
