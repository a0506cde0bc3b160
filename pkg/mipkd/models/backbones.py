# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""EDSR- and RCAN-style super-resolution networks with feature taps.

A network is a conv head, a trunk of stages (residual blocks for EDSR,
residual groups for RCAN), a conv closing the trunk, a global skip from
the head output, a pixel-shuffle upsampler and a conv tail. Features can
be read after any stage, and propagation can be resumed from any stage
with an injected feature map.
"""

import dataclasses
import logging
import math
from collections import namedtuple

import torch
from torch import nn

from mipkd.errors import ConfigurationError, DimensionError

__all__ = [
    "ARCH_EDSR",
    "ARCH_RCAN",
    "NetworkSpec",
    "ROLE_STUDENT",
    "ROLE_TEACHER",
    "SRForward",
    "SRModel",
    "TapSet",
    "build_model",
    "count_params",
    "expected_param_count",
    "init_weights_",
]

logger = logging.getLogger(__name__)

ARCH_EDSR = "EDSR"
ARCH_RCAN = "RCAN"
ARCHITECTURES = (ARCH_EDSR, ARCH_RCAN)
SUPPORTED_SCALES = (2, 3, 4)

ROLE_TEACHER = "teacher"
ROLE_STUDENT = "student"

# Networks wider than this use the EDSR-large residual scaling.
WIDE_CHANNELS = 256


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    """Shape of an SR network; everything else follows from these."""

    arch: str = ARCH_EDSR
    channels: int = 64
    blocks: int = 16
    groups: int = 1
    scale: int = 4
    res_scale: float = None
    attention_reduction: int = 16

    def __post_init__(self):
        arch = str(self.arch).upper()
        if arch not in ARCHITECTURES:
            raise ConfigurationError("Unsupported architecture: %s" % arch)
        object.__setattr__(self, "arch", arch)
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigurationError(
                "Unsupported scale %r; expected one of %s"
                % (self.scale, SUPPORTED_SCALES)
            )
        for name in ("channels", "blocks", "groups", "attention_reduction"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigurationError(
                    "%s must be a positive integer, not %r" % (name, value)
                )
        if arch == ARCH_EDSR and self.groups != 1:
            raise ConfigurationError("EDSR networks have exactly one group")
        if self.res_scale is None:
            object.__setattr__(
                self,
                "res_scale",
                0.1 if self.channels >= WIDE_CHANNELS else 1.0,
            )
        if not 0 < self.res_scale <= 1:
            raise ConfigurationError(
                "res_scale must lie in (0, 1], not %r" % (self.res_scale,)
            )

    @property
    def stages(self):
        """Number of trunk stages a tap can follow."""
        return self.blocks if self.arch == ARCH_EDSR else self.groups

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(
                "Unknown network fields: %s" % ", ".join(sorted(unknown))
            )
        return cls(**data)

    def describe(self):
        if self.arch == ARCH_EDSR:
            return "EDSR c%db%d x%d" % (self.channels, self.blocks, self.scale)
        return "RCAN c%db%dg%d x%d" % (
            self.channels,
            self.blocks,
            self.groups,
            self.scale,
        )


def _conv_params(in_channels, out_channels, kernel_size):
    return in_channels * out_channels * kernel_size**2 + out_channels


def _attention_width(channels, reduction):
    return max(1, channels // reduction)


def expected_param_count(spec):
    """Closed-form parameter count of the network described by spec."""
    c = spec.channels
    block = 2 * _conv_params(c, c, 3)
    if spec.arch == ARCH_RCAN:
        squeeze = _attention_width(c, spec.attention_reduction)
        block += _conv_params(c, squeeze, 1) + _conv_params(squeeze, c, 1)
        trunk = spec.groups * (spec.blocks * block + _conv_params(c, c, 3))
    else:
        trunk = spec.blocks * block
    if spec.scale == 3:
        upsampler = _conv_params(c, 9 * c, 3)
    else:
        upsampler = int(math.log2(spec.scale)) * _conv_params(c, 4 * c, 3)
    return (
        _conv_params(3, c, 3)
        + trunk
        + _conv_params(c, c, 3)
        + upsampler
        + _conv_params(c, 3, 3)
    )


def init_weights_(module, generator):
    """Fan-in scaled uniform conv weights and zero biases, in place.

    Convolutions are visited in module registration order, so the result
    depends only on the generator's state.
    """
    with torch.no_grad():
        for layer in module.modules():
            if isinstance(layer, nn.Conv2d):
                fan_in = layer.in_channels * layer.kernel_size[0] ** 2
                fan_in //= layer.groups
                bound = 1.0 / math.sqrt(fan_in)
                weight = torch.rand(
                    layer.weight.shape,
                    generator=generator,
                    dtype=torch.float64,
                )
                layer.weight.copy_((weight * 2 - 1) * bound)
                if layer.bias is not None:
                    layer.bias.zero_()


def conv3x3(in_channels, out_channels):
    return nn.Conv2d(in_channels, out_channels, 3, padding=1)


class ChannelAttention(nn.Module):
    """Squeeze-and-excitation gate over feature channels."""

    def __init__(self, channels, reduction):
        super().__init__()
        squeeze = _attention_width(channels, reduction)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.down = nn.Conv2d(channels, squeeze, 1)
        self.relu = nn.ReLU()
        self.up = nn.Conv2d(squeeze, channels, 1)
        self.gate = nn.Sigmoid()

    def forward(self, x):
        return x * self.gate(self.up(self.relu(self.down(self.pool(x)))))


class ResidualBlock(nn.Module):
    def __init__(self, channels, res_scale, attention_reduction=None):
        super().__init__()
        self.res_scale = res_scale
        self.conv1 = conv3x3(channels, channels)
        self.relu = nn.ReLU()
        self.conv2 = conv3x3(channels, channels)
        if attention_reduction is None:
            self.attention = None
        else:
            self.attention = ChannelAttention(channels, attention_reduction)

    def forward(self, x):
        res = self.conv2(self.relu(self.conv1(x)))
        if self.attention is not None:
            res = self.attention(res)
        return x + res * self.res_scale


class ResidualGroup(nn.Module):
    """RCAN residual group: attention blocks, a closing conv, a skip."""

    def __init__(self, channels, blocks, res_scale, attention_reduction):
        super().__init__()
        self.blocks = nn.Sequential(
            *(
                ResidualBlock(channels, res_scale, attention_reduction)
                for _ in range(blocks)
            )
        )
        self.conv = conv3x3(channels, channels)

    def forward(self, x):
        return x + self.conv(self.blocks(x))


class Upsampler(nn.Sequential):
    """Pixel-shuffle upsampler; x4 is two x2 stages."""

    def __init__(self, channels, scale):
        layers = []
        if scale == 3:
            layers += [nn.Conv2d(channels, 9 * channels, 3, padding=1)]
            layers += [nn.PixelShuffle(3)]
        else:
            for _ in range(int(math.log2(scale))):
                layers += [nn.Conv2d(channels, 4 * channels, 3, padding=1)]
                layers += [nn.PixelShuffle(2)]
        super().__init__(*layers)


SRForward = namedtuple("SRForward", ["sr", "features", "head"])


class SRModel(nn.Module):
    """A super-resolution network exposing its trunk stages.

    Stage indices count completed stages: a tap at stage 2 reads the
    trunk state after the second block (EDSR) or group (RCAN).
    """

    def __init__(self, spec, role=ROLE_STUDENT):
        super().__init__()
        if role not in (ROLE_TEACHER, ROLE_STUDENT):
            raise ConfigurationError("Unknown model role: %s" % role)
        self.spec = spec
        self.role = role
        self.frozen = False
        c = spec.channels
        self.head = conv3x3(3, c)
        if spec.arch == ARCH_EDSR:
            stages = [
                ResidualBlock(c, spec.res_scale) for _ in range(spec.blocks)
            ]
        else:
            stages = [
                ResidualGroup(
                    c, spec.blocks, spec.res_scale, spec.attention_reduction
                )
                for _ in range(spec.groups)
            ]
        self.body = nn.ModuleList(stages)
        self.body_conv = conv3x3(c, c)
        self.upsampler = Upsampler(c, spec.scale)
        self.tail = conv3x3(c, 3)
        self._cached_head = None

    def freeze(self):
        """Exclude every parameter from gradient computation for good."""
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        self.frozen = True
        return self

    def _check_stage(self, stage):
        if not 1 <= stage <= len(self.body):
            raise ConfigurationError(
                "Stage %d is outside 1..%d of %s"
                % (stage, len(self.body), self.spec.describe())
            )

    def _finish(self, trunk, head):
        out = self.body_conv(trunk) + head
        return self.tail(self.upsampler(out))

    def forward(self, lr, taps=()):
        """Run the network and collect trunk features.

        :param lr: B×3×h×w tensor of LR images.
        :param taps: Stage indices to read features after, in order.
        :return: An SRForward of the SR output, the list of tapped
            features and the head feature feeding the global skip.
        """
        if lr.dim() != 4 or lr.shape[1] != 3:
            raise DimensionError(
                "Expected a B×3×H×W batch, got %s" % (tuple(lr.shape),)
            )
        taps = list(taps)
        for stage in taps:
            self._check_stage(stage)
        wanted = set(taps)
        collected = {}
        head = self.head(lr)
        trunk = head
        for index, stage in enumerate(self.body, start=1):
            trunk = stage(trunk)
            if index in wanted:
                collected[index] = trunk
        self._cached_head = head
        sr = self._finish(trunk, head)
        return SRForward(sr, [collected[stage] for stage in taps], head)

    def forward_from(self, stage, feature, head=None):
        """Resume propagation after a stage with an injected feature.

        The injected feature replaces the trunk state only; the global
        skip still adds the head feature of the most recent full forward
        unless one is passed explicitly.
        """
        self._check_stage(stage)
        if feature.dim() != 4 or feature.shape[1] != self.spec.channels:
            raise DimensionError(
                "Feature of shape %s does not match width %d of %s"
                % (
                    tuple(feature.shape),
                    self.spec.channels,
                    self.spec.describe(),
                )
            )
        if head is None:
            head = self._cached_head
        if head is None:
            raise ConfigurationError(
                "forward_from needs a head feature; run forward first"
            )
        if head.shape != feature.shape:
            raise DimensionError(
                "Feature shape %s differs from head shape %s"
                % (tuple(feature.shape), tuple(head.shape))
            )
        trunk = feature
        for block in self.body[stage:]:
            trunk = block(trunk)
        return self._finish(trunk, head)


def build_model(spec, rng_seed, role=ROLE_STUDENT):
    """Build and initialise a network; the same seed gives equal weights."""
    if not isinstance(spec, NetworkSpec):
        spec = NetworkSpec.from_dict(spec)
    model = SRModel(spec, role=role)
    generator = torch.Generator()
    generator.manual_seed(int(rng_seed))
    init_weights_(model, generator)
    logger.debug(
        "Built %s %s with %d parameters",
        role,
        spec.describe(),
        count_params(model),
    )
    if role == ROLE_TEACHER:
        model.freeze()
    return model


def count_params(model):
    return sum(parameter.numel() for parameter in model.parameters())


def _round_half_up(value):
    return int(math.floor(value + 0.5))


@dataclasses.dataclass(frozen=True)
class TapSet:
    """Ordered (student_stage, teacher_stage) pairs of distillation taps."""

    positions: tuple

    def __post_init__(self):
        positions = tuple((int(s), int(t)) for s, t in self.positions)
        object.__setattr__(self, "positions", positions)
        if not positions:
            raise ConfigurationError("At least one tap position is needed")
        for previous, current in zip(positions, positions[1:]):
            if current[0] <= previous[0] or current[1] <= previous[1]:
                raise ConfigurationError(
                    "Tap stages must increase strictly: %s" % (positions,)
                )

    @classmethod
    def build(cls, student_spec, teacher_spec=None, count=4):
        """Space `count` taps evenly over the shallower network's stages.

        The deeper network's stages follow proportionally. The count is
        capped by the shallower network.
        """
        if teacher_spec is None:
            teacher_spec = student_spec
        n_s, n_t = student_spec.stages, teacher_spec.stages
        count = min(int(count), n_s, n_t)
        if count < 1:
            raise ConfigurationError("Tap count must be positive")
        shallow, deep = min(n_s, n_t), max(n_s, n_t)
        positions = []
        for k in range(1, count + 1):
            near = _round_half_up(k * shallow / count)
            far = _round_half_up(near * deep / shallow)
            positions.append((near, far) if n_s <= n_t else (far, near))
        return cls(tuple(positions))

    def __len__(self):
        return len(self.positions)

    @property
    def student_stages(self):
        return [s for s, _ in self.positions]

    @property
    def teacher_stages(self):
        return [t for _, t in self.positions]

    def stages_for(self, role):
        if role == ROLE_TEACHER:
            return self.teacher_stages
        return self.student_stages

    def stage(self, role, position_index):
        if not 0 <= position_index < len(self.positions):
            raise ConfigurationError(
                "Tap position %d is outside 0..%d"
                % (position_index, len(self.positions) - 1)
            )
        return self.stages_for(role)[position_index]

    def validate(self, student_spec, teacher_spec=None):
        """Check every tap sits on a stage both networks have."""
        if teacher_spec is None:
            teacher_spec = student_spec
        for s, t in self.positions:
            if not 1 <= s <= student_spec.stages:
                raise ConfigurationError(
                    "Student tap stage %d beyond %d stages"
                    % (s, student_spec.stages)
                )
            if not 1 <= t <= teacher_spec.stages:
                raise ConfigurationError(
                    "Teacher tap stage %d beyond %d stages"
                    % (t, teacher_spec.stages)
                )
        return self
