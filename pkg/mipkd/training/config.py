# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Run configuration: what to train, how, and for how long."""

import copy
import dataclasses
import math

import yaml

from mipkd.config import config
from mipkd.data.dataset import DatasetSpec
from mipkd.distill.block_mixer import BlockMixConfig
from mipkd.distill.feature_mixer import MixerConfig
from mipkd.distill.losses import LossWeights
from mipkd.errors import ConfigurationError
from mipkd.models.backbones import NetworkSpec, TapSet

__all__ = [
    "METHODS",
    "OptimizerConfig",
    "TapConfig",
    "TrainConfig",
    "apply_overrides",
    "default_document",
    "load_chain_config",
    "load_train_config",
    "lr_at",
    "merge_documents",
    "parse_override",
]

METHOD_SCRATCH = "scratch"
METHOD_LOGITS = "logits"
METHOD_AT = "at"
METHOD_FITNET = "fitnet"
METHOD_FAKD = "fakd"
METHOD_MIPKD = "mipkd"
METHODS = (
    METHOD_SCRATCH,
    METHOD_LOGITS,
    METHOD_AT,
    METHOD_FITNET,
    METHOD_FAKD,
    METHOD_MIPKD,
)
# Methods that compare features at the taps.
FEATURE_METHODS = (METHOD_AT, METHOD_FITNET, METHOD_FAKD, METHOD_MIPKD)


def _section(cls, data, name):
    """Build a config dataclass from a mapping, naming unknown keys."""
    if isinstance(data, cls):
        return data
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("'%s' must be a mapping" % name)
    known = {field.name for field in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(
            "Unknown keys in '%s': %s"
            % (name, ", ".join("%s.%s" % (name, key) for key in unknown))
        )
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError("Bad '%s' section: %s" % (name, e))


@dataclasses.dataclass
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigurationError("%s must lie in [0, 1)" % name)
        if self.eps <= 0:
            raise ConfigurationError("eps must be positive")


@dataclasses.dataclass
class TapConfig:
    """Either a tap count placed automatically, or explicit positions."""

    count: int = 4
    positions: list = None

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError("taps.count must be positive")
        if self.positions is not None:
            self.positions = [[int(s), int(t)] for s, t in self.positions]

    def build(self, student_spec, teacher_spec):
        if self.positions is None:
            return TapSet.build(student_spec, teacher_spec, self.count)
        taps = TapSet(tuple(tuple(p) for p in self.positions))
        taps.validate(student_spec, teacher_spec)
        return taps


@dataclasses.dataclass
class TrainConfig:
    method: str = METHOD_MIPKD
    teacher: NetworkSpec = dataclasses.field(
        default_factory=lambda: NetworkSpec(channels=256, blocks=32, scale=4)
    )
    student: NetworkSpec = dataclasses.field(
        default_factory=lambda: NetworkSpec(channels=64, blocks=16, scale=4)
    )
    teacher_ckpt: str = None
    mixer: MixerConfig = dataclasses.field(default_factory=MixerConfig)
    blockmix: BlockMixConfig = dataclasses.field(
        default_factory=BlockMixConfig
    )
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    taps: TapConfig = dataclasses.field(default_factory=TapConfig)
    optimizer: OptimizerConfig = dataclasses.field(
        default_factory=OptimizerConfig
    )
    lr: float = 1e-4
    lr_decay_every: int = 100000
    lr_decay_factor: float = 0.1
    iters: int = 250000
    batch: int = 16
    seed: int = 0
    dataset: DatasetSpec = dataclasses.field(
        default_factory=lambda: DatasetSpec(scale=4)
    )
    eval_sets: list = dataclasses.field(default_factory=list)
    eval_every: int = 0
    checkpoint_every: int = 0
    log_every: int = 100
    run_root: str = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(
                "method must be one of %s, not %r" % (METHODS, self.method)
            )
        if not isinstance(self.iters, int) or self.iters < 1:
            raise ConfigurationError("iters must be at least 1")
        if not self.lr > 0 or not math.isfinite(self.lr):
            raise ConfigurationError("lr must be positive")
        if self.batch < 1:
            raise ConfigurationError("batch must be at least 1")
        if self.lr_decay_every < 1:
            raise ConfigurationError("lr_decay_every must be at least 1")
        if not 0 < self.lr_decay_factor <= 1:
            raise ConfigurationError("lr_decay_factor must lie in (0, 1]")
        for name in ("eval_every", "checkpoint_every", "log_every"):
            if getattr(self, name) < 0:
                raise ConfigurationError("%s must not be negative" % name)
        scales = {
            self.student.scale,
            self.dataset.scale,
            *(spec.scale for spec in self.eval_sets),
        }
        if self.method != METHOD_SCRATCH:
            scales.add(self.teacher.scale)
        if len(scales) != 1:
            raise ConfigurationError(
                "Networks and datasets disagree on the scale: %s"
                % sorted(scales)
            )

    @property
    def scale(self):
        return self.student.scale

    @property
    def uses_teacher(self):
        return self.method != METHOD_SCRATCH

    def check_runnable(self):
        """Preconditions that only matter once training starts."""
        if self.uses_teacher and not self.teacher_ckpt:
            raise ConfigurationError(
                "method %s needs a teacher_ckpt" % self.method
            )

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(
                "Unknown configuration keys: %s" % ", ".join(unknown)
            )
        sections = {
            "teacher": NetworkSpec,
            "student": NetworkSpec,
            "mixer": MixerConfig,
            "blockmix": BlockMixConfig,
            "weights": LossWeights,
            "taps": TapConfig,
            "optimizer": OptimizerConfig,
            "dataset": DatasetSpec,
        }
        for name, section_cls in sections.items():
            if name in data:
                data[name] = _section(section_cls, data[name], name)
        if "eval_sets" in data:
            data["eval_sets"] = [
                _section(DatasetSpec, spec, "eval_sets")
                for spec in data["eval_sets"] or []
            ]
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigurationError(str(e))


def lr_at(iteration, cfg):
    """Step-decayed learning rate for a (zero-based) iteration."""
    if iteration < 0:
        raise ConfigurationError("iteration must not be negative")
    steps = iteration // cfg.lr_decay_every
    return cfg.lr * cfg.lr_decay_factor**steps


def default_document():
    """The defaults as a plain mapping, ready to merge a document over.

    Residual scaling is left unset so that it follows the merged width.
    """
    data = TrainConfig().to_dict()
    for role in ("teacher", "student"):
        data[role]["res_scale"] = None
    return data


def merge_documents(base, update):
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_documents(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text):
    """Split 'a.b=value' into (['a', 'b'], parsed value)."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError("Override %r is not key=value" % text)
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigurationError("Bad value in override %r: %s" % (text, e))
    return key.strip().split("."), parsed


def apply_overrides(data, overrides):
    data = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        target = data
        for key in path[:-1]:
            if target.get(key) is None:
                target[key] = {}
            target = target[key]
            if not isinstance(target, dict):
                raise ConfigurationError(
                    "Cannot override inside non-mapping key in %r" % text
                )
        target[path[-1]] = value
    return data


def _read_yaml(path):
    try:
        with open(path) as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigurationError("Cannot read %s: %s" % (path, e))
    except yaml.YAMLError as e:
        raise ConfigurationError("%s is not valid YAML: %s" % (path, e))
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigurationError("%s must hold a mapping" % path)
    return document


def _finish(data, overrides):
    data = apply_overrides(data, overrides)
    seed = config.get("mipkd_seed")
    if seed != "":
        try:
            data["seed"] = int(seed)
        except ValueError:
            raise ConfigurationError("MIPKD_SEED must be an integer")
    return TrainConfig.from_dict(data)


def load_train_config(path=None, overrides=(), require_teacher=False):
    """Load a run configuration.

    The document is merged over the defaults, then `key.sub=value`
    overrides are applied (values parse as YAML scalars), then the
    MIPKD_SEED environment variable replaces the seed.
    """
    data = default_document()
    if path is not None:
        data = merge_documents(data, _read_yaml(path))
    cfg = _finish(data, overrides)
    if require_teacher:
        cfg.check_runnable()
    return cfg


def load_chain_config(path, overrides=()):
    """Load a multi-stage chain: a `common` section and a `stages` list.

    Each stage is merged over the defaults and then over `common`; the
    overrides apply to every stage.
    """
    document = _read_yaml(path)
    unknown = sorted(set(document) - {"common", "stages"})
    if unknown:
        raise ConfigurationError(
            "Unknown chain keys: %s" % ", ".join(unknown)
        )
    stages = document.get("stages") or []
    if not stages:
        raise ConfigurationError("%s defines no stages" % path)
    base = merge_documents(default_document(), document.get("common") or {})
    return [
        _finish(merge_documents(base, stage), overrides) for stage in stages
    ]
