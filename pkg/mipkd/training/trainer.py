# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""The distillation training loop.

Every random draw of an iteration (the patch batch, the feature masks,
the block routing) comes from a generator derived from the run seed and
the iteration number, so any iteration's loss can be recomputed later
from the same parameters.
"""

import csv
import dataclasses
import logging
import math
import os
import time

import torch
import yaml

from mipkd.config import config
from mipkd.data.dataset import ImageDataset, sample_batch
from mipkd.distill.block_mixer import (
    block_mix_loss,
    mixed_forward,
    sample_routing,
)
from mipkd.distill.feature_mixer import (
    FeatureTap,
    autoencoder_loss,
    build_mixer,
    encode_pair,
    feature_mixer_loss,
    fuse_and_decode,
    generate_mask,
)
from mipkd.distill.losses import (
    LossBreakdown,
    LossWeights,
    at_loss,
    build_hint_adapters,
    fakd_affinity_loss,
    fitnet_loss,
    logits_loss,
    rec_loss,
    total_loss,
)
from mipkd.errors import (
    ConfigurationError,
    TeacherModified,
    TrainingDiverged,
)
from mipkd.evaluation.report import EvalReport, evaluate_model
from mipkd.helpers import (
    STREAM_DATA,
    STREAM_INIT,
    STREAM_MASK,
    STREAM_ROUTE,
    derive_seed,
    get_statsd_client,
    make_generator,
    run_dir_name,
)
from mipkd.models.backbones import ROLE_TEACHER, build_model
from mipkd.models.checkpoint import (
    checkpoint_digest,
    load_checkpoint,
    save_checkpoint,
)
from mipkd.training.config import (
    FEATURE_METHODS,
    METHOD_AT,
    METHOD_FAKD,
    METHOD_FITNET,
    METHOD_MIPKD,
    TrainConfig,
    lr_at,
)

__all__ = [
    "LossRow",
    "RunReport",
    "Trainer",
    "train",
]

logger = logging.getLogger(__name__)

RUN_FILE = "run.yaml"
LOSS_FILE = "losses.csv"
FINAL_CHECKPOINT = "final.ckpt"

# Initialisation streams, by tap slot.
INIT_STUDENT = 0
INIT_MIXER = 1
INIT_HINTS = 2

SMOOTHING_WINDOW = 50


@dataclasses.dataclass
class LossRow:
    """One iteration's recorded objective."""

    iteration: int
    lr: float
    routing: str
    total: float
    terms: dict


def _smoothed(values, head):
    if not values:
        return None
    window = max(1, min(SMOOTHING_WINDOW, len(values) // 10))
    chunk = values[:window] if head else values[-window:]
    return sum(chunk) / len(chunk)


@dataclasses.dataclass
class RunReport:
    config: dict
    run_dir: str
    checkpoints: list
    teacher_ckpt: str = None
    teacher_digest: str = None
    losses: list = dataclasses.field(default_factory=list)
    evals: list = dataclasses.field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def final_checkpoint(self):
        return self.checkpoints[-1] if self.checkpoints else None

    @property
    def final_evals(self):
        """The EvalReports of the last evaluation."""
        if not self.evals:
            return []
        return self.evals[-1][1]

    @property
    def initial_loss(self):
        return _smoothed([row.total for row in self.losses], head=True)

    @property
    def final_loss(self):
        return _smoothed([row.total for row in self.losses], head=False)

    def to_dict(self):
        return {
            "config": self.config,
            "run_dir": self.run_dir,
            "checkpoints": list(self.checkpoints),
            "teacher_ckpt": self.teacher_ckpt,
            "teacher_digest": self.teacher_digest,
            "wall_clock": self.wall_clock,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "evals": [
                {
                    "iteration": iteration,
                    "reports": [report.to_dict() for report in reports],
                }
                for iteration, reports in self.evals
            ],
        }

    def write(self, run_dir=None):
        run_dir = run_dir or self.run_dir
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, RUN_FILE), "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)
        names = []
        for row in self.losses:
            for name in row.terms:
                if name not in names:
                    names.append(name)
        with open(os.path.join(run_dir, LOSS_FILE), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iteration", "lr", "routing", "total"] + names)
            for row in self.losses:
                writer.writerow(
                    [row.iteration, repr(row.lr), row.routing, repr(row.total)]
                    + [
                        repr(row.terms[name]) if name in row.terms else ""
                        for name in names
                    ]
                )

    @classmethod
    def read(cls, run_dir):
        with open(os.path.join(run_dir, RUN_FILE)) as f:
            data = yaml.safe_load(f)
        losses = []
        loss_path = os.path.join(run_dir, LOSS_FILE)
        if os.path.exists(loss_path):
            with open(loss_path, newline="") as f:
                for record in csv.DictReader(f):
                    iteration = int(record.pop("iteration"))
                    lr = float(record.pop("lr"))
                    routing = record.pop("routing")
                    total = float(record.pop("total"))
                    terms = {
                        name: float(value)
                        for name, value in record.items()
                        if value != ""
                    }
                    losses.append(
                        LossRow(iteration, lr, routing, total, terms)
                    )
        return cls(
            config=data["config"],
            run_dir=data["run_dir"],
            checkpoints=data["checkpoints"],
            teacher_ckpt=data.get("teacher_ckpt"),
            teacher_digest=data.get("teacher_digest"),
            losses=losses,
            evals=[
                (
                    entry["iteration"],
                    [EvalReport.from_dict(r) for r in entry["reports"]],
                )
                for entry in data.get("evals") or []
            ],
            wall_clock=data.get("wall_clock", 0.0),
        )

    def recompose(self, row):
        """Recompute a logged total from its logged terms."""
        per_tap = {"feat": [], "ae": [], "block": []}
        for name, value in row.terms.items():
            kind, _, k = name.partition("_")
            if kind in per_tap:
                values = per_tap[kind]
                values.extend([None] * (int(k) + 1 - len(values)))
                values[int(k)] = value
        breakdown = LossBreakdown(
            rec=row.terms.get("rec"),
            logits=row.terms.get("logits"),
            feat_per_tap=per_tap["feat"],
            ae_per_tap=per_tap["ae"],
            block_per_tap=per_tap["block"],
            weights=LossWeights(**self.config["weights"]),
            total=row.total,
        )
        return breakdown.recompose()


class Trainer:
    """Owns every trainable of one run and steps them together."""

    def __init__(self, cfg, run_dir=None, statsd_client=None):
        if not isinstance(cfg, TrainConfig):
            raise ConfigurationError("cfg must be a TrainConfig")
        cfg.check_runnable()
        self.cfg = cfg
        if run_dir is None:
            root = cfg.run_root or config.get("mipkd_run_root")
            run_dir = os.path.join(
                root,
                run_dir_name(
                    cfg.method, cfg.student.arch, cfg.scale, cfg.seed
                ),
            )
        self.run_dir = run_dir
        self.statsd_client = statsd_client
        self.dataset = ImageDataset(cfg.dataset)
        self.student = build_model(
            cfg.student, derive_seed(cfg.seed, 0, STREAM_INIT, INIT_STUDENT)
        )
        self.teacher = None
        self.teacher_digest = None
        self.taps = None
        self.mixer = None
        self.hint_adapters = None
        if cfg.uses_teacher:
            self.teacher, _ = load_checkpoint(
                cfg.teacher_ckpt, role=ROLE_TEACHER
            )
            if self.teacher.spec != cfg.teacher:
                raise ConfigurationError(
                    "Teacher checkpoint %s holds %s, not the configured %s"
                    % (
                        cfg.teacher_ckpt,
                        self.teacher.spec.describe(),
                        cfg.teacher.describe(),
                    )
                )
            self.teacher_digest = checkpoint_digest(cfg.teacher_ckpt)
        if cfg.method in FEATURE_METHODS:
            self.taps = cfg.taps.build(cfg.student, cfg.teacher)
        if cfg.method == METHOD_MIPKD:
            self.mixer = build_mixer(
                cfg.mixer,
                cfg.student.channels,
                cfg.teacher.channels,
                len(self.taps),
                make_generator(cfg.seed, 0, STREAM_INIT, INIT_MIXER),
            )
        elif cfg.method == METHOD_FITNET:
            self.hint_adapters = build_hint_adapters(
                cfg.student.channels,
                cfg.teacher.channels,
                len(self.taps),
                make_generator(cfg.seed, 0, STREAM_INIT, INIT_HINTS),
            )
        self.optimizer = torch.optim.Adam(
            self.trainable_parameters(),
            lr=cfg.lr,
            betas=(cfg.optimizer.beta1, cfg.optimizer.beta2),
            eps=cfg.optimizer.eps,
        )
        self.history = []
        self.evals = []
        self.checkpoints = []
        self._eval_datasets = None

    def trainable_parameters(self):
        """Student, mixer bundle and hint adapters; never the teacher."""
        parameters = list(self.student.parameters())
        for extra in (self.mixer, self.hint_adapters):
            if extra is not None:
                parameters.extend(extra.parameters())
        return parameters

    def _feature_terms(self, s_out, t_out):
        if self.cfg.method == METHOD_AT:
            return [
                at_loss(s, t) for s, t in zip(s_out.features, t_out.features)
            ]
        if self.cfg.method == METHOD_FITNET:
            return [
                fitnet_loss(s, t, adapter)
                for s, t, adapter in zip(
                    s_out.features, t_out.features, self.hint_adapters
                )
            ]
        if self.cfg.method == METHOD_FAKD:
            return [
                fakd_affinity_loss(s, t)
                for s, t in zip(s_out.features, t_out.features)
            ]
        return []

    def _mix(self, iteration, s_out, t_out, hr):
        """Feature and block prior mixer terms of one iteration."""
        cfg = self.cfg
        feats, aes, blocks, decisions = [], [], [], []
        enhanced_per_tap = []
        for k in range(len(self.taps)):
            tap = FeatureTap(k, s_out.features[k], t_out.features[k])
            if not cfg.mixer.enabled:
                enhanced_per_tap.append(
                    self.mixer.align_student(tap.student_feature)
                )
                continue
            latents = encode_pair(self.mixer, tap)
            mask = generate_mask(
                cfg.mixer,
                tuple(latents.z_teacher.shape),
                latents,
                generator=make_generator(
                    cfg.seed, iteration, STREAM_MASK, k
                ),
                seed=derive_seed(cfg.seed, iteration, STREAM_MASK, k),
            )
            enhanced = fuse_and_decode(self.mixer, latents, mask)
            enhanced_per_tap.append(enhanced)
            feats.append(feature_mixer_loss(enhanced, tap.teacher_feature))
            if cfg.mixer.ae_active(iteration):
                aes.append(autoencoder_loss(self.mixer, tap.teacher_feature))
        if cfg.blockmix.enabled:
            decisions = sample_routing(
                cfg.blockmix,
                len(self.taps),
                make_generator(cfg.seed, iteration, STREAM_ROUTE, 0),
            )
            for k, decision in enumerate(decisions):
                mixed = mixed_forward(
                    self.teacher,
                    self.student,
                    self.mixer,
                    k,
                    enhanced_per_tap[k],
                    decision,
                    self.taps,
                    t_out.head,
                    s_out.head,
                )
                if mixed is None:
                    blocks.append(None)
                else:
                    blocks.append(
                        block_mix_loss(mixed, t_out.sr, hr, cfg.blockmix)
                    )
        return feats, aes, blocks, decisions

    def compute_losses(self, iteration):
        """The loss breakdown and routing decisions of an iteration.

        Calling this twice with unchanged parameters gives the same
        values.
        """
        cfg = self.cfg
        batch = sample_batch(
            self.dataset,
            cfg.batch,
            make_generator(cfg.seed, iteration, STREAM_DATA, 0),
        )
        student_taps = self.taps.student_stages if self.taps else ()
        s_out = self.student(batch.lr, taps=student_taps)
        rec = rec_loss(s_out.sr, batch.hr)
        if self.teacher is None:
            return total_loss(cfg.weights, rec=rec), []
        teacher_taps = self.taps.teacher_stages if self.taps else ()
        with torch.no_grad():
            t_out = self.teacher(batch.lr, taps=teacher_taps)
        logits = logits_loss(s_out.sr, t_out.sr)
        aes, blocks, decisions = [], [], []
        if cfg.method == METHOD_MIPKD:
            feats, aes, blocks, decisions = self._mix(
                iteration, s_out, t_out, batch.hr
            )
        else:
            feats = self._feature_terms(s_out, t_out)
        breakdown = total_loss(
            cfg.weights,
            rec=rec,
            logits=logits,
            feat_per_tap=feats,
            ae_per_tap=aes,
            block_per_tap=blocks,
        )
        return breakdown, decisions

    def step(self, iteration):
        lr = lr_at(iteration, self.cfg)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        breakdown, decisions = self.compute_losses(iteration)
        terms = breakdown.terms()
        for name, value in terms + [("total", breakdown.total.item())]:
            if not math.isfinite(value):
                raise TrainingDiverged(name, iteration, value)
        self.optimizer.zero_grad(set_to_none=True)
        breakdown.total.backward()
        self.optimizer.step()
        row = LossRow(
            iteration=iteration,
            lr=lr,
            routing="".join(d.describe() for d in decisions),
            total=breakdown.total.item(),
            terms=dict(terms),
        )
        self.history.append(row)
        return row

    def _log(self, row):
        logger.info(
            "iteration %d lr %.3g total %.6f %s%s",
            row.iteration,
            row.lr,
            row.total,
            " ".join("%s=%.6f" % item for item in row.terms.items()),
            " routing=%s" % row.routing if row.routing else "",
        )
        if self.statsd_client is None:
            return
        environment = config.get("statsd_environment")
        metrics = [("total", row.total), ("lr", row.lr)]
        for metric_name, value in metrics + list(row.terms.items()):
            gauge_name = "train,method={},env={},metric={}".format(
                self.cfg.method, environment, metric_name
            )
            self.statsd_client.gauge(gauge_name, value)

    def _save(self, name, iteration):
        path = save_checkpoint(
            os.path.join(self.run_dir, name),
            self.student,
            iteration=iteration,
            seed=self.cfg.seed,
            extra={
                "method": self.cfg.method,
                "teacher_digest": self.teacher_digest,
            },
        )
        self.checkpoints.append(path)
        return path

    def evaluate(self, iteration):
        if self._eval_datasets is None:
            specs = self.cfg.eval_sets or [self.cfg.dataset]
            self._eval_datasets = [
                ImageDataset(spec, min_size=0) for spec in specs
            ]
        started = time.monotonic()
        reports = [
            evaluate_model(self.student, dataset, self.cfg.scale)
            for dataset in self._eval_datasets
        ]
        self.evals.append((iteration, reports))
        if self.statsd_client is not None:
            self.statsd_client.timing(
                "train,method={},env={},metric=eval".format(
                    self.cfg.method, config.get("statsd_environment")
                ),
                int((time.monotonic() - started) * 1000),
            )
        return reports

    def check_teacher(self):
        """Fail if the teacher checkpoint changed since it was loaded."""
        if self.teacher_digest is None:
            return
        if checkpoint_digest(self.cfg.teacher_ckpt) != self.teacher_digest:
            raise TeacherModified(
                "Teacher checkpoint %s changed during training"
                % self.cfg.teacher_ckpt
            )

    def report(self, wall_clock=0.0):
        return RunReport(
            config=self.cfg.to_dict(),
            run_dir=self.run_dir,
            checkpoints=list(self.checkpoints),
            teacher_ckpt=self.cfg.teacher_ckpt,
            teacher_digest=self.teacher_digest,
            losses=list(self.history),
            evals=list(self.evals),
            wall_clock=wall_clock,
        )

    def run(self):
        cfg = self.cfg
        os.makedirs(self.run_dir, exist_ok=True)
        logger.info(
            "Training %s student %s for %d iterations in %s",
            cfg.method,
            cfg.student.describe(),
            cfg.iters,
            self.run_dir,
        )
        started = time.monotonic()
        for iteration in range(cfg.iters):
            row = self.step(iteration)
            done = iteration + 1
            if cfg.log_every and done % cfg.log_every == 0:
                self._log(row)
            if done == cfg.iters:
                break
            if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
                self._save("iter_%06d.ckpt" % done, done)
            if cfg.eval_every and done % cfg.eval_every == 0:
                self.evaluate(done)
        self._save(FINAL_CHECKPOINT, cfg.iters)
        self.evaluate(cfg.iters)
        self.check_teacher()
        report = self.report(time.monotonic() - started)
        report.write()
        for eval_report in report.final_evals:
            logger.info("Final %s", eval_report.summary())
        return report


def train(cfg, run_dir=None, statsd_client=None):
    """Train one run and write its checkpoints and reports."""
    if statsd_client is None:
        statsd_client = get_statsd_client()
    return Trainer(cfg, run_dir, statsd_client).run()
