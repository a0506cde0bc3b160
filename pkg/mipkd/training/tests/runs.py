# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Tiny runs for exercising the training code paths quickly."""

import os

import yaml

from mipkd.models.backbones import ROLE_TEACHER, NetworkSpec, build_model
from mipkd.models.checkpoint import save_checkpoint
from mipkd.training.config import load_train_config, merge_documents

TEACHER_SPEC = NetworkSpec(channels=8, blocks=4, scale=2)
STUDENT_SPEC = NetworkSpec(channels=4, blocks=2, scale=2)


def write_teacher(root, spec=TEACHER_SPEC, seed=7, name="teacher.ckpt"):
    path = os.path.join(root, name)
    save_checkpoint(path, build_model(spec, seed, ROLE_TEACHER))
    return path


def tiny_document(root, teacher_ckpt=None, **updates):
    document = {
        "method": "mipkd",
        "teacher": TEACHER_SPEC.to_dict(),
        "student": STUDENT_SPEC.to_dict(),
        "teacher_ckpt": teacher_ckpt,
        "taps": {"count": 2},
        "lr": 0.001,
        "iters": 3,
        "batch": 2,
        "dataset": {
            "scale": 2,
            "patch_size_lr": 8,
            "synth_count": 3,
            "synth_size": 32,
        },
        "eval_sets": [
            {"scale": 2, "synth_count": 1, "synth_size": 32, "synth_seed": 9}
        ],
        "log_every": 1,
        "run_root": os.path.join(root, "runs"),
    }
    return merge_documents(document, updates)


def write_config(root, document, name="run.yaml"):
    path = os.path.join(root, name)
    with open(path, "w") as f:
        yaml.safe_dump(document, f)
    return path


def tiny_config(root, teacher_ckpt=None, overrides=(), **updates):
    """A TrainConfig of a few iterations on tiny networks."""
    document = tiny_document(root, teacher_ckpt, **updates)
    return load_train_config(write_config(root, document), overrides)
