# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Checkpoint container for SR networks.

A checkpoint is a single file laid out as:

    MIPKDCKPT 1\\n
    <manifest byte length, decimal>\\n
    <manifest: YAML document>
    <array data>

The manifest records the network spec, role, iteration and seed, plus an
ordered table of arrays (name, shape, dtype). Array data is the raw
little-endian float32 bytes of each array, concatenated in table order.
Nothing time-dependent is written, so equal weights always produce
byte-identical files.
"""

import logging
import os
from collections import OrderedDict

import numpy as np
import torch
import yaml

from mipkd.errors import ConfigurationError
from mipkd.helpers import file_digest
from mipkd.models.backbones import (
    ROLE_STUDENT,
    ROLE_TEACHER,
    NetworkSpec,
    SRModel,
)

__all__ = [
    "checkpoint_digest",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
    "write_checkpoint",
]

logger = logging.getLogger(__name__)

MAGIC = b"MIPKDCKPT 1\n"
DTYPE = "<f4"


def write_checkpoint(path, arrays, manifest):
    """Write named arrays and a manifest dict to path.

    :param arrays: An ordered mapping from names to tensors or arrays.
    :param manifest: Extra manifest fields; "arrays" is filled in here.
    """
    table = []
    blobs = []
    for name, value in arrays.items():
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu().to(torch.float32).numpy()
        data = np.ascontiguousarray(value, dtype=DTYPE)
        table.append(
            {"name": name, "shape": list(data.shape), "dtype": "float32"}
        )
        blobs.append(data.tobytes())
    manifest = dict(manifest, arrays=table)
    manifest_bytes = yaml.safe_dump(
        manifest, sort_keys=True, default_flow_style=False
    ).encode("UTF-8")
    tmp_path = "%s.tmp-%d" % (path, os.getpid())
    with open(tmp_path, "wb") as f:
        f.write(MAGIC)
        f.write(b"%d\n" % len(manifest_bytes))
        f.write(manifest_bytes)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp_path, path)


def read_checkpoint(path):
    """Return (manifest, OrderedDict of float32 tensors) from path."""
    with open(path, "rb") as f:
        if f.readline() != MAGIC:
            raise ConfigurationError("%s is not a checkpoint file" % path)
        length = int(f.readline())
        manifest = yaml.safe_load(f.read(length).decode("UTF-8"))
        arrays = OrderedDict()
        for entry in manifest["arrays"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            data = f.read(count * 4)
            if len(data) != count * 4:
                raise ConfigurationError(
                    "Checkpoint %s is truncated at %s" % (path, entry["name"])
                )
            array = np.frombuffer(data, dtype=DTYPE).reshape(entry["shape"])
            arrays[entry["name"]] = torch.from_numpy(
                array.astype(np.float32)
            )
    return manifest, arrays


def save_checkpoint(path, model, iteration=0, seed=0, extra=None):
    """Save an SRModel's weights and provenance to path."""
    manifest = {
        "spec": model.spec.to_dict(),
        "role": model.role,
        "iteration": int(iteration),
        "seed": int(seed),
        "extra": extra or {},
    }
    write_checkpoint(path, model.state_dict(), manifest)
    logger.info("Saved %s checkpoint to %s", model.role, path)
    return path


def checkpoint_digest(path):
    """SHA-256 of a checkpoint file, used to check teachers stay frozen."""
    return file_digest(path)


def load_checkpoint(path, role=None):
    """Rebuild an SRModel from a checkpoint.

    :param role: Role for the loaded model; defaults to the recorded role.
        Loading as a teacher freezes the model.
    """
    manifest, arrays = read_checkpoint(path)
    spec = NetworkSpec.from_dict(manifest["spec"])
    role = role or manifest.get("role", ROLE_STUDENT)
    model = SRModel(spec, role=role)
    model.load_state_dict(arrays)
    if role == ROLE_TEACHER:
        model.freeze()
    return model, manifest
