# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import hashlib

import numpy as np
import statsd
import torch

from mipkd.config import config

# Independent random streams of a run, keyed as (seed, iteration, stream,
# tap). Initialisation uses iteration 0.
STREAM_DATA = 0
STREAM_MASK = 1
STREAM_ROUTE = 2
STREAM_INIT = 3


def run_dir_name(method, arch, scale, seed):
    """Name of the directory holding one run's checkpoints and reports."""
    return "%s_%s_%dx_%d" % (method, arch.lower(), scale, seed)


def derive_seed(seed, *keys):
    """Derive a 63-bit seed from a base seed and a path of integer keys.

    The same (seed, keys) always produce the same value, so any
    per-iteration random state can be regenerated after the fact.
    """
    sequence = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> 1)


def make_generator(seed, *keys):
    generator = torch.Generator()
    generator.manual_seed(derive_seed(seed, *keys))
    return generator


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def get_statsd_client():
    """Return a statsd client if one is configured, else None."""
    host = config.get("statsd_host")
    port = config.get("statsd_port")
    prefix = config.get("statsd_prefix")
    if host and port and prefix:
        return statsd.StatsClient(host, int(port), prefix)
    return None
