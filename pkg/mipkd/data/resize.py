# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""MATLAB-style bicubic resizing.

Each axis is resized by a dense (out × in) weight matrix built from the
cubic convolution kernel with a = -0.5. When downscaling, the kernel is
stretched by the inverse scale so that it also low-pass filters.
Samples beyond the image edge are folded back symmetrically, so every
row of a weight matrix sums to one.
"""

import functools
import math

import numpy as np
import torch

from mipkd.errors import DimensionError

__all__ = [
    "bicubic_resize",
    "cubic",
    "resize_weights",
]

KERNEL_A = -0.5
KERNEL_WIDTH = 4
MIN_SIZE = 4


def cubic(x, a=KERNEL_A):
    x = np.abs(x)
    x2 = x * x
    x3 = x2 * x
    inner = (a + 2) * x3 - (a + 3) * x2 + 1
    outer = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, inner, np.where(x <= 2, outer, 0.0))


def _fold(indices, length):
    """Map 1-based indices outside [1, length] back by mirroring."""
    period = 2 * length
    folded = np.mod(indices - 1, period)
    return np.where(folded < length, folded, period - 1 - folded)


@functools.lru_cache(maxsize=64)
def resize_weights(in_length, out_length, antialias=True):
    """The (out_length × in_length) float64 resampling matrix."""
    scale = out_length / in_length
    width = KERNEL_WIDTH
    if scale < 1 and antialias:
        width = KERNEL_WIDTH / scale
    # Output pixel centres mapped into input coordinates (1-based).
    x = np.arange(1, out_length + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - width / 2)
    taps = math.ceil(width) + 2
    indices = left[:, None] + np.arange(taps)[None, :]
    distance = u[:, None] - indices
    if scale < 1 and antialias:
        weights = scale * cubic(distance * scale)
    else:
        weights = cubic(distance)
    weights = weights / weights.sum(axis=1, keepdims=True)
    matrix = np.zeros((out_length, in_length), dtype=np.float64)
    rows = np.repeat(np.arange(out_length), taps)
    columns = _fold(indices.astype(np.int64), in_length).ravel()
    np.add.at(matrix, (rows, columns), weights.ravel())
    matrix.setflags(write=False)
    return matrix


def bicubic_resize(image, out_h, out_w, antialias=True):
    """Resize a ...×H×W image tensor to ...×out_h×out_w.

    The result is clipped to [0, 1] and has the input's dtype.
    """
    if image.dim() < 2:
        raise DimensionError(
            "Cannot resize a tensor of shape %s" % (tuple(image.shape),)
        )
    in_h, in_w = image.shape[-2:]
    if in_h < MIN_SIZE or in_w < MIN_SIZE:
        raise DimensionError(
            "Images must be at least %dx%d to resize, not %dx%d"
            % (MIN_SIZE, MIN_SIZE, in_h, in_w)
        )
    if out_h < 1 or out_w < 1:
        raise DimensionError("Cannot resize to %dx%d" % (out_h, out_w))
    rows = torch.from_numpy(np.array(resize_weights(in_h, out_h, antialias)))
    columns = torch.from_numpy(
        np.array(resize_weights(in_w, out_w, antialias))
    )
    rows = rows.to(image.device)
    columns = columns.to(image.device)
    resized = rows @ image.to(torch.float64) @ columns.T
    return resized.clamp(0, 1).to(image.dtype)
