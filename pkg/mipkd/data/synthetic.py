# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Procedural high-resolution textures for desk-scale experiments."""

import numpy as np
import torch

from mipkd.errors import ConfigurationError

__all__ = [
    "synth_textures",
]

MIN_SIZE = 32


def _grating(rng, yy, xx, size):
    frequency = rng.uniform(1.0, size / 6.0)
    angle = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    position = xx * np.cos(angle) + yy * np.sin(angle)
    return np.sin(2 * np.pi * frequency * position / size + phase)


def _checkerboard(rng, yy, xx, size):
    cell = int(rng.integers(2, max(3, size // 4)))
    return (((yy // cell) + (xx // cell)) % 2) * 2.0 - 1.0


def _filtered_noise(rng, size):
    noise = rng.standard_normal((size, size))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    cutoff = rng.uniform(0.05, 0.25)
    low_pass = np.exp(-(fy**2 + fx**2) / (2 * cutoff**2))
    filtered = np.real(np.fft.ifft2(np.fft.fft2(noise) * low_pass))
    return filtered / (np.abs(filtered).max() + 1e-12)


def _texture(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    channels = []
    patterns = [
        _grating(rng, yy, xx, size),
        _grating(rng, yy, xx, size),
        _checkerboard(rng, yy, xx, size),
        _filtered_noise(rng, size),
    ]
    for _ in range(3):
        mix = rng.uniform(0.2, 1.0, size=len(patterns))
        channels.append(sum(w * p for w, p in zip(mix, patterns)))
    image = np.stack(channels)
    low, high = image.min(), image.max()
    return (image - low) / (high - low)


def synth_textures(count, size, seed):
    """Deterministic 3×size×size float32 images in [0, 1].

    Each image mixes sinusoidal gratings, a checkerboard and low-pass
    filtered noise with random per-channel weights, then is stretched to
    the full [0, 1] range.
    """
    if size < MIN_SIZE:
        raise ConfigurationError(
            "Synthetic textures must be at least %d pixels" % MIN_SIZE
        )
    images = []
    for index in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        images.append(torch.from_numpy(_texture(rng, size).astype(np.float32)))
    return images
