# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Image quality metrics on the luma channel."""

import numpy as np
from skimage.metrics import (
    mean_squared_error,
    peak_signal_noise_ratio,
    structural_similarity,
)

from mipkd.errors import DimensionError

__all__ = [
    "PSNR_CAP",
    "psnr",
    "rgb_to_y",
    "shave",
    "ssim",
]

# ITU-R BT.601 studio-swing luma, for RGB in [0, 1].
Y_WEIGHTS = (65.481, 128.553, 24.966)
Y_OFFSET = 16.0

PSNR_CAP = 100.0
MSE_FLOOR = 1e-10

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def rgb_to_y(image):
    """Luma of a 3×H×W (or B×3×H×W) image, keeping a channel axis."""
    if image.dim() not in (3, 4) or image.shape[-3] != 3:
        raise DimensionError(
            "Expected an RGB image, got shape %s" % (tuple(image.shape),)
        )
    r, g, b = image.unbind(dim=-3)
    y = Y_WEIGHTS[0] * r + Y_WEIGHTS[1] * g + Y_WEIGHTS[2] * b + Y_OFFSET
    return (y / 255.0).unsqueeze(-3)


def shave(image, border):
    """Drop `border` pixels from each side of the last two axes."""
    if border <= 0:
        return image
    height, width = image.shape[-2:]
    if height <= 2 * border or width <= 2 * border:
        raise DimensionError(
            "Cannot crop %d pixels from a %dx%d image"
            % (border, height, width)
        )
    return image[..., border:-border, border:-border]


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(
            "Cannot compare images of shapes %s and %s"
            % (tuple(a.shape), tuple(b.shape))
        )


def _planes(image):
    return image.detach().cpu().double().numpy()


def psnr(a, b, max_val=1.0):
    """Peak signal-to-noise ratio in dB, capped at PSNR_CAP."""
    _check_same_shape(a, b)
    a, b = _planes(a), _planes(b)
    if mean_squared_error(a, b) < MSE_FLOOR:
        return PSNR_CAP
    value = peak_signal_noise_ratio(a, b, data_range=max_val)
    return min(PSNR_CAP, float(value))


def ssim(a, b, max_val=1.0):
    """Mean single-scale SSIM over valid 11×11 Gaussian windows.

    Leading axes are treated as independent planes and averaged.
    """
    _check_same_shape(a, b)
    if a.dim() < 2:
        raise DimensionError("SSIM needs an image, got %s" % (a.shape,))
    height, width = a.shape[-2:]
    if height < SSIM_WINDOW or width < SSIM_WINDOW:
        raise DimensionError(
            "SSIM needs images of at least %dx%d, not %dx%d"
            % (SSIM_WINDOW, SSIM_WINDOW, height, width)
        )
    x = _planes(a).reshape(-1, height, width)
    y = _planes(b).reshape(-1, height, width)
    values = [
        structural_similarity(
            plane_x,
            plane_y,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            data_range=max_val,
            K1=SSIM_K1,
            K2=SSIM_K2,
        )
        for plane_x, plane_y in zip(x, y)
    ]
    return float(np.mean(values))
