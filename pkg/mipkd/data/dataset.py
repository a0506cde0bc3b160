# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

"""Paired LR/HR image datasets and training patch sampling."""

import dataclasses
import glob
import logging
import os

import numpy as np
import torch
from PIL import Image

from mipkd.data.resize import bicubic_resize
from mipkd.data.synthetic import synth_textures
from mipkd.errors import ConfigurationError, DatasetError, DimensionError
from mipkd.models.backbones import SUPPORTED_SCALES

__all__ = [
    "DatasetSpec",
    "ImageDataset",
    "PatchBatch",
    "dihedral",
    "dihedral_inverse",
    "load_png",
    "lr_dir_for",
    "sample_batch",
    "write_dataset",
    "write_png",
]

logger = logging.getLogger(__name__)

SOURCE_DIRECTORY = "directory"
SOURCE_SYNTHETIC = "synthetic"
SOURCES = (SOURCE_DIRECTORY, SOURCE_SYNTHETIC)

DIHEDRAL_ORDER = 8


def load_png(path):
    """Read an 8-bit image as a 3×H×W float32 tensor in [0, 1]."""
    with Image.open(path) as image:
        data = np.asarray(image.convert("RGB"), dtype=np.uint8)
    return torch.from_numpy(data.astype(np.float32) / 255).permute(2, 0, 1)


def write_png(path, image):
    """Write a 3×H×W tensor in [0, 1] as an 8-bit RGB PNG."""
    data = image.detach().cpu().clamp(0, 1).permute(1, 2, 0).numpy()
    data = np.round(data * 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def lr_dir_for(hr_dir, scale):
    """Directory holding the pre-degraded LR counterparts of hr_dir."""
    return "%s_x%d" % (os.path.normpath(hr_dir), scale)


def mod_crop(image, scale):
    height, width = image.shape[-2:]
    return image[..., : height - height % scale, : width - width % scale]


def dihedral(patch, transform):
    """Apply one of the 8 flip/rotation transforms to a ...×H×W tensor.

    Transform t rotates by 90° (t mod 4) times, then flips horizontally
    when t ≥ 4.
    """
    if not 0 <= transform < DIHEDRAL_ORDER:
        raise ConfigurationError("No dihedral transform %r" % transform)
    patch = torch.rot90(patch, transform % 4, dims=(-2, -1))
    if transform >= 4:
        patch = torch.flip(patch, dims=(-1,))
    return patch


def dihedral_inverse(patch, transform):
    if not 0 <= transform < DIHEDRAL_ORDER:
        raise ConfigurationError("No dihedral transform %r" % transform)
    if transform >= 4:
        patch = torch.flip(patch, dims=(-1,))
    return torch.rot90(patch, -(transform % 4), dims=(-2, -1))


@dataclasses.dataclass
class DatasetSpec:
    source: str = SOURCE_SYNTHETIC
    hr_dir: str = None
    predegraded: bool = False
    scale: int = 2
    patch_size_lr: int = 48
    augment: bool = True
    synth_count: int = 32
    synth_size: int = 96
    synth_seed: int = 0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigurationError("source must be one of %s" % (SOURCES,))
        if self.source == SOURCE_DIRECTORY and not self.hr_dir:
            raise ConfigurationError("A directory dataset needs hr_dir")
        if self.predegraded and self.source != SOURCE_DIRECTORY:
            raise ConfigurationError(
                "Only directory datasets can be pre-degraded"
            )
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigurationError(
                "scale must be one of %s, not %r"
                % (SUPPORTED_SCALES, self.scale)
            )
        if self.patch_size_lr < 1:
            raise ConfigurationError("patch_size_lr must be positive")
        if self.synth_count < 1:
            raise ConfigurationError("synth_count must be positive")

    @property
    def patch_size_hr(self):
        return self.patch_size_lr * self.scale

    @property
    def name(self):
        if self.source == SOURCE_SYNTHETIC:
            return "synthetic-%d" % self.synth_seed
        path = os.path.normpath(self.hr_dir)
        if os.path.basename(path) == "hr":
            path = os.path.dirname(path)
        return os.path.basename(path)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {field.name for field in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(
                "Unknown dataset fields: %s" % ", ".join(unknown)
            )
        return cls(**data)


@dataclasses.dataclass
class PatchBatch:
    lr: torch.Tensor
    hr: torch.Tensor
    indices: list
    transforms: list
    seed: int = None


class ImageDataset:
    """HR images, and for pre-degraded sets their LR counterparts.

    Images too small for a training patch are skipped with a warning;
    pass `min_size=0` to keep everything, as evaluation does.
    """

    def __init__(self, spec, min_size=None):
        self.spec = spec
        if min_size is None:
            min_size = spec.patch_size_hr
        self.ids = []
        self.hr = []
        self.lr = []
        for image_id, hr, lr in self._read():
            height, width = hr.shape[-2:]
            if min(height, width) < min_size:
                logger.warning(
                    "Skipping %s: %dx%d is smaller than a %dx%d patch",
                    image_id,
                    height,
                    width,
                    min_size,
                    min_size,
                )
                continue
            self.ids.append(image_id)
            self.hr.append(hr)
            self.lr.append(lr)
        if not self.ids:
            raise DatasetError("No usable images in %s" % spec.name)
        logger.info("Loaded %d images for %s", len(self.ids), spec.name)

    def _read(self):
        scale = self.spec.scale
        if self.spec.source == SOURCE_SYNTHETIC:
            images = synth_textures(
                self.spec.synth_count,
                self.spec.synth_size,
                self.spec.synth_seed,
            )
            for index, image in enumerate(images):
                yield "%04d" % index, mod_crop(image, scale), None
            return
        paths = sorted(glob.glob(os.path.join(self.spec.hr_dir, "*.png")))
        if not paths:
            raise DatasetError("No PNG images in %s" % self.spec.hr_dir)
        lr_dir = lr_dir_for(self.spec.hr_dir, scale)
        for path in paths:
            image_id = os.path.splitext(os.path.basename(path))[0]
            try:
                hr = mod_crop(load_png(path), scale)
                lr = None
                if self.spec.predegraded:
                    lr = load_png(os.path.join(lr_dir, os.path.basename(path)))
            except OSError as e:
                logger.warning("Skipping %s: %s", path, e)
                continue
            if lr is not None and (
                lr.shape[-2] * scale != hr.shape[-2]
                or lr.shape[-1] * scale != hr.shape[-1]
            ):
                logger.warning(
                    "Skipping %s: LR image does not match at x%d",
                    image_id,
                    scale,
                )
                continue
            yield image_id, hr, lr

    def __len__(self):
        return len(self.ids)

    def pair(self, index):
        """The full (lr, hr) pair of one image."""
        hr = self.hr[index]
        lr = self.lr[index]
        if lr is None:
            scale = self.spec.scale
            lr = bicubic_resize(
                hr, hr.shape[-2] // scale, hr.shape[-1] // scale
            )
        return lr, hr


def _randint(high, generator):
    return int(torch.randint(high, (1,), generator=generator))


def sample_batch(dataset, batch, generator):
    """Crop, augment and degrade `batch` training patches.

    Per item the generator yields, in order: the image index, the patch
    row, the patch column and the dihedral transform. LR patches come
    from bicubic degradation of the augmented HR patch unless the
    dataset is pre-degraded, in which case the aligned LR region is
    cropped and augmented identically.
    """
    spec = dataset.spec
    scale = spec.scale
    p = spec.patch_size_lr
    lrs, hrs, indices, transforms = [], [], [], []
    for _ in range(batch):
        index = _randint(len(dataset), generator)
        hr = dataset.hr[index]
        top = _randint(hr.shape[-2] // scale - p + 1, generator)
        left = _randint(hr.shape[-1] // scale - p + 1, generator)
        transform = _randint(DIHEDRAL_ORDER, generator) if spec.augment else 0
        hr_patch = hr[
            :,
            top * scale : (top + p) * scale,
            left * scale : (left + p) * scale,
        ]
        hr_patch = dihedral(hr_patch, transform)
        if dataset.lr[index] is None:
            lr_patch = bicubic_resize(hr_patch, p, p)
        else:
            lr_patch = dataset.lr[index][:, top : top + p, left : left + p]
            lr_patch = dihedral(lr_patch, transform)
        lrs.append(lr_patch)
        hrs.append(hr_patch)
        indices.append(index)
        transforms.append(transform)
    return PatchBatch(
        lr=torch.stack(lrs).contiguous(),
        hr=torch.stack(hrs).contiguous(),
        indices=indices,
        transforms=transforms,
        seed=generator.initial_seed(),
    )


def write_dataset(out_dir, images, scales=()):
    """Write images as `hr/NNNN.png`, plus `hr_x<s>/` LR sets per scale.

    :return: The HR directory.
    """
    hr_dir = os.path.join(out_dir, "hr")
    os.makedirs(hr_dir, exist_ok=True)
    for scale in scales:
        os.makedirs(lr_dir_for(hr_dir, scale), exist_ok=True)
    for index, image in enumerate(images):
        name = "%04d.png" % index
        write_png(os.path.join(hr_dir, name), image)
        for scale in scales:
            hr = mod_crop(load_png(os.path.join(hr_dir, name)), scale)
            if min(hr.shape[-2:]) < scale * 4:
                raise DimensionError(
                    "Image %s is too small to degrade at x%d" % (name, scale)
                )
            lr = bicubic_resize(
                hr, hr.shape[-2] // scale, hr.shape[-1] // scale
            )
            write_png(os.path.join(lr_dir_for(hr_dir, scale), name), lr)
    logger.info("Wrote %d images to %s", len(images), hr_dir)
    return hr_dir
