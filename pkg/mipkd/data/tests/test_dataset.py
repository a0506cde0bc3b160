# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import os

import torch
from fixtures import TempDir
from testtools import TestCase

from mipkd.data.dataset import (
    DatasetSpec,
    ImageDataset,
    dihedral,
    dihedral_inverse,
    load_png,
    lr_dir_for,
    sample_batch,
    write_dataset,
    write_png,
)
from mipkd.data.resize import bicubic_resize
from mipkd.data.synthetic import synth_textures
from mipkd.errors import ConfigurationError, DatasetError


def synthetic_spec(**kwargs):
    fields = dict(synth_count=4, synth_size=48, patch_size_lr=8, scale=2)
    fields.update(kwargs)
    return DatasetSpec(**fields)


class TestSynthTextures(TestCase):
    def test_shapes(self):
        images = synth_textures(32, 96, 0)
        self.assertEqual(32, len(images))
        for image in images:
            self.assertEqual((3, 96, 96), tuple(image.shape))
            self.assertEqual(torch.float32, image.dtype)

    def test_deterministic(self):
        first = synth_textures(3, 40, 7)
        second = synth_textures(3, 40, 7)
        for a, b in zip(first, second):
            self.assertTrue(torch.equal(a, b))
        self.assertFalse(torch.equal(first[0], synth_textures(1, 40, 8)[0]))

    def test_dynamic_range(self):
        for image in synth_textures(8, 64, 3):
            self.assertLess(image.min().item(), 0.1)
            self.assertGreater(image.max().item(), 0.9)
            self.assertGreaterEqual(image.min().item(), 0.0)
            self.assertLessEqual(image.max().item(), 1.0)

    def test_rejects_tiny_images(self):
        self.assertRaises(ConfigurationError, synth_textures, 1, 16, 0)


class TestDihedral(TestCase):
    def setUp(self):
        super().setUp()
        self.patch = torch.arange(2 * 3 * 3, dtype=torch.float32).view(2, 3, 3)

    def test_inverse_restores_patch(self):
        for transform in range(8):
            self.assertTrue(
                torch.equal(
                    self.patch,
                    dihedral_inverse(
                        dihedral(self.patch, transform), transform
                    ),
                ),
                transform,
            )

    def test_group_closure(self):
        images = [dihedral(self.patch, t) for t in range(8)]
        keys = [tuple(image.flatten().tolist()) for image in images]
        self.assertEqual(8, len(set(keys)))
        for first in range(8):
            for second in range(8):
                composed = dihedral(dihedral(self.patch, first), second)
                self.assertIn(tuple(composed.flatten().tolist()), keys)

    def test_rejects_unknown_transform(self):
        self.assertRaises(ConfigurationError, dihedral, self.patch, 8)


class TestDatasetSpec(TestCase):
    def test_defaults(self):
        spec = DatasetSpec()
        self.assertEqual(48, spec.patch_size_lr)
        self.assertEqual(96, spec.patch_size_hr)

    def test_rejects_bad_fields(self):
        self.assertRaises(ConfigurationError, DatasetSpec, scale=8)
        self.assertRaises(ConfigurationError, DatasetSpec, source="web")
        self.assertRaises(ConfigurationError, DatasetSpec, source="directory")
        self.assertRaises(
            ConfigurationError, DatasetSpec.from_dict, {"folder": "x"}
        )

    def test_names(self):
        self.assertEqual(
            "set5", DatasetSpec(source="directory", hr_dir="data/set5/hr").name
        )
        self.assertEqual(
            "urban", DatasetSpec(source="directory", hr_dir="urban/").name
        )
        self.assertEqual("data/set5/hr_x3", lr_dir_for("data/set5/hr/", 3))


class TestSampleBatch(TestCase):
    def test_shapes(self):
        dataset = ImageDataset(synthetic_spec(patch_size_lr=48, synth_size=96))
        batch = sample_batch(dataset, 16, torch.Generator().manual_seed(0))
        self.assertEqual((16, 3, 48, 48), tuple(batch.lr.shape))
        self.assertEqual((16, 3, 96, 96), tuple(batch.hr.shape))
        self.assertEqual(16, len(batch.indices))
        self.assertEqual(0, batch.seed)

    def test_deterministic_without_augmentation(self):
        dataset = ImageDataset(synthetic_spec(augment=False))
        first = sample_batch(dataset, 4, torch.Generator().manual_seed(3))
        second = sample_batch(dataset, 4, torch.Generator().manual_seed(3))
        self.assertTrue(torch.equal(first.lr, second.lr))
        self.assertTrue(torch.equal(first.hr, second.hr))
        self.assertEqual([0] * 4, first.transforms)

    def test_deterministic_with_augmentation(self):
        dataset = ImageDataset(synthetic_spec())
        first = sample_batch(dataset, 8, torch.Generator().manual_seed(3))
        second = sample_batch(dataset, 8, torch.Generator().manual_seed(3))
        self.assertTrue(torch.equal(first.lr, second.lr))
        self.assertEqual(first.transforms, second.transforms)

    def test_values_in_range_and_aligned(self):
        dataset = ImageDataset(synthetic_spec())
        batch = sample_batch(dataset, 8, torch.Generator().manual_seed(1))
        for tensor in (batch.lr, batch.hr):
            self.assertGreaterEqual(tensor.min().item(), 0.0)
            self.assertLessEqual(tensor.max().item(), 1.0)
        for lr, hr in zip(batch.lr, batch.hr):
            self.assertLess(
                (bicubic_resize(hr, 8, 8) - lr).abs().max().item(), 1e-6
            )

    def test_rotation_commutes_with_degradation(self):
        hr = synth_textures(1, 32, 5)[0][:, :16, :16]
        for transform in range(8):
            rotated_then_degraded = bicubic_resize(
                dihedral(hr, transform), 8, 8
            )
            degraded_then_rotated = dihedral(
                bicubic_resize(hr, 8, 8), transform
            )
            self.assertLess(
                (rotated_then_degraded - degraded_then_rotated)
                .abs()
                .max()
                .item(),
                1e-6,
            )

    def test_augmentation_is_used(self):
        dataset = ImageDataset(synthetic_spec())
        batch = sample_batch(dataset, 64, torch.Generator().manual_seed(2))
        self.assertGreater(len(set(batch.transforms)), 1)


class TestImageDirectories(TestCase):
    def setUp(self):
        super().setUp()
        self.root = self.useFixture(TempDir()).path

    def test_png_round_trip_is_quantised(self):
        path = os.path.join(self.root, "image.png")
        image = torch.rand(3, 5, 7, generator=torch.Generator().manual_seed(0))
        write_png(path, image)
        loaded = load_png(path)
        self.assertEqual((3, 5, 7), tuple(loaded.shape))
        self.assertLessEqual(
            (loaded - image).abs().max().item(), 0.5 / 255 + 1e-6
        )
        write_png(path, loaded)
        self.assertTrue(torch.equal(loaded, load_png(path)))

    def test_directory_dataset(self):
        hr_dir = write_dataset(self.root, synth_textures(3, 40, 1))
        dataset = ImageDataset(
            DatasetSpec(source="directory", hr_dir=hr_dir, patch_size_lr=8)
        )
        self.assertEqual(["0000", "0001", "0002"], dataset.ids)
        lr, hr = dataset.pair(1)
        self.assertEqual((3, 20, 20), tuple(lr.shape))
        self.assertEqual((3, 40, 40), tuple(hr.shape))

    def test_predegraded_dataset(self):
        hr_dir = write_dataset(self.root, synth_textures(2, 36, 1), (2, 3))
        self.assertTrue(os.path.isdir(os.path.join(self.root, "hr_x3")))
        spec = DatasetSpec(
            source="directory",
            hr_dir=hr_dir,
            predegraded=True,
            scale=3,
            patch_size_lr=6,
        )
        dataset = ImageDataset(spec)
        lr, hr = dataset.pair(0)
        self.assertEqual((3, 12, 12), tuple(lr.shape))
        batch = sample_batch(dataset, 4, torch.Generator().manual_seed(0))
        self.assertEqual((4, 3, 6, 6), tuple(batch.lr.shape))
        self.assertEqual((4, 3, 18, 18), tuple(batch.hr.shape))

    def test_small_images_are_skipped(self):
        images = synth_textures(2, 32, 0) + synth_textures(1, 64, 1)
        hr_dir = write_dataset(self.root, images)
        spec = DatasetSpec(
            source="directory", hr_dir=hr_dir, patch_size_lr=24, scale=2
        )
        dataset = ImageDataset(spec)
        self.assertEqual(["0002"], dataset.ids)

    def test_all_skipped_is_an_error(self):
        hr_dir = write_dataset(self.root, synth_textures(2, 32, 0))
        spec = DatasetSpec(
            source="directory", hr_dir=hr_dir, patch_size_lr=24, scale=2
        )
        self.assertRaises(DatasetError, ImageDataset, spec)

    def test_unreadable_images_are_skipped(self):
        hr_dir = write_dataset(self.root, synth_textures(1, 32, 0))
        with open(os.path.join(hr_dir, "0001.png"), "wb") as f:
            f.write(b"not a png")
        dataset = ImageDataset(
            DatasetSpec(source="directory", hr_dir=hr_dir, patch_size_lr=8)
        )
        self.assertEqual(["0000"], dataset.ids)

    def test_empty_directory(self):
        self.assertRaises(
            DatasetError,
            ImageDataset,
            DatasetSpec(source="directory", hr_dir=self.root),
        )
