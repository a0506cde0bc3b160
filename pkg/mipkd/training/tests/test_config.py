# Copyright 2026 Canonical Ltd.  This software is licensed under the
# GNU Affero General Public License version 3 (see the file LICENSE).

import os

import yaml
from fixtures import EnvironmentVariable, TempDir
from testtools import TestCase

from mipkd.errors import ConfigurationError
from mipkd.training.chain import check_chain
from mipkd.training.config import (
    TrainConfig,
    apply_overrides,
    default_document,
    load_chain_config,
    load_train_config,
    lr_at,
    parse_override,
)
from mipkd.training.tests.runs import tiny_document, write_config

PROFILES = os.path.join(
    os.path.dirname(__file__), os.pardir, os.pardir, os.pardir, "profiles"
)


class TestTrainConfig(TestCase):
    def test_training_defaults(self):
        cfg = TrainConfig()
        self.assertEqual("mipkd", cfg.method)
        self.assertEqual(1e-4, cfg.lr)
        self.assertEqual(16, cfg.batch)
        self.assertEqual(0.9, cfg.optimizer.beta1)
        self.assertEqual(0.99, cfg.optimizer.beta2)
        self.assertEqual(1e-8, cfg.optimizer.eps)
        self.assertEqual(0.1, cfg.lr_decay_factor)
        self.assertEqual(48, cfg.dataset.patch_size_lr)

    def test_rejects_bad_values(self):
        self.assertRaises(ConfigurationError, TrainConfig, method="rkd")
        self.assertRaises(ConfigurationError, TrainConfig, iters=0)
        self.assertRaises(ConfigurationError, TrainConfig, lr=0.0)

    def test_scales_must_agree(self):
        data = default_document()
        data["dataset"]["scale"] = 2
        self.assertRaises(ConfigurationError, TrainConfig.from_dict, data)

    def test_teacher_required_to_run(self):
        self.assertRaises(ConfigurationError, TrainConfig().check_runnable)
        TrainConfig(teacher_ckpt="teacher.ckpt").check_runnable()
        data = default_document()
        data["method"] = "scratch"
        data["dataset"]["scale"] = 2
        data["student"]["scale"] = 2
        TrainConfig.from_dict(data).check_runnable()

    def test_dict_round_trip(self):
        cfg = TrainConfig(teacher_ckpt="t.ckpt", seed=3)
        self.assertEqual(cfg, TrainConfig.from_dict(cfg.to_dict()))
        yaml.safe_dump(cfg.to_dict())

    def test_unknown_keys_are_named(self):
        data = default_document()
        data["mixer"]["mask_prob"] = 0.3
        error = self.assertRaises(
            ConfigurationError, TrainConfig.from_dict, data
        )
        self.assertIn("mixer.mask_prob", str(error))
        data = default_document()
        data["optimiser"] = {}
        self.assertRaises(ConfigurationError, TrainConfig.from_dict, data)


class TestLearningRate(TestCase):
    def test_step_decay(self):
        cfg = TrainConfig(lr_decay_every=100000)
        self.assertEqual(1e-4, lr_at(0, cfg))
        self.assertEqual(1e-4, lr_at(99999, cfg))
        self.assertAlmostEqual(1e-5, lr_at(100000, cfg), delta=1e-18)
        self.assertAlmostEqual(1e-6, lr_at(200000, cfg), delta=1e-18)

    def test_negative_iteration(self):
        self.assertRaises(ConfigurationError, lr_at, -1, TrainConfig())


class TestOverrides(TestCase):
    def test_parse(self):
        self.assertEqual((["lr"], 0.001), parse_override("lr=0.001"))
        self.assertEqual(
            (["mixer", "ae_loss_enabled"], False),
            parse_override("mixer.ae_loss_enabled=false"),
        )
        self.assertEqual(
            (["mixer", "encoder_arch"], "MLP"),
            parse_override("mixer.encoder_arch=MLP"),
        )
        self.assertRaises(ConfigurationError, parse_override, "lr")

    def test_apply(self):
        data = apply_overrides(
            {"mixer": {"grid_cell": 1}}, ["mixer.grid_cell=2", "seed=4"]
        )
        self.assertEqual({"mixer": {"grid_cell": 2}, "seed": 4}, data)


class TestLoadTrainConfig(TestCase):
    def setUp(self):
        super().setUp()
        self.root = self.useFixture(TempDir()).path
        self.useFixture(EnvironmentVariable("MIPKD_SEED"))

    def test_document_and_overrides(self):
        path = write_config(self.root, tiny_document(self.root, "t.ckpt"))
        cfg = load_train_config(
            path, ["mixer.mask_strategy=cka", "blockmix.keep_prob=0.25"]
        )
        self.assertEqual("cka", cfg.mixer.mask_strategy)
        self.assertEqual(0.25, cfg.blockmix.keep_prob)
        self.assertEqual(4, cfg.student.channels)
        self.assertEqual(3, cfg.iters)

    def test_residual_scaling_follows_width(self):
        cfg = load_train_config(None, ["teacher.channels=256"])
        self.assertEqual(0.1, cfg.teacher.res_scale)
        cfg = load_train_config(None, ["teacher.channels=128"])
        self.assertEqual(1.0, cfg.teacher.res_scale)

    def test_seed_from_environment(self):
        self.useFixture(EnvironmentVariable("MIPKD_SEED", "17"))
        path = write_config(self.root, tiny_document(self.root, seed=2))
        self.assertEqual(17, load_train_config(path).seed)

    def test_require_teacher(self):
        path = write_config(self.root, tiny_document(self.root))
        self.assertRaises(
            ConfigurationError, load_train_config, path, (), True
        )

    def test_bad_documents(self):
        path = os.path.join(self.root, "bad.yaml")
        with open(path, "w") as f:
            f.write("- a list\n")
        self.assertRaises(ConfigurationError, load_train_config, path)
        self.assertRaises(
            ConfigurationError,
            load_train_config,
            os.path.join(self.root, "missing.yaml"),
        )


class TestProfiles(TestCase):
    def setUp(self):
        super().setUp()
        self.useFixture(EnvironmentVariable("MIPKD_SEED"))

    def profile(self, name):
        return os.path.join(PROFILES, name)

    def test_defaults_document_matches_code(self):
        with open(self.profile("defaults.yaml")) as f:
            document = yaml.safe_load(f)
        self.assertEqual(default_document(), document)
        self.assertEqual(
            TrainConfig(), load_train_config(self.profile("defaults.yaml"))
        )

    def test_toy_profiles_load(self):
        teacher = load_train_config(self.profile("toy-teacher.yaml"))
        self.assertEqual("scratch", teacher.method)
        toy = load_train_config(
            self.profile("toy.yaml"), require_teacher=True
        )
        self.assertEqual(teacher.student, toy.teacher)
        self.assertEqual(2, toy.scale)
        self.assertEqual(2000, toy.iters)
        self.assertEqual(24, toy.dataset.patch_size_lr)
        self.assertEqual(8, toy.batch)

    def test_depth_profile(self):
        teacher = load_train_config(self.profile("toy-teacher.yaml"))
        depth = load_train_config(
            self.profile("toy-depth.yaml"), require_teacher=True
        )
        self.assertEqual(teacher.student, depth.teacher)
        self.assertEqual(16, depth.student.channels)
        self.assertEqual(4, depth.student.blocks)
        self.assertEqual(8, depth.teacher.blocks)
        self.assertEqual(2000, depth.iters)
        toy = load_train_config(self.profile("toy.yaml"))
        self.assertEqual(toy.eval_sets, depth.eval_sets)

    def test_chain_profile(self):
        stages = load_chain_config(self.profile("toy-chain.yaml"))
        self.assertEqual(2, len(stages))
        self.assertEqual(stages[0].student, stages[1].teacher)
        self.assertEqual(4, stages[1].student.blocks)
        check_chain(stages)

    def test_div2k_profile(self):
        cfg = load_train_config(self.profile("edsr-x4-div2k.yaml"))
        self.assertEqual(0.1, cfg.teacher.res_scale)
        self.assertEqual(4, len(cfg.eval_sets))
        self.assertEqual(250000, cfg.iters)
