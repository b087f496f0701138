"""
Tests for the numpy CNN, noise-injection training and Monte Carlo accuracy.
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from datasets import Dataset, make_synthetic_split
from design_space import Backbone, HardwareParams, Rollout
from dnn_eval import NoiseModel, build_network, gradient_check, mc_accuracy, train_noise_injection
from errors import DatasetError, DesignSpaceError, TrainingDivergedError

HW = HardwareParams(64, 8, 2)

TINY_BACKBONE = Backbone(num_conv_layers=2, num_fc_layers=2, fc_hidden_size=5,
                         input_shape=(4, 4, 2), num_classes=3, pool_after=(0,))
TINY_ROLLOUT = Rollout(((3, 3), (2, 1)), HW)

SMALL_BACKBONE = Backbone(num_conv_layers=2, num_fc_layers=2, fc_hidden_size=16,
                          input_shape=(8, 8, 3), num_classes=2, pool_after=(0, 1))
SMALL_ROLLOUT = Rollout(((8, 3), (8, 3)), HW)


def small_split(seed=0):
    return make_synthetic_split(num_classes=2, image_size=8, train_per_class=32, test_per_class=16, seed=seed)


class TestNetwork(unittest.TestCase):
    def test_build_matches_backbone(self):
        net = build_network(TINY_ROLLOUT, TINY_BACKBONE, seed=0)
        self.assertEqual(net.parameter_count, 128)
        self.assertEqual(net.params["conv0.weight"].shape, (3, 2, 3, 3))
        self.assertEqual(net.params["fc0.weight"].shape, (8, 5))
        self.assertEqual(sorted(net.weight_names), ["conv0.weight", "conv1.weight", "fc0.weight", "fc1.weight"])

    def test_layer_count_mismatch(self):
        with self.assertRaises(DesignSpaceError):
            build_network(Rollout(((3, 3),), HW), TINY_BACKBONE, seed=0)

    def test_forward_shape(self):
        net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)
        logits, _ = net.forward(np.zeros((5, 3, 8, 8)))
        self.assertEqual(logits.shape, (5, 2))
        features, _ = net.forward(np.zeros((5, 3, 8, 8)), until_flatten=True)
        self.assertEqual(features.shape, (5, 8, 2, 2))

    def test_gradients_match_finite_differences(self):
        net = build_network(TINY_ROLLOUT, TINY_BACKBONE, seed=3)
        for name in net.params:
            if name.endswith(".bias"):
                net.params[name][:] = 0.1
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 2, 4, 4))
        y = np.array([0, 1, 2, 1])
        errors = gradient_check(net, x, y)
        self.assertEqual(set(errors), set(net.params))
        for name, err in errors.items():
            self.assertLessEqual(err, 1e-4, name)

    def test_empty_dataset_accuracy(self):
        net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)
        empty = Dataset(np.zeros((0, 3, 8, 8)), np.zeros(0, dtype=np.int64), 2)
        with self.assertRaises(DatasetError):
            net.accuracy(empty)


class TestNoiseModel(unittest.TestCase):
    def test_negative_sigma(self):
        with self.assertRaises(ValueError):
            NoiseModel(sigma=-0.1)

    def test_perturbs_weights_only(self):
        net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)
        perturbed = NoiseModel(0.1).perturb(net, np.random.default_rng(0))
        for name in net.params:
            if name.endswith(".weight"):
                self.assertFalse(np.array_equal(perturbed[name], net.params[name]))
            else:
                self.assertIs(perturbed[name], net.params[name])

    def test_zero_sigma_is_identity(self):
        net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)
        self.assertIs(NoiseModel(0.0).perturb(net, np.random.default_rng(0)), net.params)


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.train, self.test = small_split()
        self.net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)

    def test_training_reduces_loss(self):
        before = self.net.loss(self.train)
        trained = train_noise_injection(self.net, self.train, NoiseModel(0.0), epochs=10, lr=0.02, seed=0)
        self.assertEqual(len(trained.loss_history), 10)
        self.assertLess(trained.loss(self.train), before)
        # original left untouched
        self.assertAlmostEqual(self.net.loss(self.train), before)

    def test_same_seed_same_weights(self):
        a = train_noise_injection(self.net, self.train, NoiseModel(0.1), epochs=2, lr=0.02, seed=7)
        b = train_noise_injection(self.net, self.train, NoiseModel(0.1), epochs=2, lr=0.02, seed=7)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_divergence_detected(self):
        bad = Dataset(np.full((4, 3, 8, 8), np.nan), np.zeros(4, dtype=np.int64), 2)
        with self.assertRaises(TrainingDivergedError) as ctx:
            train_noise_injection(self.net, bad, NoiseModel(0.1), epochs=1, seed=0)
        self.assertEqual((ctx.exception.epoch, ctx.exception.batch), (0, 0))

    def test_epochs_must_be_positive(self):
        with self.assertRaises(ValueError):
            train_noise_injection(self.net, self.train, NoiseModel(0.1), epochs=0)


class TestMonteCarlo(unittest.TestCase):
    def setUp(self):
        _, self.test = small_split()
        self.net = build_network(SMALL_ROLLOUT, SMALL_BACKBONE, seed=0)

    def test_zero_sigma_equals_clean(self):
        result = mc_accuracy(self.net, self.test, NoiseModel(0.0), num_samples=5, seed=0)
        self.assertEqual(result.mc_mean_accuracy, result.clean_accuracy)
        self.assertEqual(result.mc_std, 0.0)

    def test_samples_and_determinism(self):
        a = mc_accuracy(self.net, self.test, NoiseModel(0.3), num_samples=6, seed=4)
        b = mc_accuracy(self.net, self.test, NoiseModel(0.3), num_samples=6, seed=4)
        self.assertEqual(a, b)
        self.assertEqual(a.samples, b.samples)
        self.assertEqual(len(a.samples), 6)
        self.assertTrue(all(0.0 <= s <= 1.0 for s in a.samples))
        self.assertAlmostEqual(a.mc_mean_accuracy, float(np.mean(a.samples)))

    def test_spread_grows_with_sigma(self):
        _, test = make_synthetic_split(num_classes=2, image_size=8, train_per_class=1, test_per_class=128, seed=0)
        spreads = [np.mean([mc_accuracy(self.net, test, NoiseModel(sigma), num_samples=30, seed=seed).mc_std
                            for seed in range(3)])
                   for sigma in (0.0, 0.05, 0.1)]
        self.assertEqual(spreads[0], 0.0)
        self.assertGreater(spreads[1], 0.0)
        self.assertLess(spreads[1], spreads[2])

    def test_needs_a_sample(self):
        with self.assertRaises(ValueError):
            mc_accuracy(self.net, self.test, NoiseModel(0.1), num_samples=0)


class TestNoiseInjectionBenefit(unittest.TestCase):
    def test_noise_training_beats_vanilla_under_variation(self):
        backbone = Backbone(num_conv_layers=2, num_fc_layers=2, fc_hidden_size=8,
                            input_shape=(8, 8, 3), num_classes=4, pool_after=(0, 1))
        rollout = Rollout(((4, 3), (4, 3)), HW)
        noise = NoiseModel(0.1)
        means = {0.0: [], 0.1: []}
        for seed in range(5):
            train, test = make_synthetic_split(num_classes=4, image_size=8, train_per_class=64,
                                               test_per_class=64, seed=seed)
            net = build_network(rollout, backbone, seed=seed)
            for sigma in means:
                trained = train_noise_injection(net, train, NoiseModel(sigma), epochs=20, lr=0.02, seed=seed)
                means[sigma].append(mc_accuracy(trained, test, noise, num_samples=30, seed=seed).mc_mean_accuracy)
        self.assertGreater(np.mean(means[0.1]), np.mean(means[0.0]))


if __name__ == "__main__":
    unittest.main()
